"""Coefficient tensor completion from body and arm estimates.

The fit proceeds in three steps: per-group least squares on the observed
blocks, spectral selection of per-mode ranks and bases, then one linear
solve per mode that transports the body coefficients out along each arm.
The result is a completed coefficient tensor covering every group in the
space, including combinations with no samples at all.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConditioningError, DimensionError
from .patterns import _insert, pattern_from_config, pattern_to_config
from .regression import fit_all
from .spectral import spectral_step, tail_floor
from .tensor import DenseTensor, load_tensor, mode_product, save_tensor, \
    tucker_assemble

# conditioning limit for the per-mode transport systems
LOADING_COND_LIMIT = 1e10


@dataclass
class CompletionModel:
    """Fitted completion: per-mode bases and loadings plus the full tensor."""

    pattern: object
    ranks: tuple
    bases: list
    loadings: list
    core: DenseTensor
    tensor: DenseTensor
    diagnostics: dict

    @property
    def p(self):
        return self.tensor.dims[0]

    def coefficient(self, group):
        """Coefficient vector for one group, observed or not."""
        group = tuple(int(i) for i in group)
        if len(group) != self.pattern.q:
            raise DimensionError(
                f"group {group} has {len(group)} coords, expected {self.pattern.q}")
        for i, p in zip(group, self.pattern.space):
            if not 1 <= i <= p:
                raise DimensionError(f"group {group} outside the space")
        return self.tensor.array[(slice(None),) + tuple(i - 1 for i in group)].copy()

    def predict(self, group, x):
        x = np.asarray(x, dtype=float)
        coef = self.coefficient(group)
        if x.shape[-1] != coef.size:
            raise DimensionError(
                f"feature dim {x.shape[-1]} does not match p={coef.size}")
        return x @ coef


def coefficient(model, group):
    return model.coefficient(group)


def predict(model, group, x):
    return model.predict(group, x)


def _stack_columns(fits, csets, t, levels):
    cols = [np.concatenate([fits[_insert(rest, t, lev)].coef
                            for rest in csets])
            for lev in levels]
    return np.column_stack(cols)


def unfold_blocks(est, pattern, t):
    """Stacked estimate blocks used by the mode-t transport solve.

    Returns (joint fold-1, joint fold-2, target fold-2). For t >= 1 the
    joint blocks stack the arm tuples against body levels and the target
    block spans all levels of mode t; rows are arm tuples crossed with the
    coefficient index, in a fixed lexicographic order shared by all three.
    Mode 0 returns the observed-group coefficient stacks, where the target
    equals the joint block.
    """
    if t == 0:
        order = pattern.observed_list()
        b_tilde = np.vstack([est.tilde[g].coef for g in order])
        b_ring = np.vstack([est.ring[g].coef for g in order])
        return b_tilde, b_ring, b_ring
    if not 1 <= t <= pattern.q:
        raise ValueError(f"mode {t} out of range 0..{pattern.q}")
    arms = pattern.arm_tuples(t)
    body_levels = pattern.body[t - 1]
    all_levels = range(1, pattern.space[t - 1] + 1)
    return (_stack_columns(est.tilde, arms, t, body_levels),
            _stack_columns(est.ring, arms, t, body_levels),
            _stack_columns(est.ring, arms, t, all_levels))


def estimate_loading(t, b_jo_tilde, b_jo_ring, b_target, basis):
    """Solve the mode-t transport system on the selected basis.

    Returns the loading matrix (rank x target dim) and the condition
    number of the inner system.
    """
    inner = basis.T @ b_jo_tilde.T @ b_jo_ring @ basis
    cond = float(np.linalg.cond(inner))
    if not np.isfinite(cond) or cond > LOADING_COND_LIMIT:
        raise ConditioningError(
            f"mode {t}: transport system condition {cond:.2e} exceeds "
            f"{LOADING_COND_LIMIT:.0e}", where=t)
    rhs = basis.T @ b_jo_tilde.T @ b_target
    return np.linalg.solve(inner, rhs), cond


def _body_tensor(est, pattern, p):
    dims = (p,) + tuple(len(levels) for levels in pattern.body)
    arr = np.empty(dims)
    for idx in np.ndindex(dims[1:]):
        g = tuple(levels[i] for levels, i in zip(pattern.body, idx))
        arr[(slice(None),) + idx] = est.ring[g].coef
    return DenseTensor(arr)


def fit_tensordg(ds, pattern, split=False, seed=0, threshold_c=None,
                 rank_override=None, keep_observed_ols=False):
    """Fit the completion estimator on an observed-pattern dataset.

    split enables the 50/50 sample split between the spectral and
    transport steps (off by default; the no-split variant uses every
    sample twice and is the stronger finite-sample choice). threshold_c
    picks the rank selector: None (default) uses the noise-floor rule,
    a float uses the concentration-bound threshold with that constant.
    rank_override bypasses rank selection with fixed per-mode ranks.
    """
    est = fit_all(ds, pattern, split=split, seed=seed)
    spectra = spectral_step(est, pattern, c=threshold_c,
                            rank_override=rank_override)
    p = ds.p
    loadings, conds = [], []
    for t in range(pattern.q + 1):
        blocks = unfold_blocks(est, pattern, t)
        loading, cond = estimate_loading(t, *blocks, spectra[t].basis)
        loadings.append(loading)
        conds.append(cond)

    body = _body_tensor(est, pattern, p)
    core = body
    for t, spec in enumerate(spectra):
        core = mode_product(core, spec.basis, t)
    completed = tucker_assemble(core, loadings)

    warnings = [f"mode {s.mode}: rank floored to 1" for s in spectra
                if s.floored]
    diagnostics = {
        "spectral": [s.summary() for s in spectra],
        "loading_condition_numbers": conds,
        "generalizability": diagnose_generalizability(est, pattern),
        "split": bool(split),
        "n_bar": est.n_bar,
        "warnings": warnings,
    }

    if keep_observed_ols:
        arr = np.array(completed.array)
        for g in pattern.observed_list():
            arr[(slice(None),) + tuple(i - 1 for i in g)] = est.ring[g].coef
        completed = DenseTensor(arr)
        diagnostics["observed_fibers"] = "fold-2 ols"

    return CompletionModel(pattern, tuple(s.rank for s in spectra),
                           [s.basis for s in spectra], loadings, core,
                           completed, diagnostics)


def _corrected_gram_eigs(fits, arms, t, levels):
    """Eigenvalues of the bias-corrected Gram of arm-stacked columns."""
    levels = list(levels)
    cols, diag = [], np.zeros(len(levels))
    for j, lev in enumerate(levels):
        stack = []
        for rest in arms:
            fit = fits[_insert(rest, t, lev)]
            stack.append(fit.coef)
            diag[j] += np.trace(np.linalg.inv(fit.gram)) * fit.sigma2 / fit.n
        cols.append(np.concatenate(stack))
    mat = np.column_stack(cols)
    gram = (mat.T @ mat - np.diag(diag)) / len(arms)
    gram = (gram + gram.T) / 2.0
    return np.linalg.eigvalsh(gram)[::-1]


# Floor multipliers for the two diagnostic blocks. The arm Gram spans all
# group levels, so its corrected tail spreads wider on the positive side
# than the body-level joint Gram's and needs a larger multiple to stay
# below the floor under noise.
DIAG_FLOOR_JOINT = 2.0
DIAG_FLOOR_ARM = 4.5


def _floor_count(eigenvalues, multiplier):
    if eigenvalues.size < 2:
        return 1
    lam = tail_floor(eigenvalues, multiplier)
    return max(int(np.sum(eigenvalues >= lam)), 1)


def diagnose_generalizability(est, pattern):
    """Compare joint-block and arm-block ranks mode by mode.

    The completion is only identified when, for every mode, the arm block
    spans no more directions than the joint block already shows. Both
    blocks are reduced to bias-corrected Grams whose ranks come from the
    noise-floor rule, each with a floor calibrated to its own tail
    geometry. Any mode where the ranks disagree flags the fit as
    inconsistent.
    """
    modes = []
    ok = True
    for t in range(1, pattern.q + 1):
        arms = pattern.arm_tuples(t)
        body_levels = pattern.body[t - 1]
        joint_eig = _corrected_gram_eigs(est.tilde, arms, t, body_levels)
        arm_eig = _corrected_gram_eigs(est.tilde, arms, t,
                                       range(1, pattern.space[t - 1] + 1))
        joint_rank = _floor_count(joint_eig, DIAG_FLOOR_JOINT)
        arm_rank = _floor_count(arm_eig, DIAG_FLOOR_ARM)
        agree = joint_rank == arm_rank
        ok = ok and agree
        modes.append({
            "mode": t,
            "joint_rank": int(joint_rank),
            "arm_rank": int(arm_rank),
            "joint_eigenvalues": [float(v) for v in joint_eig],
            "arm_eigenvalues": [float(v) for v in arm_eig],
            "consistent": bool(agree),
        })
    return {"consistent": bool(ok), "modes": modes}


def save_model(model, path):
    """Write the completed tensor as text plus a JSON sidecar at path.json."""
    save_tensor(model.tensor, path)
    sidecar = {
        "pattern": pattern_to_config(model.pattern),
        "ranks": [int(r) for r in model.ranks],
        "bases": [b.tolist() for b in model.bases],
        "loadings": [l.tolist() for l in model.loadings],
        "core_dims": [int(d) for d in model.core.dims],
        "core": [float(v) for v in model.core.ravel()],
        "diagnostics": model.diagnostics,
    }
    with open(str(path) + ".json", "w") as fh:
        json.dump(sidecar, fh)
        fh.write("\n")


def load_model(path):
    tensor = load_tensor(path)
    with open(str(path) + ".json") as fh:
        sidecar = json.load(fh)
    pattern = pattern_from_config(sidecar["pattern"])
    core = DenseTensor.from_flat(sidecar["core_dims"], sidecar["core"])
    return CompletionModel(
        pattern, tuple(sidecar["ranks"]),
        [np.array(b) for b in sidecar["bases"]],
        [np.array(l) for l in sidecar["loadings"]],
        core, tensor, sidecar["diagnostics"])

"""Comparison estimators: single-task OLS, Maximin, and Meta-LM*.

Each baseline produces a p-vector for a target group from the same raw
ingredients the completion pipeline uses:

* ``single_task_ols`` fits the target group's own samples and nothing
  else.
* ``maximin`` aggregates the per-group estimates into the convex
  combination whose pooled-design prediction risk is smallest in the
  worst case, following the convex-hull characterization: minimize
  w' G w over the probability simplex, with G_{gh} = b_g' S b_h for the
  pooled second-moment matrix S.
* ``meta_lm_star`` learns the shared coefficient subspace (mode-0 basis
  of the bias-corrected Gram) from the source groups, then regresses the
  target response on the target design projected into that subspace.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, DimensionError
from .regression import GroupEstimates, ols_fit
from .spectral import mode_gram, noise_floor_rank, select_rank

__all__ = ["BaselineEstimate", "single_task_ols", "project_simplex",
           "pooled_gram", "maximin", "meta_lm_star"]

MAXIMIN_TOL = 1e-8
MAXIMIN_MAX_ITER = 200_000


@dataclass(frozen=True)
class BaselineEstimate:
    """A baseline's answer for one target: method tag, p-vector, extras."""

    method: str
    coef: np.ndarray
    metadata: dict = field(default_factory=dict)


def single_task_ols(ds, g):
    """OLS coefficient vector fitted on group g's samples alone."""
    g = tuple(int(i) for i in g)
    if g not in ds.groups:
        raise DimensionError(f"group {g} not present in the dataset")
    X, y = ds.groups[g]
    return ols_fit(X, y)[0]


def project_simplex(v):
    """Euclidean projection of a vector onto the probability simplex."""
    v = np.asarray(v, dtype=float).ravel()
    if v.size == 0:
        raise DimensionError("cannot project an empty vector")
    u = np.sort(v)[::-1]
    cumulative = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    mask = u - cumulative / idx > 0
    rho = int(idx[mask][-1])
    theta = cumulative[rho - 1] / rho
    return np.maximum(v - theta, 0.0)


def pooled_gram(ds):
    """Sample-size weighted average of the per-group design Grams.

    Equals X'X / N for the row-stacked design over every group.
    """
    if not ds.groups:
        raise DimensionError("empty dataset")
    p = ds.p
    total = np.zeros((p, p))
    n_total = 0
    for g in sorted(ds.groups):
        X, _ = ds.groups[g]
        total += X.T @ X
        n_total += X.shape[0]
    return total / n_total


def _coef_matrix(estimates):
    """Stack per-group coefficient vectors as columns, sorted by group."""
    if isinstance(estimates, GroupEstimates):
        coefs = {g: fit.coef for g, fit in estimates.tilde.items()}
    else:
        coefs = {tuple(g): np.asarray(b, dtype=float)
                 for g, b in dict(estimates).items()}
    if not coefs:
        raise DimensionError("no source estimates to aggregate")
    order = sorted(coefs)
    return np.column_stack([coefs[g] for g in order]), order


def maximin(estimates, pooled, tol=MAXIMIN_TOL, max_iter=MAXIMIN_MAX_ITER,
            history=None):
    """Worst-case-optimal convex combination of per-group estimates.

    Solves min over the probability simplex of w' G w with
    G_{gh} = b_g' S b_h by projected gradient descent at the safe step
    1 / (2 lambda_max(G)), stopping when successive weight vectors agree
    to ``tol`` in the max norm. Returns (coefficient vector, weights).
    ``history``, when a list, collects the objective value per iterate.
    """
    basis, _ = _coef_matrix(estimates)
    pooled = np.asarray(pooled, dtype=float)
    p, m = basis.shape
    if pooled.shape != (p, p):
        raise DimensionError(
            f"pooled Gram shape {pooled.shape} does not match p={p}")
    gram = basis.T @ pooled @ basis
    gram = (gram + gram.T) / 2.0
    w = np.full(m, 1.0 / m)
    lam_max = float(np.linalg.eigvalsh(gram)[-1])
    if history is not None:
        history.append(float(w @ gram @ w))
    if lam_max <= 0.0:
        return basis @ w, w
    step = 1.0 / (2.0 * lam_max)
    for _ in range(max_iter):
        w_next = project_simplex(w - step * 2.0 * (gram @ w))
        if history is not None:
            history.append(float(w_next @ gram @ w_next))
        if np.max(np.abs(w_next - w)) <= tol:
            return basis @ w_next, w_next
        w = w_next
    raise ConvergenceError(
        f"maximin weights did not stabilize in {max_iter} iterations")


def meta_lm_star(est, pattern, X, y, c=None):
    """Shared-subspace regression for a target group.

    Learns the mode-0 basis V0 from the source groups' bias-corrected
    Gram (noise-floor rank rule by default, concentration threshold with
    constant ``c`` when given), then returns V0 times the OLS fit of y
    on X V0. The output therefore lies in the span of V0.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] != y.size:
        raise DimensionError(
            f"target design {X.shape} does not match {y.size} responses")
    gram = mode_gram(est, pattern, 0)
    if X.shape[1] != gram.shape[0]:
        raise DimensionError(
            f"target has {X.shape[1]} features, sources have {gram.shape[0]}")
    if c is None:
        spec = noise_floor_rank(gram, True)
    else:
        spec = select_rank(gram, est.n_bar, len(pattern.observed), c)
    basis = spec.basis
    if y.size <= spec.rank:
        raise DimensionError(
            f"need more target samples than the subspace dim {spec.rank}")
    score = ols_fit(X @ basis, y)[0]
    return basis @ score

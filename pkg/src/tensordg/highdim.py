"""High-dimensional extension: joint support selection, then completion.

When the feature dimension exceeds the per-group sample sizes, the
pipeline first estimates a common sparse support across the observed
groups with a group-Lasso penalty that couples each coordinate across
groups:

    minimize (1/N) sum_g ||y_g - X_g b_g||^2
             + lam * sum_j sqrt(sum_g b_{g,j}^2)

(N = total sample count). Coordinates whose cross-group row norm reaches
``lam`` form the support estimate; the completion pipeline then runs on
those columns alone, and the result is embedded back into the full
space with zero rows elsewhere.
"""

import math
from dataclasses import dataclass

import numpy as np

from .completion import CompletionModel, fit_tensordg
from .errors import ConvergenceError, DimensionError
from .regression import GroupedDataset
from .tensor import DenseTensor

__all__ = ["SupportSelection", "group_lasso", "group_lasso_kkt",
           "select_support", "choose_lambda", "fit_highdim"]

GROUP_LASSO_TOL = 1e-14
GROUP_LASSO_MAX_ITER = 100_000
LAMBDA_GRID_SIZE = 20
LAMBDA_GRID_SPAN = 100.0


@dataclass(frozen=True)
class SupportSelection:
    """Joint support estimate: per-group coefficients, support, penalty."""

    beta: dict
    support: tuple
    lam: float


def _stack(ds):
    order = sorted(ds.groups)
    if not order:
        raise DimensionError("empty dataset")
    designs = [np.asarray(ds.groups[g][0], dtype=float) for g in order]
    responses = [np.asarray(ds.groups[g][1], dtype=float).ravel()
                 for g in order]
    n_total = sum(y.size for y in responses)
    return order, designs, responses, n_total


def _smooth_value(designs, responses, mat, n_total):
    total = 0.0
    for k, (X, y) in enumerate(zip(designs, responses)):
        r = y - X @ mat[:, k]
        total += float(r @ r)
    return total / n_total


def _smooth_grad(designs, responses, mat, n_total):
    grad = np.empty_like(mat)
    for k, (X, y) in enumerate(zip(designs, responses)):
        grad[:, k] = 2.0 * (X.T @ (X @ mat[:, k] - y)) / n_total
    return grad


def _row_prox(mat, threshold):
    norms = np.linalg.norm(mat, axis=1)
    scale = np.zeros_like(norms)
    nz = norms > threshold
    scale[nz] = 1.0 - threshold / norms[nz]
    return mat * scale[:, None]


def group_lasso(ds, lam, tol=GROUP_LASSO_TOL, max_iter=GROUP_LASSO_MAX_ITER,
                init=None, history=None):
    """Row-sparse multi-group regression by proximal gradient descent.

    Each iteration takes a gradient step on the pooled quadratic loss
    and applies the row soft-threshold prox; the step size starts at 1
    and halves until the standard sufficient-decrease condition holds.
    Stops when the relative objective change over a step falls below
    ``tol``. Returns {group: p-vector}. ``init`` warm-starts from a
    previous solution map; ``history`` collects objective values.
    """
    if not lam > 0:
        raise ValueError(f"penalty must be positive, got {lam}")
    order, designs, responses, n_total = _stack(ds)
    p = ds.p
    mat = np.zeros((p, len(order)))
    if init is not None:
        for k, g in enumerate(order):
            if g in init:
                mat[:, k] = np.asarray(init[g], dtype=float)

    def objective(m):
        return (_smooth_value(designs, responses, m, n_total)
                + lam * float(np.linalg.norm(m, axis=1).sum()))

    obj = objective(mat)
    if history is not None:
        history.append(obj)
    for _ in range(max_iter):
        grad = _smooth_grad(designs, responses, mat, n_total)
        smooth = _smooth_value(designs, responses, mat, n_total)
        step = 1.0
        while True:
            cand = _row_prox(mat - step * grad, step * lam)
            diff = cand - mat
            quad = smooth + float(np.sum(grad * diff)) \
                + float(np.sum(diff * diff)) / (2.0 * step)
            if _smooth_value(designs, responses, cand, n_total) \
                    <= quad + 1e-15:
                break
            step /= 2.0
            if step < 1e-20:
                raise ConvergenceError(
                    "backtracking step underflow in group lasso")
        new_obj = objective(cand)
        if history is not None:
            history.append(new_obj)
        mat = cand
        if abs(obj - new_obj) < tol * max(1.0, abs(obj)):
            return {g: mat[:, k].copy() for k, g in enumerate(order)}
        obj = new_obj
    raise ConvergenceError(
        f"group lasso did not converge in {max_iter} iterations",
        residual=group_lasso_kkt(ds, {g: mat[:, k]
                                      for k, g in enumerate(order)}, lam))


def group_lasso_kkt(ds, beta, lam):
    """Stationarity residual of a candidate group-lasso solution.

    Zero rows must have smooth-gradient row norm at most ``lam``; active
    rows must satisfy grad_row + lam * row / ||row|| = 0.
    """
    order, designs, responses, n_total = _stack(ds)
    mat = np.column_stack([np.asarray(beta[g], dtype=float) for g in order])
    grad = _smooth_grad(designs, responses, mat, n_total)
    norms = np.linalg.norm(mat, axis=1)
    worst = 0.0
    for j in range(mat.shape[0]):
        if norms[j] > 0.0:
            res = np.linalg.norm(grad[j] + lam * mat[j] / norms[j])
        else:
            res = max(np.linalg.norm(grad[j]) - lam, 0.0)
        worst = max(worst, float(res))
    return worst


def select_support(beta, lam):
    """Coordinates whose cross-group row norm reaches the penalty level.

    Returns the sorted tuple of 0-based indices j with
    sqrt(sum_g beta_{g,j}^2) >= lam.
    """
    mat = np.column_stack([np.asarray(b, dtype=float)
                           for _, b in sorted(dict(beta).items())])
    if not np.all(np.isfinite(mat)):
        raise ValueError("coefficients must be finite")
    norms = np.linalg.norm(mat, axis=1)
    return tuple(int(j) for j in np.flatnonzero(norms >= lam))


def lambda_grid(ds):
    """Geometric penalty grid from the all-zero point down two decades.

    The top value is the smallest penalty at which the zero solution is
    stationary: the largest row norm of the smooth gradient at zero.
    """
    order, designs, responses, n_total = _stack(ds)
    grad0 = _smooth_grad(designs, responses,
                         np.zeros((ds.p, len(order))), n_total)
    lam_max = float(np.linalg.norm(grad0, axis=1).max())
    if lam_max <= 0.0:
        raise DimensionError("all responses are zero; nothing to select")
    return np.geomspace(lam_max, lam_max / LAMBDA_GRID_SPAN, LAMBDA_GRID_SIZE)


def choose_lambda(ds, lambdas=None, holdout=0.2, seed=0, rule="1se",
                  tol=GROUP_LASSO_TOL, max_iter=GROUP_LASSO_MAX_ITER):
    """Penalty chosen by pooled holdout loss along a warm-started path.

    Splits every group with a seeded permutation (at least one row held
    out per group), fits the path from the largest penalty down, and
    scores each solution by the pooled squared prediction error on the
    held-out rows. ``rule`` is "min" for the loss minimizer or "1se"
    (default) for the one-standard-error convention: the largest penalty
    whose mean holdout loss stays within one standard error of the
    minimum, which favors sparser solutions on flat loss curves.
    """
    if not 0.0 < holdout < 1.0:
        raise ValueError(f"holdout fraction must be in (0,1), got {holdout}")
    if rule not in ("min", "1se"):
        raise ValueError(f"unknown selection rule {rule!r}")
    rng = np.random.default_rng(int(seed))
    train, valid = {}, {}
    for g in sorted(ds.groups):
        X, y = ds.groups[g]
        n = y.size
        n_hold = max(int(round(holdout * n)), 1)
        if n_hold >= n:
            raise DimensionError(f"group {g} too small to hold out from")
        perm = rng.permutation(n)
        hold, keep = perm[:n_hold], perm[n_hold:]
        train[g] = (X[keep], y[keep])
        valid[g] = (X[hold], y[hold])
    train_ds = GroupedDataset(train)
    if lambdas is None:
        lambdas = lambda_grid(train_ds)
    lambdas = sorted((float(l) for l in lambdas), reverse=True)
    means, warm = [], None
    sq_errors = []
    for lam in lambdas:
        warm = group_lasso(train_ds, lam, tol=tol, max_iter=max_iter,
                           init=warm)
        sq = np.concatenate([(yv - Xv @ warm[g]) ** 2
                             for g, (Xv, yv) in sorted(valid.items())])
        sq_errors.append(sq)
        means.append(float(sq.mean()))
    best = int(np.argmin(means))
    if rule == "min":
        return lambdas[best]
    sq = sq_errors[best]
    se = float(sq.std(ddof=1) / math.sqrt(sq.size)) if sq.size > 1 else 0.0
    cutoff = means[best] + se
    for lam, mean in zip(lambdas, means):
        if mean <= cutoff:
            return lam
    return lambdas[best]


def fit_highdim(ds, pattern, lam=None, threshold=None, support=None,
                split=False, seed=0, threshold_c=None, rank_override=None,
                tol=GROUP_LASSO_TOL, max_iter=GROUP_LASSO_MAX_ITER):
    """Support selection followed by completion on the selected columns.

    Runs the group lasso at ``lam`` (chosen by holdout validation when
    omitted), thresholds row norms at ``threshold`` (defaults to the
    same ``lam``), fits the completion pipeline on the selected columns,
    and embeds the result into the full feature space with zero rows off
    the support. A known ``support`` (0-based column indices) skips the
    selection stage entirely. The selection is recorded in
    model.diagnostics.
    """
    if support is not None:
        support = tuple(sorted(int(j) for j in support))
        lam = float(lam) if lam is not None else 0.0
    else:
        if lam is None:
            lam = choose_lambda(ds, seed=seed, tol=tol, max_iter=max_iter)
        beta = group_lasso(ds, lam, tol=tol, max_iter=max_iter)
        support = select_support(beta,
                                 lam if threshold is None else threshold)
    if not support:
        raise DimensionError(f"no coordinate survived the penalty {lam}")
    min_n = min(y.size for _, y in ds.groups.values())
    if len(support) >= min_n:
        raise DimensionError(
            f"support size {len(support)} is not below the smallest group "
            f"sample count {min_n}")
    sub = fit_tensordg(ds.restrict_columns(list(support)), pattern,
                       split=split, seed=seed, threshold_c=threshold_c,
                       rank_override=rank_override)
    p = ds.p
    rows = np.asarray(support, dtype=int)

    def embed_tensor(sub_tensor):
        full = np.zeros((p,) + sub_tensor.dims[1:])
        full[rows] = sub_tensor.array
        return DenseTensor(full)

    basis0 = np.zeros((p, sub.ranks[0]))
    basis0[rows] = sub.bases[0]
    # loadings map core rows to output coordinates: shape (rank, dim)
    loading0 = np.zeros((sub.ranks[0], p))
    loading0[:, rows] = sub.loadings[0]
    diagnostics = dict(sub.diagnostics)
    diagnostics["support"] = support
    diagnostics["lambda"] = float(lam)
    return CompletionModel(
        pattern=sub.pattern,
        ranks=sub.ranks,
        bases=[basis0] + list(sub.bases[1:]),
        loadings=[loading0] + list(sub.loadings[1:]),
        core=sub.core,
        tensor=embed_tensor(sub.tensor),
        diagnostics=diagnostics)

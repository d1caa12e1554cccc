"""Per-group least squares fits and the optional sample split."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConditioningError, DimensionError

# Gram matrices with smaller relative eigenvalues than this are treated as
# singular rather than solved.
GRAM_EIGENVALUE_FLOOR = 1e-10


@dataclass(frozen=True)
class GroupFit:
    """OLS output for one group: coefficients, Gram X'X/n, noise estimate."""

    coef: np.ndarray
    gram: np.ndarray
    sigma2: float
    n: int


@dataclass
class GroupedDataset:
    """Samples keyed by group tuple; every group shares the feature dim."""

    groups: dict = field(default_factory=dict)

    def __post_init__(self):
        p = None
        norm = {}
        for g, (X, y) in self.groups.items():
            X = np.asarray(X, dtype=float)
            y = np.asarray(y, dtype=float).ravel()
            if X.ndim != 2 or X.shape[0] != y.size or X.shape[0] < 1:
                raise DimensionError(
                    f"group {g}: design {X.shape} does not match {y.size} responses")
            if p is None:
                p = X.shape[1]
            elif X.shape[1] != p:
                raise DimensionError(
                    f"group {g}: feature dim {X.shape[1]} != {p}")
            norm[tuple(int(i) for i in g)] = (X, y)
        self.groups = norm

    @property
    def p(self):
        if not self.groups:
            raise DimensionError("empty dataset")
        return next(iter(self.groups.values()))[0].shape[1]

    def n_samples(self, g):
        return self.groups[tuple(g)][1].size

    def subset(self, keep):
        keep = set(tuple(g) for g in keep)
        return GroupedDataset({g: xy for g, xy in self.groups.items()
                               if g in keep})

    def restrict_columns(self, cols):
        """Dataset with design columns limited to the given 0-based list."""
        cols = list(cols)
        return GroupedDataset({g: (X[:, cols], y)
                               for g, (X, y) in self.groups.items()})


def ols_fit(X, y):
    """Least squares via the normal equations with a pivoted solve.

    Returns (coef, gram, sigma2) where gram = X'X/n and sigma2 is the
    residual variance on n - p degrees of freedom.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    if n <= p:
        raise DimensionError(f"need n > p, got n={n}, p={p}")
    gram = X.T @ X / n
    eig = np.linalg.eigvalsh(gram)
    if eig[0] <= GRAM_EIGENVALUE_FLOOR * max(eig[-1], 0.0):
        raise ConditioningError(
            f"design Gram is numerically singular "
            f"(eigenvalue ratio {eig[0] / max(eig[-1], 1e-300):.2e})")
    coef = np.linalg.solve(gram, X.T @ y / n)
    rss = float(np.sum((y - X @ coef) ** 2))
    sigma2 = max(rss, 0.0) / (n - p)
    return coef, gram, sigma2


def split_sample(ds, seed):
    """Random 50/50 split of every group, sizes differing by at most one."""
    rng = np.random.default_rng(int(seed))
    fold1, fold2 = {}, {}
    for g in sorted(ds.groups):
        X, y = ds.groups[g]
        n = y.size
        perm = rng.permutation(n)
        half = n // 2
        a, b = perm[:half], perm[half:]
        fold1[g] = (X[a], y[a])
        fold2[g] = (X[b], y[b])
    return GroupedDataset(fold1), GroupedDataset(fold2)


@dataclass
class GroupEstimates:
    """Fold-wise per-group fits: tilde = fold 1, ring = fold 2."""

    tilde: dict
    ring: dict
    n_bar: float


def fit_all(ds, pattern, split=False, seed=0):
    """OLS fits for every observed group, on both folds when splitting.

    Without a split both folds alias the same full-sample fits. Errors
    from a singular group are re-raised with the group attached.
    """
    missing = [g for g in pattern.observed_list() if g not in ds.groups]
    if missing:
        raise DimensionError(f"dataset lacks observed groups {missing[:5]}")
    if split:
        fold1, fold2 = split_sample(ds, seed)
    else:
        fold1 = fold2 = ds

    def run(fold):
        fits = {}
        for g in pattern.observed_list():
            X, y = fold.groups[g]
            try:
                coef, gram, sigma2 = ols_fit(X, y)
            except ConditioningError as exc:
                raise ConditioningError(str(exc), where=g) from exc
            fits[g] = GroupFit(coef, gram, sigma2, y.size)
        return fits

    tilde = run(fold1)
    ring = tilde if not split else run(fold2)
    n_bar = float(np.mean([fit.n for fit in tilde.values()]))
    return GroupEstimates(tilde, ring, n_bar)

"""Spectral rank and basis selection from per-group OLS estimates.

For each mode the stacked coefficient estimates form a Gram matrix whose
noise bias is removed with a plug-in correction; ranks are chosen by
thresholding eigenvalues and the leading eigenvectors give the column
space basis used by the completion step.
"""

import math
from dataclasses import dataclass

import numpy as np

from .patterns import _insert


@dataclass(frozen=True)
class ModeSpectrum:
    """Rank selection output for one mode."""

    mode: int
    gram: np.ndarray
    eigenvalues: np.ndarray
    rank: int
    basis: np.ndarray
    threshold: float
    block_size: int
    floored: bool

    def eigen_gap(self):
        """Smallest gap above the selected rank cut, lam_r - lam_{r+1}."""
        eig = self.eigenvalues
        padded = np.append(eig, 0.0)
        gaps = padded[:self.rank] - padded[1:self.rank + 1]
        return float(gaps.min())

    def summary(self):
        return {
            "mode": self.mode,
            "rank": self.rank,
            "threshold": float(self.threshold),
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "eigen_gap": self.eigen_gap(),
            "block_size": self.block_size,
            "rank_floored": self.floored,
        }


def _noise_scale(fit):
    # per-sample noise level entering the Gram bias
    return fit.sigma2 / fit.n


def mode_gram(est, pattern, t):
    """Bias-corrected second-moment matrix for mode t.

    Mode 0 stacks all observed-group estimates and subtracts the averaged
    inverse-Gram noise term; modes 1..q stack the C_t block columns by
    body level and subtract a diagonal trace correction.
    """
    fits = est.tilde
    if t == 0:
        rows = np.vstack([fits[g].coef for g in pattern.observed_list()])
        m = len(rows)
        gram = rows.T @ rows / m
        corr = np.zeros_like(gram)
        for g in pattern.observed_list():
            fit = fits[g]
            corr += np.linalg.inv(fit.gram) * _noise_scale(fit)
        gram -= corr / m
        return (gram + gram.T) / 2.0

    if not 1 <= t <= pattern.q:
        raise ValueError(f"mode {t} out of range 0..{pattern.q}")
    levels = pattern.body[t - 1]
    csets = pattern.cset_tuples(t)
    cols = []
    diag = np.zeros(len(levels))
    for j, lev in enumerate(levels):
        stack = []
        for rest in csets:
            fit = fits[_insert(rest, t, lev)]
            stack.append(fit.coef)
            diag[j] += np.trace(np.linalg.inv(fit.gram)) * _noise_scale(fit)
        cols.append(np.concatenate(stack))
    mat = np.column_stack(cols)
    size = len(csets)
    gram = (mat.T @ mat - np.diag(diag)) / size
    return (gram + gram.T) / 2.0


def _eig_desc(gram):
    eigval, eigvec = np.linalg.eigh(gram)
    return eigval[::-1], eigvec[:, ::-1]


def rank_threshold(spectral_norm, dim, n_bar, block_size, c=1.0):
    return c * math.sqrt(
        max(spectral_norm, 0.0) * (dim + math.log(n_bar))
        / (n_bar * block_size))


def select_rank(gram, n_bar, block_size, c=1.0):
    """Threshold-rule rank: count of eigenvalues at or above the cut.

    Returns a ModeSpectrum with mode unset (-1); spectral_step fills it.
    The rank is floored at one, flagged via ``floored``.
    """
    gram = np.asarray(gram, dtype=float)
    if not np.all(np.isfinite(gram)):
        raise ValueError("second-moment matrix has non-finite entries")
    eigval, eigvec = _eig_desc(gram)
    lam = rank_threshold(abs(eigval).max(initial=0.0), gram.shape[0],
                         n_bar, block_size, c)
    rank = int(np.sum(eigval >= lam))
    floored = rank < 1
    rank = max(rank, 1)
    return ModeSpectrum(-1, gram, eigval, rank, eigvec[:, :rank],
                        lam, block_size, floored)


def eigen_ratio_rank(eigenvalues, eps=1e-12):
    """Rank maximizing the ratio of consecutive eigenvalues.

    Eigenvalues are clamped below at eps; candidate ranks run from 1 to
    ceil(len/2).
    """
    eig = np.asarray(eigenvalues, dtype=float)
    if eig.size < 2:
        raise ValueError("need at least two eigenvalues")
    eig = np.maximum(eig, eps)
    top = math.ceil(eig.size / 2)
    ratios = eig[:top] / eig[1:top + 1]
    return int(np.argmax(ratios)) + 1


# Multipliers for the noise-floor threshold, calibrated on the reference
# design. The coefficient mode averages many more estimates than the group
# modes, so its corrected tail is tighter relative to its extremes and the
# floor needs a larger multiple of the tail scale.
FLOOR_SCALE_COEF = 3.4
FLOOR_SCALE_GROUP = 2.0


def tail_floor(eigenvalues, multiplier, robust=False):
    """Detection threshold estimated from the spectrum's own noise tail.

    The bottom half of a bias-corrected spectrum carries no signal when
    the rank is below ceil(dim/2), so its magnitudes estimate the noise
    level directly. The floor is a multiple of that scale (median when
    robust, mean otherwise) and never drops below a relative epsilon so
    that noiseless spectra with exact zero tails still threshold cleanly.
    """
    eig = np.asarray(eigenvalues, dtype=float)
    if eig.size < 2:
        raise ValueError("need at least two eigenvalues")
    tail = np.abs(eig[math.ceil(eig.size / 2):])
    center = np.median(tail) if robust else np.mean(tail)
    return max(multiplier * float(center),
               1e-8 * float(np.abs(eig).max(initial=0.0)))


def noise_floor(eigenvalues, coefficient_mode):
    """Per-mode default floor: calibrated multiples of the tail scale."""
    if coefficient_mode:
        return tail_floor(eigenvalues, FLOOR_SCALE_COEF, robust=True)
    return tail_floor(eigenvalues, FLOOR_SCALE_GROUP)


def noise_floor_rank(gram, coefficient_mode):
    """Rank selection with the data-driven noise-floor threshold.

    Counts eigenvalues at or above the floor; same return convention as
    select_rank. The tail-based floor implies a maximum detectable rank
    of ceil(dim/2), the same structural cap as eigen_ratio_rank.
    """
    gram = np.asarray(gram, dtype=float)
    if not np.all(np.isfinite(gram)):
        raise ValueError("second-moment matrix has non-finite entries")
    eigval, eigvec = _eig_desc(gram)
    lam = noise_floor(eigval, coefficient_mode)
    rank = int(np.sum(eigval >= lam))
    floored = rank < 1
    rank = max(rank, 1)
    return ModeSpectrum(-1, gram, eigval, rank, eigvec[:, :rank],
                        lam, 0, floored)


def spectral_step(est, pattern, c=None, rank_override=None):
    """ModeSpectrum for every mode 0..q.

    With c=None (the default) each rank comes from the noise-floor rule;
    a float c switches to the concentration-bound threshold with that
    constant. rank_override, when given, supplies one rank per mode and
    bypasses selection entirely (the basis is still the leading
    eigenvectors).
    """
    q = pattern.q
    if rank_override is not None and len(rank_override) != q + 1:
        raise ValueError(f"rank_override needs {q + 1} entries")
    out = []
    for t in range(q + 1):
        gram = mode_gram(est, pattern, t)
        size = len(pattern.observed) if t == 0 else len(pattern.cset_tuples(t))
        if c is None:
            spec = noise_floor_rank(gram, t == 0)
        else:
            spec = select_rank(gram, est.n_bar, size, c)
        if rank_override is not None:
            r = int(rank_override[t])
            if not 1 <= r <= gram.shape[0]:
                raise ValueError(f"rank {r} invalid for mode {t}")
            eigvec = _eig_desc(gram)[1]
            spec = ModeSpectrum(t, gram, spec.eigenvalues, r, eigvec[:, :r],
                                spec.threshold, size, False)
        else:
            spec = ModeSpectrum(t, gram, spec.eigenvalues, spec.rank,
                                spec.basis, spec.threshold, size,
                                spec.floored)
        out.append(spec)
    return out

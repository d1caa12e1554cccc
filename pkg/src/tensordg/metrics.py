"""Evaluation metrics for coefficient tensors and transfer estimates.

Three scalar errors summarize a fitted model against the truth:

* ``al2e``: root mean squared coefficient error over every group
  combination, ``||est - truth||_F / sqrt(|G|)`` where ``|G|`` is the
  number of group combinations (the product of the group-space sizes).
* ``adge``: the same root mean square restricted to the unobserved
  combinations, measuring how well the model generalizes to domains it
  never saw.
* ``tle``: Euclidean distance between an estimated target coefficient
  vector and the truth, for transfer tasks.
"""

import math

import numpy as np

from .errors import DimensionError
from .tensor import _as_array

__all__ = ["al2e", "adge", "tle"]


def _pair(estimate, truth):
    est = _as_array(estimate)
    tru = _as_array(truth)
    if est.shape != tru.shape:
        raise DimensionError(
            f"shape mismatch: estimate {est.shape} vs truth {tru.shape}")
    return est, tru


def al2e(estimate, truth):
    """Average l2 error over all group combinations.

    Both arguments are coefficient tensors of shape (p, p_1, ..., p_q);
    the result is the Frobenius norm of their difference divided by the
    square root of the number of group combinations.
    """
    est, tru = _pair(estimate, truth)
    n_groups = math.prod(est.shape[1:]) if est.ndim > 1 else 1
    return float(np.linalg.norm(est - tru) / math.sqrt(n_groups))


def adge(estimate, truth, pattern):
    """Average domain generalization error over unobserved combinations.

    Computes sqrt(sum over unobserved groups of the squared coefficient
    error, divided by the number of unobserved groups). Raises
    DimensionError when the pattern observes every combination.
    """
    est, tru = _pair(estimate, truth)
    if est.ndim != pattern.q + 1:
        raise DimensionError(
            f"tensor order {est.ndim} does not match pattern with q={pattern.q}")
    unseen = pattern.unobserved_list()
    if not unseen:
        raise DimensionError("pattern observes every group combination")
    total = 0.0
    for g in unseen:
        idx = (slice(None),) + tuple(i - 1 for i in g)
        diff = est[idx] - tru[idx]
        total += float(diff @ diff)
    return math.sqrt(total / len(unseen))


def tle(estimate, truth):
    """Transfer learning error: Euclidean distance between two vectors."""
    est = np.asarray(estimate, dtype=float)
    tru = np.asarray(truth, dtype=float)
    if est.shape != tru.shape or est.ndim != 1:
        raise DimensionError(
            f"expected matching vectors, got {est.shape} and {tru.shape}")
    return float(np.linalg.norm(est - tru))

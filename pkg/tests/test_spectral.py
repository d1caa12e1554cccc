"""Rank selection: corrected Grams, threshold rule, eigen-ratio rule."""

import math

import numpy as np
import pytest

from tensordg import (GroupedDataset, build_pattern, eigen_ratio_rank,
                      fit_all, mode_gram, select_rank, spectral_step,
                      tucker_assemble)
from tensordg.spectral import rank_threshold


def make_truth(rng, p, space, ranks, scale=1.0):
    core = rng.normal(size=ranks) * scale
    factors = [np.linalg.qr(rng.normal(size=(d, r)))[0].T
               for d, r in zip((p,) + space, ranks)]
    return tucker_assemble(core, factors)


def make_dataset(rng, truth, pattern, n, noise=1.0):
    groups = {}
    for g in pattern.observed_list():
        X = rng.normal(size=(n, truth.dims[0]))
        coef = truth.array[(slice(None),) + tuple(i - 1 for i in g)]
        y = X @ coef + noise * rng.normal(size=n)
        groups[g] = (X, y)
    return GroupedDataset(groups)


def test_threshold_formula_value():
    got = rank_threshold(2.0, 10, 100.0, 5, c=1.5)
    assert got == pytest.approx(1.5 * math.sqrt(2.0 * (10 + math.log(100.0))
                                                / (100.0 * 5)))


def test_eigen_ratio_frozen_cases():
    # trailing near-zeros clamp to eps, the big drop wins at k=1
    assert eigen_ratio_rank([5.0, 1e-15, 1e-16]) == 1
    # drop after the second value, k <= ceil(4/2) = 2
    assert eigen_ratio_rank([4.0, 2.5, 0.1, 0.01]) == 2
    # tie goes to the first candidate
    assert eigen_ratio_rank([9.0, 3.0, 1.0]) == 1
    # candidates stop at ceil(len/2): the big drop at k=3 is out of reach
    assert eigen_ratio_rank([4.0, 3.9, 3.9, 0.001]) == 1
    with pytest.raises(ValueError):
        eigen_ratio_rank([1.0])


def test_select_rank_counts_and_floor():
    gram = np.diag([3.0, 1.0, 0.2, 0.01])
    spec = select_rank(gram, n_bar=1e6, block_size=10, c=1.0)
    assert spec.rank == 4 and not spec.floored
    spec = select_rank(np.diag([1e-8, 1e-9]), n_bar=100.0, block_size=2, c=1.0)
    assert spec.rank == 1 and spec.floored
    with pytest.raises(ValueError, match="finite"):
        select_rank(np.array([[np.nan, 0.0], [0.0, 1.0]]), 10.0, 2)


def test_select_rank_basis_spans_leading_space():
    rng = np.random.default_rng(0)
    q_mat = np.linalg.qr(rng.normal(size=(6, 6)))[0]
    gram = q_mat @ np.diag([5.0, 2.0, 1e-12, 0, 0, 0]) @ q_mat.T
    spec = select_rank(gram, n_bar=1e4, block_size=20, c=1.0)
    assert spec.rank == 2
    proj = spec.basis @ spec.basis.T
    target = q_mat[:, :2] @ q_mat[:, :2].T
    assert np.allclose(proj, target, atol=1e-8)
    assert spec.eigen_gap() == pytest.approx(2.0, abs=1e-9)


def test_noiseless_grams_match_population_blocks():
    rng = np.random.default_rng(4)
    p, space, ranks = 8, (5, 4), (3, 2, 2)
    truth = make_truth(rng, p, space, ranks, scale=2.0)
    pattern = build_pattern(space, body=[(1, 2, 3), (1, 2, 3)],
                            arm_subsets=[[(1, 2)], [(1, 2)]])
    ds = make_dataset(rng, truth, pattern, n=60, noise=0.0)
    est = fit_all(ds, pattern)

    obs = pattern.observed_list()
    stack = np.vstack([truth.array[(slice(None),) + tuple(i - 1 for i in g)]
                       for g in obs])
    assert np.allclose(mode_gram(est, pattern, 0),
                       stack.T @ stack / len(obs), atol=1e-8)

    csets = pattern.cset_tuples(1)
    cols = []
    for lev in pattern.body[0]:
        cols.append(np.concatenate(
            [truth.array[(slice(None), lev - 1) + tuple(i - 1 for i in c)]
             for c in csets]))
    mat = np.column_stack(cols)
    assert np.allclose(mode_gram(est, pattern, 1),
                       mat.T @ mat / len(csets), atol=1e-8)


def test_noiseless_rank_recovery_with_default_threshold():
    rng = np.random.default_rng(7)
    p, space, ranks = 8, (5, 4), (3, 2, 2)
    truth = make_truth(rng, p, space, ranks, scale=8.0)
    pattern = build_pattern(space, body=[(1, 2, 3), (1, 2, 3)],
                            arm_subsets=[[(1, 2)], [(1, 2)]])
    ds = make_dataset(rng, truth, pattern, n=400, noise=0.0)
    est = fit_all(ds, pattern)
    spectra = spectral_step(est, pattern)
    assert tuple(s.rank for s in spectra) == ranks


def test_rank_override_bypasses_threshold():
    rng = np.random.default_rng(8)
    truth = make_truth(rng, 6, (4, 4), (2, 2, 2), scale=3.0)
    pattern = build_pattern((4, 4), body=[(1, 2, 3), (1, 2, 3)],
                            arm_subsets=[[(1, 2)], [(1, 2)]])
    ds = make_dataset(rng, truth, pattern, n=50, noise=0.0)
    est = fit_all(ds, pattern)
    spectra = spectral_step(est, pattern, rank_override=(4, 3, 2))
    assert [s.rank for s in spectra] == [4, 3, 2]
    assert spectra[0].basis.shape == (6, 4)
    with pytest.raises(ValueError):
        spectral_step(est, pattern, rank_override=(1, 1))


def test_bias_correction_centers_the_gram():
    """The subtracted noise term matches the actual OLS inflation.

    Monte Carlo over 500 replications of a two-group design: the mean of
    the corrected Gram should sit on the population Gram, while the raw
    stack Gram is visibly inflated on the diagonal.
    """
    rng = np.random.default_rng(9)
    p, n, reps = 6, 40, 500
    pattern = build_pattern((2,), body=[(1, 2)], arm_subsets=[[]])
    betas = {(1,): rng.normal(size=p), (2,): rng.normal(size=p)}
    target = np.column_stack([betas[(1,)], betas[(2,)]])
    pop = target.T @ target

    corrected, raw = [], []
    for _ in range(reps):
        groups = {}
        for g, coef in betas.items():
            X = rng.normal(size=(n, p))
            groups[g] = (X, X @ coef + rng.normal(size=n))
        est = fit_all(GroupedDataset(groups), pattern)
        corrected.append(mode_gram(est, pattern, 1))
        stack = np.column_stack([est.tilde[(1,)].coef, est.tilde[(2,)].coef])
        raw.append(stack.T @ stack)
    corrected = np.array(corrected)
    raw = np.array(raw)

    se = corrected.std(axis=0) / np.sqrt(reps)
    assert np.all(np.abs(corrected.mean(axis=0) - pop) < 4 * se + 1e-12)
    # raw diagonal inflation is the trace term, about p/(n-p) here
    inflation = np.diag(raw.mean(axis=0) - pop)
    assert np.all(inflation > 0.5 * p / (n - p))


def test_mode_gram_rejects_bad_mode():
    rng = np.random.default_rng(10)
    truth = make_truth(rng, 5, (3, 3), (2, 2, 2))
    pattern = build_pattern((3, 3), body=[(1, 2), (1, 2)],
                            arm_subsets=[[(1,)], [(1,)]])
    ds = make_dataset(rng, truth, pattern, n=30)
    est = fit_all(ds, pattern)
    with pytest.raises(ValueError):
        mode_gram(est, pattern, 3)


def test_tail_floor_frozen_values():
    """Hand-computed floors from small spectra.

    Bottom-half magnitudes: for six eigenvalues the tail is the last
    three; mean and median variants scale them by the multiplier; the
    relative epsilon takes over when the tail is exactly zero.
    """
    from tensordg.spectral import noise_floor, tail_floor

    ev = [10.0, 5.0, 1.0, 0.3, 0.2, 0.1]
    assert tail_floor(ev, 2.0) == pytest.approx(2.0 * 0.2)          # mean
    assert tail_floor(ev, 2.0, robust=True) == pytest.approx(0.4)   # median
    # negative tail entries count by magnitude
    assert tail_floor([4.0, 1.0, -0.5, -0.1], 1.0) == pytest.approx(0.3)
    # exact zero tail falls back to the relative epsilon
    assert tail_floor([7.0, 2.0, 0.0, 0.0], 3.0) == pytest.approx(7e-8)
    with pytest.raises(ValueError):
        tail_floor([1.0], 2.0)
    # mode-0 default is the robust variant at its own multiplier
    assert noise_floor(ev, True) == pytest.approx(3.4 * 0.2)
    assert noise_floor(ev, False) == pytest.approx(2.0 * 0.2)


def test_noise_floor_rank_noiseless_exact():
    """Noiseless spectra have exact-zero tails, so the floor
    rule recovers the true rank for every mode."""
    from tensordg.spectral import noise_floor_rank

    rng = np.random.default_rng(21)
    truth = make_truth(rng, 8, (5, 4), (3, 2, 2), scale=4.0)
    pattern = build_pattern((5, 4), body=[(1, 2, 3), (1, 2, 3)],
                            arm_subsets=[[(1, 2)], [(1, 2)]])
    ds = make_dataset(rng, truth, pattern, n=60, noise=0.0)
    est = fit_all(ds, pattern)
    for t, expect in ((0, 3), (1, 2), (2, 2)):
        spec = noise_floor_rank(mode_gram(est, pattern, t), t == 0)
        assert spec.rank == expect


def test_spectral_step_default_uses_noise_floor():
    """With c=None the per-mode thresholds equal the
    noise-floor values computed from the same Grams."""
    from tensordg.spectral import noise_floor

    rng = np.random.default_rng(22)
    truth = make_truth(rng, 8, (5, 4), (3, 2, 2), scale=4.0)
    pattern = build_pattern((5, 4), body=[(1, 2, 3), (1, 2, 3)],
                            arm_subsets=[[(1, 2)], [(1, 2)]])
    ds = make_dataset(rng, truth, pattern, n=120, noise=0.5)
    est = fit_all(ds, pattern)
    for t, spec in enumerate(spectral_step(est, pattern)):
        gram = mode_gram(est, pattern, t)
        eig = np.linalg.eigvalsh(gram)[::-1]
        assert spec.threshold == pytest.approx(noise_floor(eig, t == 0))

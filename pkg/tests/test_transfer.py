"""Tests for the sparse-offset transfer estimator."""

import math

import numpy as np
import pytest

from tensordg import (ConvergenceError, DimensionError, GroupedDataset,
                      build_pattern, cross_validate_lambda, default_lambda,
                      fit_tensordg, lasso_offset, ols_fit, tensortl,
                      tucker_assemble)


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


def objective(X, y, offset, delta, lam):
    resid = y - X @ (offset + delta)
    return float(resid @ resid) / y.size + lam * float(np.abs(delta).sum())


def test_lasso_full_shrinkage():
    """Penalty above twice the max absolute correlation kills
    every coordinate."""
    rng = np.random.default_rng(0)
    X = rng.normal(size=(25, 4))
    offset = rng.normal(size=4)
    y = X @ offset + rng.normal(size=25)
    r0 = y - X @ offset
    lam = 2.0 * float(np.max(np.abs(X.T @ r0))) / 25 + 1e-9
    assert np.array_equal(lasso_offset(X, y, offset, lam), np.zeros(4))


def test_lasso_orthonormal_closed_form():
    """With X'X/n = I each coordinate decouples:
    delta_j = soft_threshold(X_j' r0 / n, lam/2)."""
    rng = np.random.default_rng(1)
    n, p = 32, 5
    Q = np.linalg.qr(rng.normal(size=(n, p)))[0]
    X = Q * math.sqrt(n)
    offset = rng.normal(size=p)
    y = X @ (offset + np.array([0.8, 0.0, -0.4, 0.05, 0.0]))
    lam = 0.3
    corr = X.T @ (y - X @ offset) / n
    expect = np.sign(corr) * np.maximum(np.abs(corr) - lam / 2.0, 0.0)
    got = lasso_offset(X, y, offset, lam)
    assert np.allclose(got, expect, atol=1e-10)


def test_lasso_matches_grid_oracle():
    """p=2 instance: coordinate descent matches a fine lattice
    search of the objective."""
    rng = np.random.default_rng(2)
    X = rng.normal(size=(40, 2))
    offset = np.array([0.5, -0.2])
    y = X @ (offset + np.array([0.7, -0.3])) + 0.1 * rng.normal(size=40)
    lam = 0.25
    got = lasso_offset(X, y, offset, lam)

    # expand the objective as a quadratic in delta to scan the lattice
    # without materializing residual matrices
    r0 = y - X @ offset
    c0 = float(r0 @ r0) / 40
    a = X.T @ r0 / 40
    B = X.T @ X / 40
    grid = np.arange(-1.5, 1.5001, 0.001)
    d1, d2 = np.meshgrid(grid, grid, indexing="ij")
    d1, d2 = d1.ravel(), d2.ravel()
    objs = (c0 - 2.0 * (a[0] * d1 + a[1] * d2)
            + B[0, 0] * d1 ** 2 + 2.0 * B[0, 1] * d1 * d2
            + B[1, 1] * d2 ** 2 + lam * (np.abs(d1) + np.abs(d2)))
    best = int(np.argmin(objs))
    assert abs(objective(X, y, offset, got, lam) - objs[best]) <= 1e-3
    assert abs(got[0] - d1[best]) <= 2e-3
    assert abs(got[1] - d2[best]) <= 2e-3


def test_lasso_kkt_certificate():
    """Returned solution satisfies the stationarity conditions."""
    rng = np.random.default_rng(3)
    X = rng.normal(size=(60, 8))
    offset = rng.normal(size=8)
    delta_true = np.zeros(8)
    delta_true[[1, 4]] = [1.2, -0.9]
    y = X @ (offset + delta_true) + 0.2 * rng.normal(size=60)
    lam = 0.2
    delta = lasso_offset(X, y, offset, lam)
    resid = y - X @ (offset + delta)
    grad = 2.0 * (X.T @ resid) / 60
    for j in range(8):
        if delta[j] != 0.0:
            assert grad[j] == pytest.approx(lam * np.sign(delta[j]),
                                            abs=1e-6)
        else:
            assert abs(grad[j]) <= lam + 1e-6


def test_lasso_objective_non_increasing():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(50, 6))
    offset = np.zeros(6)
    y = X @ np.array([2.0, 0, -1.0, 0, 0.5, 0]) + rng.normal(size=50)
    history = []
    lasso_offset(X, y, offset, 0.1, history=history)
    assert np.all(np.diff(history) <= 1e-12)


def test_lasso_zero_column_stays_zero():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(30, 3))
    X[:, 1] = 0.0
    y = X @ np.array([1.0, 0.0, -2.0]) + 0.1 * rng.normal(size=30)
    delta = lasso_offset(X, y, np.zeros(3), 0.05)
    assert delta[1] == 0.0


def test_lasso_small_lambda_approaches_ols():
    """With lam near zero and n > p, predictions match the
    plain OLS fit."""
    rng = np.random.default_rng(6)
    X = rng.normal(size=(80, 5))
    y = X @ rng.normal(size=5) + 0.3 * rng.normal(size=80)
    offset = np.zeros(5)
    delta = lasso_offset(X, y, offset, 1e-10, tol=1e-12)
    ols = ols_fit(X, y)[0]
    assert np.max(np.abs(X @ delta - X @ ols)) <= 1e-4


def test_lasso_nonconvergence_carries_residual():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(40, 4))
    y = X @ np.array([3.0, -2.0, 1.0, 0.5]) + rng.normal(size=40)
    with pytest.raises(ConvergenceError) as err:
        lasso_offset(X, y, np.zeros(4), 0.01, max_iter=1)
    assert err.value.residual is not None and err.value.residual >= 0.0


def test_default_lambda_formula():
    """Pinned scale c0 sqrt(log p / n)."""
    assert default_lambda(300, 150) == pytest.approx(
        2.0 * math.sqrt(math.log(300) / 150))
    assert default_lambda(300, 150, c0=1.5) == pytest.approx(
        1.5 * math.sqrt(math.log(300) / 150))
    with pytest.raises(DimensionError):
        default_lambda(1, 10)


def test_cross_validate_lambda_deterministic():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(60, 6))
    offset = np.zeros(6)
    y = X @ np.array([1.5, 0, 0, -1.0, 0, 0]) + 0.3 * rng.normal(size=60)
    lam1 = cross_validate_lambda(X, y, offset, seed=3)
    lam2 = cross_validate_lambda(X, y, offset, seed=3)
    assert lam1 == lam2 and lam1 > 0


def fit_noiseless_model(rng):
    p, space, ranks = 8, (5, 4), (3, 2, 2)
    truth = make_truth(rng, p, space, ranks, scale=4.0)
    pattern = build_pattern(space, body=[(1, 2, 3), (1, 2, 3)],
                            arm_subsets=[[(1, 2)], [(1, 2)]])
    ds = make_dataset(rng, truth, pattern, n=40, noise=0.0)
    return truth, pattern, fit_tensordg(ds, pattern)


def test_tensortl_well_specified_noiseless():
    """Zero offset, noiseless everywhere: gamma_hat equals the
    target truth and delta_hat is identically zero."""
    rng = np.random.default_rng(9)
    truth, pattern, model = fit_noiseless_model(rng)
    g_star = (5, 4)
    gamma = truth.array[:, 4, 3]
    X = rng.normal(size=(30, 8))
    res = tensortl(model, g_star, X, X @ gamma)
    assert np.allclose(res.gamma_hat, gamma, atol=1e-7)
    assert np.array_equal(res.delta_hat, np.zeros(8))
    assert res.support == ()


def test_tensortl_additivity_and_shrinkage_limit():
    """gamma_hat = beta_hat + delta_hat exactly; a huge
    penalty returns the completed coefficient untouched."""
    rng = np.random.default_rng(10)
    truth, pattern, model = fit_noiseless_model(rng)
    g_star = (2, 3)
    beta_hat = model.coefficient(g_star)
    delta_true = np.zeros(8)
    delta_true[:3] = [0.5, -0.5, 0.25]
    X = rng.normal(size=(50, 8))
    y = X @ (beta_hat + delta_true) + 0.1 * rng.normal(size=50)

    res = tensortl(model, g_star, X, y, lam=0.05)
    assert np.array_equal(res.gamma_hat, beta_hat + res.delta_hat)
    assert res.support == tuple(np.flatnonzero(res.delta_hat))

    res_inf = tensortl(model, g_star, X, y, lam=1e6)
    assert np.array_equal(res_inf.gamma_hat, beta_hat)


def test_tensortl_recovers_sparse_offset():
    """A strong 3-sparse offset on a well-estimated base is
    picked up: support of delta_hat contains the planted coordinates."""
    rng = np.random.default_rng(11)
    truth, pattern, model = fit_noiseless_model(rng)
    g_star = (1, 1)
    beta = truth.array[:, 0, 0]
    delta_true = np.zeros(8)
    delta_true[[0, 3, 6]] = [1.0, -1.2, 0.9]
    X = rng.normal(size=(150, 8))
    y = X @ (beta + delta_true) + 0.5 * rng.normal(size=150)
    res = tensortl(model, g_star, X, y)
    assert {0, 3, 6} <= set(res.support)
    assert np.linalg.norm(res.gamma_hat - (beta + delta_true)) < 0.5

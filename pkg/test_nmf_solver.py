#!/usr/bin/env python3
"""
Tests for the multiplicative-update solver

Tests:
1. Objective and single updates (fixed point, zero locking, monotonicity)
2. Column normalization leaves XΘ unchanged
3. Full fits: monotone traces, planted recovery, fixed-basis mode, determinism
4. Error paths
"""

import sys

import numpy as np
import pytest

from nmfvar.design_matrices import LagDesign, build_identity_design, build_lag_design, lag_stack
from nmfvar.errors import ConfigurationError, DegenerateError, InputError, NumericError
from nmfvar.nmf_solver import (
    FitOptions,
    fit,
    init_basis_kmeans,
    normalize_columns,
    objective,
    update_basis,
    update_theta,
)


def _planted(rng, p, q, d, t):
    """Exact Y = XΘA with column-stochastic X over a random non-negative lag design."""
    series = rng.uniform(0.2, 1.0, size=(p, t))
    a = lag_stack(series, d)
    x = rng.uniform(0.05, 1.0, size=(p, q))
    x /= x.sum(axis=0)
    theta = rng.uniform(0.0, 1.0, size=(q, p * d + 1))
    return x, theta, a, x @ theta @ a


def test_objective_examples():
    y = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert objective(y, y) == 0.0
    assert objective([[1.0, 2.0]], [[0.0, 0.0]]) == 5.0

    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(4, 6)), rng.normal(size=(4, 6))
    expected = sum((a[i, j] - b[i, j]) ** 2 for i in range(4) for j in range(6))
    assert objective(a, b) == pytest.approx(expected, rel=1e-12)


def test_exact_factorization_is_a_fixed_point():
    rng = np.random.default_rng(1)
    x, theta, a, y = _planted(rng, 4, 2, 2, 15)
    b = theta @ a
    new_x = update_basis(x, y, x @ b, b)
    new_x, new_theta = normalize_columns(new_x, theta)
    new_theta = update_theta(new_theta, new_x, y, new_x @ new_theta @ a, a)
    assert np.max(np.abs(new_x - x)) <= 1e-12
    assert np.max(np.abs(new_theta - theta)) <= 1e-12


def test_zero_entries_stay_zero():
    rng = np.random.default_rng(2)
    x = rng.uniform(size=(4, 2))
    x[1, 0] = 0.0
    theta = rng.uniform(size=(2, 5))
    theta[0, 3] = 0.0
    a = rng.uniform(size=(5, 3))
    y = rng.uniform(size=(4, 3))
    assert update_basis(x, y, x @ theta @ a, theta @ a)[1, 0] == 0.0
    assert update_theta(theta, x, y, x @ theta @ a, a)[0, 3] == 0.0


def test_single_updates_never_increase_objective():
    rng = np.random.default_rng(3)
    for _ in range(100):
        x, theta, a = rng.uniform(size=(4, 2)), rng.uniform(size=(2, 5)), rng.uniform(size=(5, 3))
        y = rng.uniform(size=(4, 3))
        before = objective(y, x @ theta @ a)
        x = update_basis(x, y, x @ theta @ a, theta @ a)
        middle = objective(y, x @ theta @ a)
        theta = update_theta(theta, x, y, x @ theta @ a, a)
        after = objective(y, x @ theta @ a)
        assert middle <= before * (1 + 1e-12)
        assert after <= middle * (1 + 1e-12)


def test_identity_covariates_reduce_to_standard_updates():
    rng = np.random.default_rng(4)
    x, h, y = rng.uniform(size=(5, 2)), rng.uniform(size=(2, 7)), rng.uniform(size=(5, 7))
    eye = np.eye(7)
    expected_h = h * (x.T @ y) / (x.T @ x @ h)
    expected_x = x * (y @ h.T) / (x @ h @ h.T)
    assert np.allclose(update_theta(h, x, y, x @ h, eye, eps=0.0), expected_h, rtol=1e-12)
    assert np.allclose(update_basis(x, y, x @ h, h @ eye, eps=0.0), expected_x, rtol=1e-12)


def test_normalize_columns():
    x, theta = normalize_columns(np.array([[2.0], [2.0]]), np.array([[1.0, 3.0]]))
    assert np.array_equal(x, [[0.5], [0.5]])
    assert np.array_equal(theta, [[4.0, 12.0]])

    stochastic = np.array([[0.25, 1.0], [0.75, 0.0]])
    same_x, same_theta = normalize_columns(stochastic, np.ones((2, 3)))
    assert np.array_equal(same_x, stochastic)
    assert np.array_equal(same_theta, np.ones((2, 3)))

    rng = np.random.default_rng(5)
    x, theta = rng.uniform(size=(6, 3)) * 10, rng.uniform(size=(3, 4))
    nx, ntheta = normalize_columns(x, theta)
    assert np.allclose(nx.sum(axis=0), 1.0, atol=1e-12)
    assert np.allclose(nx @ ntheta, x @ theta, rtol=1e-12)

    with pytest.raises(DegenerateError) as err:
        normalize_columns(np.array([[1.0, 0.0], [2.0, 0.0]]), np.ones((2, 2)))
    assert err.value.index == 1


def test_kmeans_initialization():
    y = np.array([[1.0, 2.0, 3.0], [3.0, 2.0, 1.0], [4.0, 4.0, 4.0]])
    x = init_basis_kmeans(y, 1, seed=0)
    mean = y.mean(axis=1)
    assert np.allclose(x[:, 0], mean / mean.sum())

    rng = np.random.default_rng(6)
    data = rng.uniform(size=(5, 30))
    x2 = init_basis_kmeans(data, 3, seed=9)
    assert np.allclose(x2.sum(axis=0), 1.0)
    assert np.array_equal(x2, init_basis_kmeans(data, 3, seed=9))
    with pytest.raises(ConfigurationError):
        init_basis_kmeans(data[:, :2], 3, seed=0)


def test_fit_traces_are_monotone():
    rng = np.random.default_rng(7)
    for trial in range(100):
        p = int(rng.integers(2, 11))
        t = int(rng.integers(10, 61))
        d = int(rng.integers(1, 4))
        q = int(rng.integers(1, min(4, p) + 1))
        frame_values = rng.uniform(size=(p, t))
        design = LagDesign(target=frame_values[:, d:], covariates=lag_stack(frame_values, d), lag_order=d)
        model = fit(design, FitOptions(rank=q, max_iter=300, seed=trial))
        trace = np.asarray(model.diagnostics.objective_trace)
        assert np.all(trace[1:] <= trace[:-1] * (1 + 1e-10)), f"trial {trial}"
        assert np.all(model.basis >= 0) and np.all(model.params >= 0)
        assert np.all(model.diagnostics.coefficient_matrix >= 0)
        assert np.allclose(model.basis.sum(axis=0), 1.0, atol=1e-10)


def test_planted_factors_are_recovered():
    rng = np.random.default_rng(8)
    recovered = 0
    for trial in range(100):
        _, _, a, y = _planted(rng, 4, 2, 1, 30)
        design = LagDesign(target=y, covariates=a, lag_order=1)
        model = fit(design, FitOptions(rank=2, max_iter=5000, tol=1e-10, seed=trial, line_search=True))
        relative = model.diagnostics.objective_trace[-1] / float(np.sum(y * y))
        recovered += relative < 1e-6
    assert recovered >= 95, f"only {recovered}/100 planted problems reached relative objective 1e-6"


def test_rank_one_single_column():
    y = np.array([[1.0], [2.0], [3.0]])
    design = LagDesign(target=y, covariates=np.eye(1), lag_order=0, kind="identity")
    model = fit(design, FitOptions(rank=1, max_iter=200))
    assert np.allclose(model.basis[:, 0], [1 / 6, 2 / 6, 3 / 6], rtol=1e-8)
    assert model.params[0, 0] == pytest.approx(6.0, rel=1e-8)


def test_fixed_basis_kkt_conditions(make_frame):
    rng = np.random.default_rng(9)
    design = build_lag_design(make_frame(rng.uniform(0.5, 1.5, size=(3, 30))), 1)
    basis = np.ones((3, 1))
    model = fit(design, FitOptions(rank=1, fixed_basis=basis, max_iter=20000, tol=1e-15))
    assert np.allclose(model.basis, 1 / 3)

    y, a, x, theta = design.target, design.covariates, model.basis, model.params
    gradient = 2 * x.T @ (x @ theta @ a - y) @ a.T
    scale = 2 * np.linalg.norm(x) * np.linalg.norm(y) * np.linalg.norm(a)
    active = theta > 1e-3 * theta.max()
    assert np.all(np.abs(gradient[active]) / scale < 1e-4)
    assert np.all(gradient[~active] / scale > -1e-6)


def test_line_search_keeps_traces_monotone():
    rng = np.random.default_rng(13)
    for trial in range(30):
        p, t, d = int(rng.integers(2, 8)), int(rng.integers(12, 50)), int(rng.integers(1, 3))
        values = rng.uniform(size=(p, t))
        design = LagDesign(target=values[:, d:], covariates=lag_stack(values, d), lag_order=d)
        model = fit(design, FitOptions(rank=min(2, p), max_iter=300, seed=trial, line_search=True))
        trace = np.asarray(model.diagnostics.objective_trace)
        assert np.all(trace[1:] <= trace[:-1] * (1 + 1e-10)), f"trial {trial}"
        assert np.all(model.basis >= 0) and np.all(model.params >= 0)
        assert np.allclose(model.basis.sum(axis=0), 1.0, atol=1e-10)


def test_line_search_reaches_fixed_basis_optimum(make_frame):
    rng = np.random.default_rng(9)
    design = build_lag_design(make_frame(rng.uniform(0.5, 1.5, size=(3, 30))), 1)
    basis = np.ones((3, 1))
    plain = fit(design, FitOptions(rank=1, fixed_basis=basis, max_iter=20000, tol=1e-15))
    fast = fit(design, FitOptions(rank=1, fixed_basis=basis, max_iter=20000, tol=1e-15, line_search=True))
    assert fast.diagnostics.objective_trace[-1] <= plain.diagnostics.objective_trace[-1] * (1 + 1e-8)


def test_fit_is_deterministic(make_frame):
    rng = np.random.default_rng(10)
    design = build_lag_design(make_frame(rng.uniform(size=(4, 40))), 2)
    opts = FitOptions(rank=2, max_iter=500, seed=123)
    first, second = fit(design, opts), fit(design, opts)
    assert np.array_equal(first.basis, second.basis)
    assert np.array_equal(first.params, second.params)
    assert first.diagnostics.objective_trace == second.diagnostics.objective_trace


def test_zero_row_is_reported(make_frame):
    rng = np.random.default_rng(11)
    values = rng.uniform(size=(3, 25))
    values[1] = 0.0
    model = fit(build_identity_design(make_frame(values)), FitOptions(rank=2, max_iter=500))
    assert model.diagnostics.degenerate_rows == [1]
    assert model.diagnostics.r_squared_by_variable[1] is None
    assert np.all(model.basis[1] < 1e-6)


def test_fit_errors(make_frame):
    rng = np.random.default_rng(12)
    design = build_lag_design(make_frame(rng.uniform(size=(2, 10))), 1)
    with pytest.raises(ConfigurationError):
        fit(design, FitOptions(rank=3))
    with pytest.raises(ConfigurationError):
        fit(design, FitOptions(rank=0))

    bad = LagDesign(target=np.array([[1.0, np.nan]]), covariates=np.ones((2, 2)), lag_order=1)
    with pytest.raises(NumericError):
        fit(bad, FitOptions(rank=1))
    negative = LagDesign(target=np.array([[1.0, -1.0]]), covariates=np.ones((2, 2)), lag_order=1)
    with pytest.raises(InputError):
        fit(negative, FitOptions(rank=1))
    zeros = LagDesign(target=np.zeros((2, 3)), covariates=np.ones((2, 3)), lag_order=1)
    with pytest.raises(DegenerateError):
        fit(zeros, FitOptions(rank=1))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))

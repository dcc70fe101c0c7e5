#!/usr/bin/env python3
"""
Tests for cross-validation, rank sweeps and method comparison
"""

import sys

import numpy as np
import pytest

from nmfvar.errors import ConfigurationError
from nmfvar.model_selection import _fold_ids, compare_methods, cross_validate, rank_sweep
from nmfvar.nmf_solver import FitOptions

FAST = FitOptions(rank=1, max_iter=300, tol=1e-6)


@pytest.mark.parametrize("blocked", [False, True])
def test_folds_partition_columns(blocked):
    for n, k in [(20, 10), (23, 5), (7, 7), (945, 10)]:
        ids = _fold_ids(n, k, seed=3, blocked=blocked)
        sizes = np.bincount(ids, minlength=k)
        assert sizes.sum() == n and len(sizes) == k
        assert sizes.max() - sizes.min() <= 1


def test_blocked_folds_are_contiguous():
    ids = _fold_ids(23, 4, seed=0, blocked=True)
    assert np.all(np.diff(ids) >= 0)


def test_single_candidate_is_chosen(make_frame):
    rng = np.random.default_rng(0)
    frame = make_frame(rng.uniform(0.5, 1.5, size=(3, 30)))
    report = cross_validate(frame, [2], [1], folds=5, seed=1, fit_options=FAST)
    assert report.chosen == (2, 1)
    assert len(report.fold_sse[(2, 1)]) == 5
    assert report.to_dict()["chosen"] == {"rank": 2, "lags": 1}


def test_report_is_reproducible(make_frame):
    rng = np.random.default_rng(1)
    frame = make_frame(rng.uniform(0.5, 1.5, size=(3, 40)))
    first = cross_validate(frame, [1, 2], [1, 2], folds=4, seed=9, fit_options=FAST)
    second = cross_validate(frame, [1, 2], [1, 2], folds=4, seed=9, fit_options=FAST, workers=3)
    assert first.to_dict() == second.to_dict()


def test_infeasible_candidate_names_the_pair(make_frame):
    frame = make_frame(np.random.default_rng(2).uniform(size=(2, 20)))
    with pytest.raises(ConfigurationError, match=r"Q=3, D=1"):
        cross_validate(frame, [3], [1], folds=5, seed=0, fit_options=FAST)
    with pytest.raises(ConfigurationError, match=r"Q=1, D=15"):
        cross_validate(frame, [1], [15], folds=5, seed=0, fit_options=FAST)


def test_planted_lag_order_is_selected(make_frame, simulate_var):
    p = 4
    hits = 0
    for seed in range(10):
        rng = np.random.default_rng(100 + seed)
        x = rng.uniform(0.1, 1.0, size=(p, 2))
        x /= x.sum(axis=0)
        theta3 = rng.uniform(0.2, 1.0, size=(2, p))
        xi3 = x @ theta3
        xi3 *= 0.8 / xi3.sum(axis=1).max()
        zero = np.zeros((p, p))
        values = simulate_var([zero, zero, xi3], x @ rng.uniform(0.5, 1.0, size=2), 120, noise=0.5, seed=seed)
        report = cross_validate(make_frame(values), [2], range(1, 7), folds=5, seed=seed,
                                fit_options=FitOptions(rank=2, max_iter=3000, tol=1e-9, line_search=True))
        hits += report.chosen[1] == 3
    assert hits >= 7, f"lag 3 chosen in only {hits}/10 runs"


def test_rank_sweep_rows(make_frame, simulate_var):
    values = simulate_var([np.array([[0.4, 0.1, 0.0], [0.0, 0.3, 0.2], [0.1, 0.0, 0.5]])],
                          np.array([0.2, 0.3, 0.1]), 50, seed=4)
    rows = rank_sweep(make_frame(values), [1, 2, 3], 1, FAST)
    assert [r.rank for r in rows] == [1, 2, 3]
    assert [r.n_params for r in rows] == [3 * q + q * 4 for q in (1, 2, 3)]
    assert all(r.stationary == (r.spectral_radius < 1) for r in rows)


def test_compare_methods_reports_every_method(make_frame, simulate_var):
    values = simulate_var([np.array([[0.5, 0.1], [0.2, 0.4]])], np.array([0.3, 0.3]), 40, seed=6)
    scores = {s.method: s for s in compare_methods(make_frame(values), 1, 1, 0.5, FAST)}
    assert set(scores) == {"nmf", "kernel", "nmf-var", "var"}
    assert all(s.r_squared <= 1.0 for s in scores.values())
    assert scores["var"].r_squared >= scores["nmf-var"].r_squared - 1e-12
    assert scores["nmf-var"].n_params == 2 * 1 + 1 * (2 + 1)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))

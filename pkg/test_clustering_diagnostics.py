#!/usr/bin/env python3
"""
Tests for soft/hard clustering, R² and lagged correlation
"""

import sys

import numpy as np
import pytest

from nmfvar.clustering_diagnostics import (
    hard_assign,
    lagged_correlation,
    r_squared,
    r_squared_by_variable,
    time_membership,
    variable_membership,
)
from nmfvar.errors import DegenerateError, InputError


def test_time_membership_normalizes_columns():
    m = time_membership(np.array([[1.0, 0.0], [3.0, 2.0]]), ["t1", "t2"])
    assert np.allclose(m.probabilities, [[0.25, 0.0], [0.75, 1.0]])
    assert [h.index for h in hard_assign(m)] == [1, 1]
    assert m.basis_names == ["Basis1", "Basis2"]


def test_memberships_sum_to_one_and_ignore_scale():
    rng = np.random.default_rng(0)
    b = rng.uniform(size=(3, 12))
    m = time_membership(b)
    assert np.allclose(m.probabilities.sum(axis=0), 1.0, atol=1e-10)
    scaled = time_membership(b * np.arange(1.0, 13.0))
    assert np.allclose(scaled.probabilities, m.probabilities, atol=1e-12)

    x = rng.uniform(size=(5, 3))
    v = variable_membership(x)
    assert v.probabilities.shape == (3, 5)
    assert np.allclose(v.as_rows().sum(axis=1), 1.0, atol=1e-10)


def test_variable_membership_of_a_prefecture_like_row():
    m = variable_membership(np.array([[0.069, 0.002, 0.005, 0.001]]), ["Ibaraki"])
    # the reference row is published rounded to three decimals, hence the loose tolerance
    assert np.allclose(m.as_rows()[0], [0.90, 0.03, 0.06, 0.02], atol=0.008)
    assert hard_assign(m)[0].index == 0


def test_ties_go_to_lowest_index_and_are_flagged():
    m = time_membership(np.array([[0.5, 0.2], [0.5, 0.8]]))
    labels = hard_assign(m)
    assert labels[0].index == 0 and labels[0].tie
    assert labels[1].index == 1 and not labels[1].tie


def test_negative_coefficient_is_an_input_error():
    with pytest.raises(InputError, match=r"\(1, 0\) for time 'jan'"):
        time_membership(np.array([[1.0, 2.0], [-0.5, 1.0]]), ["jan", "feb"])


def test_all_zero_items_raise():
    with pytest.raises(DegenerateError) as err:
        time_membership(np.array([[1.0, 0.0], [2.0, 0.0]]), ["a", "b"])
    assert err.value.label == "b"
    with pytest.raises(DegenerateError) as err:
        variable_membership(np.array([[0.2, 0.8], [0.0, 0.0]]), ["Tokyo", "Tottori"])
    assert err.value.label == "Tottori"


def test_r_squared():
    y = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 7.0]])
    assert r_squared(y, y) == 1.0
    assert r_squared(y, np.full_like(y, y.mean())) == pytest.approx(0.0, abs=1e-15)
    rng = np.random.default_rng(1)
    yhat = y + rng.normal(scale=0.1, size=y.shape)
    assert r_squared(y + 10.0, yhat + 10.0) == pytest.approx(r_squared(y, yhat), rel=1e-12)
    with pytest.raises(DegenerateError):
        r_squared(np.ones((2, 3)), np.zeros((2, 3)))


def test_r_squared_by_variable():
    y = np.array([[1.0, 2.0, 3.0], [5.0, 5.0, 5.0]])
    values = r_squared_by_variable(y, y)
    assert values == [1.0, None]


def test_lagged_correlation_identical_series():
    a = np.sin(0.3 * np.arange(80)) + 2.0
    result = lagged_correlation(a, a, 7)
    assert result.best_lag == 0
    assert result.best_correlation == pytest.approx(1.0)
    assert result.lags == list(range(-7, 8))


def test_lagged_correlation_detects_trailing_series():
    full = np.sin(0.3 * np.arange(103)) + 2.0
    a, b = full[3:], full[:-3]  # b[t] = a[t-3]
    result = lagged_correlation(a, b, 7)
    assert result.best_lag == 3
    assert result.best_correlation == pytest.approx(1.0)
    assert lagged_correlation(b, a, 7).best_lag == -3


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))

"""Shared fixtures: small synthetic frames and simulated non-negative VAR series."""

from pathlib import Path

import numpy as np
import pytest

from nmfvar.preprocessing import TimeSeriesFrame

DATA_DIR = Path(__file__).resolve().parent / "data"


@pytest.fixture
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture
def make_frame():
    """Factory: TimeSeriesFrame from a P×T array with integer time labels."""

    def _make(values, names=None):
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(1, -1)
        p, t = values.shape
        return TimeSeriesFrame(
            variable_names=names or [f"v{i + 1}" for i in range(p)],
            timestamps=[str(i) for i in range(t)],
            values=values,
        )

    return _make


@pytest.fixture
def simulate_var():
    """Factory: non-negative VAR series y_t = sum_d Xi_d y_{t-d} + xi + noise (P×T)."""

    def _simulate(xi_blocks, intercept, length, noise=0.05, seed=0, burn_in=50):
        rng = np.random.default_rng(seed)
        p = intercept.shape[0]
        d = len(xi_blocks)
        total = length + burn_in
        y = np.zeros((p, total))
        y[:, :d] = rng.uniform(0.5, 1.5, size=(p, d))
        for t in range(d, total):
            level = intercept.copy()
            for lag, block in enumerate(xi_blocks, start=1):
                level += block @ y[:, t - lag]
            y[:, t] = level + rng.uniform(0.0, noise, size=p)
        return y[:, burn_in:]

    return _simulate

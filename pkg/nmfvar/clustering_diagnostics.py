"""Soft/hard clustering from fitted factors, R², and lagged cross-correlation."""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from nmfvar.errors import ConfigurationError, DegenerateError, InputError, ShapeError

logger = logging.getLogger("nmfvar.clustering_diagnostics")

TIME_AXIS = "time_points"
VARIABLE_AXIS = "variables"


def default_basis_names(q: int) -> List[str]:
    return [f"Basis{i + 1}" for i in range(q)]


@dataclass
class MembershipSeries:
    """Membership probabilities, always stored Q×(items): one column per time point or variable."""

    probabilities: np.ndarray
    axis: str
    labels: List[str]
    basis_names: List[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.basis_names:
            self.basis_names = default_basis_names(self.probabilities.shape[0])

    def as_rows(self) -> np.ndarray:
        """Items × Q view, the layout of the membership CSV."""
        return self.probabilities.T


@dataclass
class HardLabel:
    index: int
    name: str
    tie: bool = False


def _labels(given: Optional[Sequence[str]], count: int, prefix: str) -> List[str]:
    if given is None or len(given) == 0:
        return [f"{prefix}{i + 1}" for i in range(count)]
    if len(given) != count:
        raise ShapeError(f"{len(given)} labels for {count} items")
    return [str(g) for g in given]


def time_membership(b: np.ndarray, labels: Optional[Sequence[str]] = None,
                    basis_names: Optional[List[str]] = None) -> MembershipSeries:
    """Each column of B scaled to sum to one."""
    b = np.asarray(b, dtype=float)
    labels = _labels(labels, b.shape[1], "t")
    negative = np.argwhere(b < 0)
    if negative.size:
        k, col = negative[0]
        raise InputError(f"coefficient matrix entry ({k}, {col}) for time '{labels[col]}' is negative: {b[k, col]}")
    sums = b.sum(axis=0)
    dead = np.flatnonzero(sums <= 0)
    if dead.size:
        raise DegenerateError(f"coefficient column for time '{labels[dead[0]]}' is all zero",
                              index=int(dead[0]), label=labels[dead[0]])
    return MembershipSeries(b / sums, TIME_AXIS, labels, list(basis_names or []))


def variable_membership(x: np.ndarray, labels: Optional[Sequence[str]] = None,
                        basis_names: Optional[List[str]] = None) -> MembershipSeries:
    """Each row of X scaled to sum to one (stored transposed, Q×P)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    labels = _labels(labels, x.shape[0], "var")
    sums = x.sum(axis=1)
    dead = np.flatnonzero(sums <= 0)
    if dead.size:
        raise DegenerateError(f"basis row for variable '{labels[dead[0]]}' is all zero",
                              index=int(dead[0]), label=labels[dead[0]])
    return MembershipSeries((x / sums[:, None]).T, VARIABLE_AXIS, labels, list(basis_names or []))


def hard_assign(m: MembershipSeries) -> List[HardLabel]:
    """Basis with the highest membership per item; ties go to the lowest index and are flagged."""
    result = []
    for column in m.probabilities.T:
        best = int(np.argmax(column))
        tie = int(np.count_nonzero(column == column[best])) > 1
        result.append(HardLabel(index=best, name=m.basis_names[best], tie=tie))
    return result


def r_squared(y: np.ndarray, yhat: np.ndarray) -> float:
    """Pooled coefficient of determination around the grand mean of y."""
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape:
        raise ShapeError(f"r_squared: dimension mismatch {y.shape} vs {yhat.shape}")
    total = float(np.sum((y - y.mean()) ** 2))
    if total == 0.0:
        raise DegenerateError("r_squared: observed values are constant")
    return 1.0 - float(np.sum((y - yhat) ** 2)) / total


def r_squared_by_variable(y: np.ndarray, yhat: np.ndarray) -> List[Optional[float]]:
    """R² of each row on its own; None for a constant row."""
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape:
        raise ShapeError(f"r_squared_by_variable: dimension mismatch {y.shape} vs {yhat.shape}")
    values: List[Optional[float]] = []
    for row, fitted in zip(y, yhat):
        total = float(np.sum((row - row.mean()) ** 2))
        values.append(None if total == 0.0 else 1.0 - float(np.sum((row - fitted) ** 2)) / total)
    return values


@dataclass
class LaggedCorrelation:
    lags: List[int]
    correlations: List[float]
    best_lag: int

    @property
    def best_correlation(self) -> float:
        return self.correlations[self.lags.index(self.best_lag)]

    def to_dict(self) -> Dict[str, object]:
        return {"lags": self.lags, "correlations": self.correlations, "best_lag": self.best_lag}


def lagged_correlation(a: Sequence[float], b: Sequence[float], max_lag: int) -> LaggedCorrelation:
    """Pearson correlation of overlapping segments for shifts -max_lag..max_lag.

    A positive lag k pairs a[t] with b[t+k], i.e. b trails a by k steps.
    The best lag maximizes the correlation; ties prefer the smallest |lag|.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size != b.size:
        raise ShapeError(f"lagged_correlation: series lengths differ ({a.size} vs {b.size})")
    if max_lag < 0 or a.size <= max_lag + 1:
        raise ConfigurationError(f"lagged_correlation: need length > max_lag + 1 (length {a.size}, max_lag {max_lag})")

    n = a.size
    lags = list(range(-max_lag, max_lag + 1))
    correlations = []
    for k in lags:
        left, right = (a[:n - k], b[k:]) if k >= 0 else (a[-k:], b[:n + k])
        if np.std(left) == 0.0 or np.std(right) == 0.0:
            raise DegenerateError(f"lagged_correlation: constant overlap segment at lag {k}", index=k)
        correlations.append(float(np.corrcoef(left, right)[0, 1]))
    best = max(lags, key=lambda k: (correlations[lags.index(k)], -abs(k)))
    return LaggedCorrelation(lags=lags, correlations=correlations, best_lag=best)

"""Target/covariate pairs for the three covariate regimes.

- lags: Y holds y_{D+1}..y_T and column t of A stacks y_{t-1},...,y_{t-D}
  followed by a constant 1 (NMF-VAR);
- kernel: A is a Gaussian kernel over time positions (kernel NMF);
- identity: A = I, which makes the factorization plain two-factor NMF.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from nmfvar.errors import ConfigurationError, InputError, ShapeError
from nmfvar.preprocessing import TimeSeriesFrame

logger = logging.getLogger("nmfvar.design_matrices")

COVARIATE_KINDS = ("lags", "kernel", "identity")


@dataclass
class LagDesign:
    """Target Y paired with covariates A; ``kind`` records how A was built."""

    target: np.ndarray
    covariates: np.ndarray
    lag_order: int
    kind: str = "lags"
    variable_names: List[str] = field(default_factory=list)
    timestamps: List[str] = field(default_factory=list)

    def __post_init__(self):
        if self.target.shape[1] != self.covariates.shape[1]:
            raise ShapeError(
                f"target has {self.target.shape[1]} columns but covariates have {self.covariates.shape[1]}"
            )

    @property
    def intercept_row_index(self) -> Optional[int]:
        return self.covariates.shape[0] - 1 if self.kind == "lags" else None

    @property
    def n_variables(self) -> int:
        return self.target.shape[0]

    @property
    def n_columns(self) -> int:
        return self.target.shape[1]

    def subset(self, columns: Sequence[int]) -> "LagDesign":
        """Design restricted to the given target columns."""
        cols = np.asarray(columns, dtype=int)
        return LagDesign(
            target=self.target[:, cols],
            covariates=self.covariates[:, cols],
            lag_order=self.lag_order,
            kind=self.kind,
            variable_names=self.variable_names,
            timestamps=[self.timestamps[c] for c in cols] if self.timestamps else [],
        )


@dataclass
class KernelDesign:
    """Gaussian-kernel covariates K(t_i, t_j) = exp(-beta |t_i - t_j|^2) over index positions."""

    covariates: np.ndarray
    bandwidth: float
    target: Optional[np.ndarray] = None
    variable_names: List[str] = field(default_factory=list)
    timestamps: List[str] = field(default_factory=list)
    kind: str = "kernel"
    lag_order: int = 0

    @property
    def n_columns(self) -> int:
        return self.covariates.shape[1]


def _check_non_negative(frame: TimeSeriesFrame) -> None:
    negative = np.argwhere(frame.values < 0)
    if negative.size:
        row, col = negative[0]
        raise InputError(
            f"covariate designs need non-negative data: {frame.variable_names[row]} at "
            f"{frame.timestamps[col]} is {frame.values[row, col]:.6g} (add a minmax step?)"
        )


def lag_stack(values: np.ndarray, lag_order: int) -> np.ndarray:
    """(PD+1)×(T-D) matrix whose column j stacks y_{t-1}..y_{t-D} and 1 for t = D + j."""
    t = values.shape[1]
    if lag_order < 1:
        raise ConfigurationError(f"lag order must be >= 1, got {lag_order}")
    if lag_order >= t:
        raise ConfigurationError(f"lag order D={lag_order} must be smaller than T={t}")
    blocks = [values[:, lag_order - d: t - d] for d in range(1, lag_order + 1)]
    blocks.append(np.ones((1, t - lag_order)))
    return np.vstack(blocks)


def build_lag_design(frame: TimeSeriesFrame, lag_order: int) -> LagDesign:
    """Lagged-observation design with an intercept row, for a VAR(lag_order)."""
    p = frame.n_variables
    covariates = lag_stack(frame.values, lag_order)
    _check_non_negative(frame)
    y = frame.values
    logger.debug(f"lag design: P={p}, D={lag_order}, A is {covariates.shape[0]}x{covariates.shape[1]}")
    return LagDesign(
        target=y[:, lag_order:].copy(),
        covariates=covariates,
        lag_order=lag_order,
        kind="lags",
        variable_names=list(frame.variable_names),
        timestamps=list(frame.timestamps[lag_order:]),
    )


def build_kernel_design(
    timestamps: Sequence[str],
    beta: float,
    target: Optional[np.ndarray] = None,
    variable_names: Optional[List[str]] = None,
) -> KernelDesign:
    """Gaussian kernel over the integer positions 0..T-1 of the timestamps."""
    if not beta > 0:
        raise ConfigurationError(f"kernel bandwidth beta must be positive, got {beta}")
    labels = [str(ts) for ts in timestamps]
    if len(set(labels)) != len(labels):
        raise InputError("kernel design needs distinct timestamps")
    positions = np.arange(len(labels), dtype=float)
    gaps = positions[:, None] - positions[None, :]
    kernel = np.exp(-beta * gaps ** 2)
    if target is not None and target.shape[1] != len(labels):
        raise ShapeError(f"target has {target.shape[1]} columns for {len(labels)} timestamps")
    return KernelDesign(
        covariates=kernel,
        bandwidth=float(beta),
        target=target,
        variable_names=list(variable_names or []),
        timestamps=labels,
    )


def build_identity_design(frame: TimeSeriesFrame) -> LagDesign:
    """Identity covariates: fitting it is standard NMF with Θ playing the role of B."""
    _check_non_negative(frame)
    t = frame.n_times
    return LagDesign(
        target=frame.values.copy(),
        covariates=np.eye(t),
        lag_order=0,
        kind="identity",
        variable_names=list(frame.variable_names),
        timestamps=list(frame.timestamps),
    )


def build_design(frame: TimeSeriesFrame, covariates: str, lag_order: int = 1, kernel_beta: Optional[float] = None):
    """Dispatch on the covariate regime name."""
    if covariates == "lags":
        return build_lag_design(frame, lag_order)
    if covariates == "kernel":
        if kernel_beta is None:
            raise ConfigurationError("kernel covariates need a bandwidth (--kernel-beta)")
        _check_non_negative(frame)
        return build_kernel_design(frame.timestamps, kernel_beta, target=frame.values.copy(),
                                   variable_names=frame.variable_names)
    if covariates == "identity":
        return build_identity_design(frame)
    raise ConfigurationError(f"unknown covariate mode '{covariates}' (expected one of {', '.join(COVARIATE_KINDS)})")

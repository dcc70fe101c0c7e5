"""VAR view of a fitted lag model: coefficients, companion form, forecasts.

With lag covariates the fit Y ≈ XΘA is a VAR(D) whose coefficient matrices
are Ξ_d = XΘ_d and whose intercept is ξ = Xθ.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from nmfvar.clustering_diagnostics import r_squared
from nmfvar.design_matrices import lag_stack
from nmfvar.errors import ConfigurationError, InputError, ShapeError
from nmfvar.nmf_solver import FactorModel
from nmfvar.numeric_kernels import spectral_radius
from nmfvar.preprocessing import TimeSeriesFrame

logger = logging.getLogger("nmfvar.var_analysis")

# ρ(F) closer to 1 than this gets a warning next to the verdict
BOUNDARY_BAND = 0.01


@dataclass
class VarCoefficients:
    xi: List[np.ndarray]
    intercept: np.ndarray

    @property
    def n_variables(self) -> int:
        return self.intercept.shape[0]

    @property
    def lag_order(self) -> int:
        return len(self.xi)


@dataclass
class CompanionForm:
    matrix: np.ndarray
    intercept: np.ndarray
    spectral_radius: float
    stationary: bool

    def to_dict(self) -> Dict[str, object]:
        return {"spectral_radius": self.spectral_radius, "stationary": self.stationary}


@dataclass
class ParameterReduction:
    nmfvar_params: int
    var_params: int
    ratio: float

    def to_dict(self) -> Dict[str, object]:
        return {"nmfvar_params": self.nmfvar_params, "var_params": self.var_params, "ratio": self.ratio}


def var_coefficients(model: FactorModel) -> VarCoefficients:
    """Ξ_d = X·Θ_d for each lag block and ξ = X·θ."""
    if model.covariates != "lags":
        raise ConfigurationError(f"VAR coefficients need lag covariates, model was fitted with '{model.covariates}'")
    x = model.basis
    return VarCoefficients(
        xi=[x @ block for block in model.theta_blocks],
        intercept=x @ model.theta_intercept,
    )


def companion_form(coeffs: VarCoefficients) -> CompanionForm:
    """First-order (PD-dimensional) rewriting of the VAR and its stability verdict."""
    p, d = coeffs.n_variables, coeffs.lag_order
    if d < 1:
        raise ConfigurationError("companion form needs at least one lag")
    matrix = np.zeros((p * d, p * d))
    matrix[:p, :] = np.hstack(coeffs.xi)
    if d > 1:
        matrix[p:, :p * (d - 1)] = np.eye(p * (d - 1))
    intercept = np.concatenate([coeffs.intercept, np.zeros(p * (d - 1))])
    rho = spectral_radius(matrix)
    if abs(rho - 1.0) < BOUNDARY_BAND:
        logger.warning(f"spectral radius {rho:.4f} is within {BOUNDARY_BAND} of the stationarity boundary")
    return CompanionForm(matrix=matrix, intercept=intercept, spectral_radius=rho, stationary=rho < 1.0)


def parameter_reduction(p: int, q: int, d: int) -> ParameterReduction:
    """Regression parameter counts of NMF-VAR (PQ + Q(PD+1)) versus a full VAR (P(PD+1))."""
    if min(p, q, d) < 1:
        raise ConfigurationError(f"parameter_reduction needs p, q, d >= 1 (got {p}, {q}, {d})")
    nmfvar_params = p * q + q * (p * d + 1)
    var_params = p * (p * d + 1)
    return ParameterReduction(nmfvar_params, var_params, q * (p + p * d + 1) / var_params)


def forecast(model: FactorModel, history: np.ndarray, horizon: int) -> np.ndarray:
    """Recursive h-step forecasts (P×h) from the last D observations.

    ``history`` is P×D with columns ordered oldest to newest, in the model's
    preprocessed space.
    """
    coeffs = var_coefficients(model)
    p, d = coeffs.n_variables, coeffs.lag_order
    history = np.asarray(history, dtype=float)
    if history.shape != (p, d):
        raise ShapeError(f"history must be {p}x{d} (P x D), got shape {history.shape}")
    if horizon < 1:
        raise ConfigurationError(f"horizon must be >= 1, got {horizon}")
    if np.any(history < 0):
        raise InputError("history contains negative values")

    window = history.copy()
    out = np.empty((p, horizon))
    for h in range(horizon):
        nxt = coeffs.intercept.copy()
        for lag, xi in enumerate(coeffs.xi, start=1):
            nxt += xi @ window[:, -lag]
        out[:, h] = nxt
        window = np.column_stack([window[:, 1:], nxt]) if d > 1 else nxt.reshape(p, 1)
    return out


@dataclass
class OlsVarFit:
    """Unconstrained least-squares VAR(D) on the same lagged design."""

    xi: List[np.ndarray]
    intercept: np.ndarray
    fitted: np.ndarray
    r_squared: float

    @property
    def n_params(self) -> int:
        p = self.intercept.shape[0]
        return p * (p * len(self.xi) + 1)


def fit_ols_var(frame: TimeSeriesFrame, lag_order: int) -> OlsVarFit:
    """Reference VAR with no sign or rank constraints, for comparing fit quality."""
    a = lag_stack(frame.values, lag_order)
    y = frame.values[:, lag_order:]
    coef, *_ = np.linalg.lstsq(a.T, y.T, rcond=None)
    weights = coef.T
    p = frame.n_variables
    fitted = weights @ a
    return OlsVarFit(
        xi=[weights[:, d * p:(d + 1) * p] for d in range(lag_order)],
        intercept=weights[:, -1],
        fitted=fitted,
        r_squared=r_squared(y, fitted),
    )


@dataclass
class Edge:
    source: str
    target: str
    weight: float


def influence_edges(model: FactorModel, threshold: float = 0.01,
                    basis_names: Optional[List[str]] = None) -> List[Edge]:
    """Weighted graph: lagged variables → bases via Θ, bases → current variables via X."""
    p, q = model.basis.shape
    names = model.variable_names or [f"var{i + 1}" for i in range(p)]
    bases = basis_names or [f"Basis{i + 1}" for i in range(q)]
    edges = []
    for lag, block in enumerate(model.theta_blocks, start=1):
        for k in range(q):
            for j in range(p):
                if block[k, j] > threshold:
                    edges.append(Edge(f"{names[j]}[t-{lag}]", bases[k], float(block[k, j])))
    for k in range(q):
        if model.theta_intercept[k] > threshold:
            edges.append(Edge("const", bases[k], float(model.theta_intercept[k])))
    for k in range(q):
        for j in range(p):
            if model.basis[j, k] > threshold:
                edges.append(Edge(bases[k], f"{names[j]}[t]", float(model.basis[j, k])))
    return edges

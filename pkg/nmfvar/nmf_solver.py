"""NMF with covariates: Y ≈ X Θ A fitted by multiplicative updates.

X (P×Q) is kept column-stochastic, Θ (Q×K) carries the covariate weights and
A (K×N) is the fixed covariate matrix from :mod:`nmfvar.design_matrices`.
The squared Euclidean objective never increases under the updates; the
column rescaling of X is compensated in Θ so Ŷ does not move.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from nmfvar.clustering_diagnostics import r_squared, r_squared_by_variable
from nmfvar.design_matrices import KernelDesign, LagDesign
from nmfvar.errors import ConfigurationError, DegenerateError, InputError, NumericError, ShapeError
from nmfvar.numeric_kernels import EPS_SCALE, as_matrix, hadamard_div, kmeans

logger = logging.getLogger("nmfvar.nmf_solver")

DEFAULT_SEED = 20240601
DEFAULT_MAX_ITER = 5000
DEFAULT_TOL = 1e-9
INIT_MODES = ("kmeans", "uniform")
MAX_STEP = 1e4
STEP_FRACTION = 0.9

Design = Union[LagDesign, KernelDesign]


@dataclass
class FitOptions:
    """Settings for one factorization run."""

    rank: int
    max_iter: int = DEFAULT_MAX_ITER
    tol: float = DEFAULT_TOL
    seed: int = DEFAULT_SEED
    eps_scale: float = EPS_SCALE
    fixed_basis: Optional[np.ndarray] = None  # GCM mode: X given, only Θ is updated
    init: str = "kmeans"
    line_search: bool = False  # extrapolate each sweep along its own step
    log_every: int = 500

    def validate(self) -> None:
        if self.rank < 1:
            raise ConfigurationError(f"rank Q must be >= 1, got {self.rank}")
        if self.max_iter < 1:
            raise ConfigurationError(f"max_iter must be >= 1, got {self.max_iter}")
        if not self.tol > 0:
            raise ConfigurationError(f"tolerance must be > 0, got {self.tol}")
        if self.eps_scale < 0:
            raise ConfigurationError(f"eps_scale must be >= 0, got {self.eps_scale}")
        if self.init not in INIT_MODES:
            raise ConfigurationError(f"init must be one of {INIT_MODES}, got '{self.init}'")


@dataclass
class FitDiagnostics:
    objective_trace: List[float]
    iterations: int
    converged: bool
    r_squared: Optional[float]
    coefficient_matrix: np.ndarray
    r_squared_by_variable: List[Optional[float]] = field(default_factory=list)
    degenerate_rows: List[int] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "objective_trace": [float(v) for v in self.objective_trace],
            "r_squared": self.r_squared,
            "iterations": self.iterations,
            "converged": self.converged,
            "r_squared_by_variable": self.r_squared_by_variable,
            "degenerate_rows": self.degenerate_rows,
        }


@dataclass
class FactorModel:
    """Fitted X and Θ plus what is needed to interpret or reuse them."""

    basis: np.ndarray
    params: np.ndarray
    rank: int
    lag_order: int
    covariates: str
    diagnostics: FitDiagnostics
    variable_names: List[str] = field(default_factory=list)
    seed: int = DEFAULT_SEED
    kernel_beta: Optional[float] = None

    @property
    def n_variables(self) -> int:
        return self.basis.shape[0]

    @property
    def theta_blocks(self) -> List[np.ndarray]:
        """Θ_1..Θ_D (each Q×P) for a lag model."""
        self._require_lags()
        p = self.n_variables
        return [self.params[:, d * p:(d + 1) * p] for d in range(self.lag_order)]

    @property
    def theta_intercept(self) -> np.ndarray:
        """θ, the intercept column of Θ."""
        self._require_lags()
        return self.params[:, -1]

    def predict(self, covariates: np.ndarray) -> np.ndarray:
        """X Θ A for a covariate matrix with matching row count."""
        if covariates.shape[0] != self.params.shape[1]:
            raise ShapeError(f"covariates have {covariates.shape[0]} rows, Θ has {self.params.shape[1]} columns")
        return self.basis @ (self.params @ covariates)

    def _require_lags(self) -> None:
        if self.covariates != "lags":
            raise ConfigurationError(f"operation needs lag covariates, model was fitted with '{self.covariates}'")


def objective(y: np.ndarray, yhat: np.ndarray) -> float:
    """Squared Euclidean distance tr{(Y-Ŷ)'(Y-Ŷ)}."""
    y = as_matrix(y, "y")
    yhat = as_matrix(yhat, "yhat")
    if y.shape != yhat.shape:
        raise ShapeError(f"objective: dimension mismatch {y.shape} vs {yhat.shape}")
    diff = y - yhat
    return float(np.sum(diff * diff))


def _guard(yhat: np.ndarray, eps_scale: float) -> float:
    peak = float(np.max(np.abs(yhat)))
    return eps_scale * peak if peak > 0 else eps_scale


def update_basis(x: np.ndarray, y: np.ndarray, yhat: np.ndarray, b: np.ndarray,
                 eps: Optional[float] = None) -> np.ndarray:
    """X ← X ⊙ (YB' ⊘ ŶB')."""
    p, q = x.shape
    if y.shape != yhat.shape or y.shape[0] != p or b.shape != (q, y.shape[1]):
        raise ShapeError(f"update_basis: X {x.shape}, Y {y.shape}, Ŷ {yhat.shape}, B {b.shape} do not conform")
    if eps is None:
        eps = _guard(yhat, EPS_SCALE)
    return x * hadamard_div(y @ b.T, yhat @ b.T, eps)


def update_theta(theta: np.ndarray, x: np.ndarray, y: np.ndarray, yhat: np.ndarray, a: np.ndarray,
                 eps: Optional[float] = None) -> np.ndarray:
    """Θ ← Θ ⊙ {(X'YA') ⊘ (X'ŶA')}."""
    p, q = x.shape
    k, n = a.shape
    if theta.shape != (q, k) or y.shape != (p, n) or yhat.shape != (p, n):
        raise ShapeError(
            f"update_theta: Θ {theta.shape}, X {x.shape}, Y {y.shape}, Ŷ {yhat.shape}, A {a.shape} do not conform"
        )
    if eps is None:
        eps = _guard(yhat, EPS_SCALE)
    return theta * hadamard_div(x.T @ y @ a.T, x.T @ yhat @ a.T, eps)


def normalize_columns(x: np.ndarray, theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Rescale X to unit column sums and move the scale into the rows of Θ."""
    sums = x.sum(axis=0)
    dead = np.flatnonzero(sums <= 0)
    if dead.size:
        raise DegenerateError(f"basis column {int(dead[0])} is all zero", index=int(dead[0]))
    return x / sums, theta * sums[:, None]


def init_basis_kmeans(y: np.ndarray, q: int, seed: int) -> np.ndarray:
    """Columns are K-means centroids of the observation vectors, normalized to sum 1."""
    n = y.shape[1]
    if q > n:
        raise ConfigurationError(f"rank Q={q} exceeds the number of observation vectors ({n})")
    centroids = kmeans(y.T, q, seed).T
    sums = centroids.sum(axis=0)
    for col in np.flatnonzero(sums <= 0):
        centroids[:, col] = 1.0
        sums[col] = centroids.shape[0]
    return centroids / sums


def _initial_theta(x: np.ndarray, y: np.ndarray, a: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    theta = rng.uniform(0.1, 1.0, size=(x.shape[1], a.shape[0]))
    approx = float(np.sum(x @ theta @ a))
    if approx > 0:
        theta *= float(np.sum(y)) / approx
    return theta


def _step_limit(current: np.ndarray, delta: np.ndarray) -> float:
    """Largest t keeping current + t*delta strictly inside the non-negative orthant."""
    shrinking = delta < 0
    if not np.any(shrinking):
        return np.inf
    return STEP_FRACTION * float(np.min(current[shrinking] / -delta[shrinking]))


def _extrapolate(
    y: np.ndarray,
    a: np.ndarray,
    start: Tuple[np.ndarray, np.ndarray],
    swept: Tuple[np.ndarray, np.ndarray, np.ndarray, float],
    fixed_basis: bool,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """Exact line search along the step one sweep just took.

    With X(t) = X1 + t dX and Θ(t) = Θ1 + t dΘ the residual is quadratic in t,
    so the objective is a quartic whose minimizer on [0, t_max] is found from
    the roots of its derivative. The extrapolated point is kept only if its
    recomputed objective is strictly lower, so the trace stays monotone.
    Entries that are zero stay zero and no entry is driven to zero.
    """
    x0, theta0 = start
    x1, theta1, yhat1, value1 = swept
    dx = x1 - x0
    dtheta = theta1 - theta0
    t_max = min(MAX_STEP, _step_limit(x1, dx), _step_limit(theta1, dtheta))
    if not t_max > 0:
        return swept

    b1, db = theta1 @ a, dtheta @ a
    r0 = y - yhat1
    y1 = dx @ b1 + x1 @ db
    y2 = dx @ db
    c1 = -2.0 * float(np.sum(r0 * y1))
    c2 = float(np.sum(y1 * y1)) - 2.0 * float(np.sum(r0 * y2))
    c3 = 2.0 * float(np.sum(y1 * y2))
    c4 = float(np.sum(y2 * y2))
    gain = np.polynomial.Polynomial([0.0, c1, c2, c3, c4])

    candidates = [t_max]
    for root in gain.deriv().roots():
        if abs(root.imag) <= 1e-12 * max(1.0, abs(root.real)) and 0.0 < root.real < t_max:
            candidates.append(float(root.real))
    t = min(candidates, key=gain)
    if not gain(t) < 0.0:
        return swept

    x = x1 + t * dx
    theta = theta1 + t * dtheta
    if not fixed_basis:
        x, theta = normalize_columns(x, theta)
    yhat = x @ theta @ a
    value = objective(y, yhat)
    if not value < value1:
        return swept
    return x, theta, yhat, value


def _validate_inputs(y: np.ndarray, a: np.ndarray) -> None:
    for name, m in (("target", y), ("covariates", a)):
        if not np.all(np.isfinite(m)):
            raise NumericError(f"{name} contains NaN or inf")
        if np.any(m < 0):
            raise InputError(f"{name} contains negative entries")
    if not np.any(y > 0):
        raise DegenerateError("target matrix is all zero")


def fit(design: Design, opts: FitOptions) -> FactorModel:
    """Fit Y ≈ XΘA by alternating multiplicative updates.

    Each sweep updates X, renormalizes its columns, then updates Θ; with a
    fixed basis only Θ moves. Stops when the relative objective change drops
    below ``opts.tol`` or after ``opts.max_iter`` sweeps.
    """
    opts.validate()
    y = design.target
    if y is None:
        raise ConfigurationError("design has no target matrix to factorize")
    a = design.covariates
    _validate_inputs(y, a)
    p, n = y.shape

    rng = np.random.default_rng(opts.seed)
    if opts.fixed_basis is not None:
        x = as_matrix(opts.fixed_basis, "fixed basis")
        if x.shape[0] != p:
            raise ConfigurationError(f"fixed basis has {x.shape[0]} rows, data has {p} variables")
        if np.any(x < 0):
            raise InputError("fixed basis contains negative entries")
        q = x.shape[1]
        if x.sum(axis=0).min() <= 0:
            raise ConfigurationError("fixed basis has an all-zero column")
        x = x / x.sum(axis=0)
    else:
        q = opts.rank
        if q > min(p, n):
            raise ConfigurationError(f"rank Q={q} must not exceed min(P, columns) = min({p}, {n})")
        if opts.init == "kmeans":
            x = init_basis_kmeans(y, q, opts.seed)
        else:
            x = rng.uniform(size=(p, q))
            x = x / x.sum(axis=0)
    theta = _initial_theta(x, y, a, rng)

    logger.info(f"fitting {design.kind} design: P={p}, N={n}, Q={q}, D={design.lag_order}, "
                f"{'fixed basis' if opts.fixed_basis is not None else opts.init + ' init'}")

    yhat = x @ theta @ a
    trace = [objective(y, yhat)]
    converged = False
    iterations = 0
    for iterations in range(1, opts.max_iter + 1):
        start = (x, theta)
        if opts.fixed_basis is None:
            x = update_basis(x, y, yhat, theta @ a, _guard(yhat, opts.eps_scale))
            x, theta = normalize_columns(x, theta)
            yhat = x @ theta @ a
        theta = update_theta(theta, x, y, yhat, a, _guard(yhat, opts.eps_scale))
        yhat = x @ theta @ a
        value = objective(y, yhat)
        if not np.isfinite(value):
            raise NumericError(f"objective became non-finite at iteration {iterations}")
        if opts.line_search and value > 0.0:
            x, theta, yhat, value = _extrapolate(y, a, start, (x, theta, yhat, value),
                                                 opts.fixed_basis is not None)
        previous = trace[-1]
        trace.append(value)
        if opts.log_every and iterations % opts.log_every == 0:
            logger.debug(f"iteration {iterations}: objective {value:.10g}")
        if value == 0.0 or abs(previous - value) < opts.tol * max(previous, np.finfo(float).tiny):
            converged = True
            break

    b = theta @ a
    zero_rows = [int(r) for r in np.flatnonzero(~np.any(y > 0, axis=1))]
    try:
        r2 = r_squared(y, yhat)
    except DegenerateError:
        r2 = None
    diagnostics = FitDiagnostics(
        objective_trace=trace,
        iterations=iterations,
        converged=converged,
        r_squared=r2,
        coefficient_matrix=b,
        r_squared_by_variable=r_squared_by_variable(y, yhat),
        degenerate_rows=zero_rows,
    )
    if zero_rows:
        logger.warning(f"target rows {zero_rows} are all zero; their basis rows are driven to zero")
    if not converged:
        logger.warning(f"no convergence after {iterations} iterations (tol={opts.tol:g})")
    logger.info(f"fit finished: {iterations} iterations, objective {trace[-1]:.6g}, "
                f"R²={'n/a' if r2 is None else f'{r2:.4f}'}")
    return FactorModel(
        basis=x,
        params=theta,
        rank=q,
        lag_order=design.lag_order,
        covariates=design.kind,
        diagnostics=diagnostics,
        variable_names=list(getattr(design, "variable_names", []) or []),
        seed=opts.seed,
        kernel_beta=getattr(design, "bandwidth", None),
    )

"""Numeric substrate: element-wise matrix operations, spectral radius, K-means.

Nothing in here knows about time series or factor models. Matrices are plain
2-D float ``numpy.ndarray`` objects; every function validates shapes and
returns new arrays without touching its inputs.
"""

import logging
from typing import Optional, Sequence, Union

import numpy as np
import scipy.linalg

from nmfvar.errors import ConfigurationError, InputError, NumericError, ShapeError, SpectralRadiusError

logger = logging.getLogger("nmfvar.numeric_kernels")

DenseMatrix = np.ndarray

# eps guard for Hadamard division, relative to the largest denominator entry
EPS_SCALE = 1e-16


def as_matrix(m: Union[DenseMatrix, Sequence[Sequence[float]]], name: str = "matrix") -> DenseMatrix:
    """Coerce to a 2-D float array with at least one row and one column."""
    arr = np.asarray(m, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"{name} must be a non-empty 2-D matrix, got shape {arr.shape}")
    return arr


def _check_same_shape(a: DenseMatrix, b: DenseMatrix, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: dimension mismatch {a.shape[0]}x{a.shape[1]} vs {b.shape[0]}x{b.shape[1]}")


def hadamard_mul(a: DenseMatrix, b: DenseMatrix) -> DenseMatrix:
    """Element-wise product a ⊙ b."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    _check_same_shape(a, b, "hadamard_mul")
    return a * b


def default_eps(den: DenseMatrix) -> float:
    """EPS_SCALE times the largest absolute entry of ``den`` (EPS_SCALE itself for an all-zero matrix)."""
    peak = float(np.max(np.abs(den))) if den.size else 0.0
    return EPS_SCALE * peak if peak > 0.0 else EPS_SCALE


def hadamard_div(num: DenseMatrix, den: DenseMatrix, eps: Optional[float] = None) -> DenseMatrix:
    """Element-wise ratio num ⊘ (den + eps).

    With ``eps=None`` the guard is :func:`default_eps` of ``den``. With
    ``eps=0`` a zero denominator is an error instead of an infinity.
    """
    num = as_matrix(num, "num")
    den = as_matrix(den, "den")
    _check_same_shape(num, den, "hadamard_div")
    if eps is None:
        eps = default_eps(den)
    if eps < 0:
        raise ConfigurationError(f"hadamard_div: eps must be non-negative, got {eps}")
    shifted = den + eps
    if eps == 0:
        zeros = np.argwhere(shifted == 0)
        if zeros.size:
            i, j = zeros[0]
            raise NumericError(f"hadamard_div: division by exact zero at ({i}, {j})")
    return num / shifted


def spectral_radius(
    m: DenseMatrix,
    tol: float = 1e-12,
    max_iter: int = 20000,
    fallback: bool = True,
) -> float:
    """Largest absolute eigenvalue of a square matrix.

    Non-negative matrices use power iteration on ``m + s*I`` from
    ``ones/sqrt(n)``. The small shift ``s`` makes the Perron root strictly
    dominant even when other eigenvalues share its modulus (periodic companion
    matrices), and the start vector always has weight on the Perron vector.
    Signed matrices carry no such guarantee and go straight to a dense LAPACK
    eigensolve. Stalled or oscillating iterations fall back to it as well;
    with ``fallback=False`` they raise :class:`SpectralRadiusError` instead,
    and signed matrices are iterated from a seeded random start vector.
    """
    m = as_matrix(m, "m")
    n, cols = m.shape
    if n != cols:
        raise ShapeError(f"spectral_radius: matrix must be square, got {n}x{cols}")
    if tol <= 0 or max_iter < 1:
        raise ConfigurationError("spectral_radius: tol must be > 0 and max_iter >= 1")
    if not np.all(np.isfinite(m)):
        raise NumericError("spectral_radius: matrix contains NaN or inf")
    if n == 1:
        return abs(float(m[0, 0]))
    scale = float(np.max(np.abs(m)))
    if scale == 0.0:
        return 0.0

    nonnegative = bool(np.all(m >= 0))
    if nonnegative:
        shift = 0.05 * float(np.max(m.sum(axis=1)))
        x = np.ones(n) / np.sqrt(n)
    elif fallback:
        return _dense_radius(m)
    else:
        shift = 0.0
        x = np.random.default_rng(n).standard_normal(n)
        x /= np.linalg.norm(x)
    work = m + shift * np.eye(n)

    estimate = 0.0
    checkpoint = np.inf
    for iteration in range(1, max_iter + 1):
        y = work @ x
        lam = float(x @ y)
        residual = float(np.linalg.norm(y - lam * x))
        estimate = abs(lam - shift)
        if residual <= tol * max(abs(lam), scale):
            logger.debug(f"spectral_radius: power iteration converged in {iteration} steps")
            return estimate
        norm = float(np.linalg.norm(y))
        if norm == 0.0:
            # start vector hit the null space of a nilpotent-like matrix
            break
        x = y / norm
        if iteration % 100 == 0:
            if residual > 0.9 * checkpoint:
                logger.debug(f"spectral_radius: iteration stalled at step {iteration} (residual {residual:.3e})")
                break
            checkpoint = residual

    if not fallback:
        raise SpectralRadiusError("spectral_radius: power iteration did not converge", estimate)
    logger.debug("spectral_radius: falling back to dense eigensolve")
    return _dense_radius(m)


def _dense_radius(m: np.ndarray) -> float:
    return float(np.max(np.abs(scipy.linalg.eigvals(m))))


def _kmeanspp_seeds(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = np.sum((points - points[chosen[0]]) ** 2, axis=1)
    while len(chosen) < k:
        total = float(d2.sum())
        if total > 0.0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            remaining = np.setdiff1d(np.arange(n), chosen)
            idx = int(rng.choice(remaining))
        chosen.append(idx)
        d2 = np.minimum(d2, np.sum((points - points[idx]) ** 2, axis=1))
    return points[chosen].copy()


def kmeans(
    points: Union[np.ndarray, Sequence[Sequence[float]]],
    k: int,
    seed: int,
    max_iter: int = 300,
) -> np.ndarray:
    """Lloyd's K-means with k-means++ seeding; returns a (k, dim) centroid array.

    Deterministic for a fixed seed. A cluster that empties during the
    iteration is re-seeded with the point farthest from its current centroid.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise InputError("kmeans: empty input")
    n = pts.shape[0]
    if k < 1 or k > n:
        raise ConfigurationError(f"kmeans: k={k} must be between 1 and the number of points ({n})")
    if max_iter < 1:
        raise ConfigurationError("kmeans: max_iter must be >= 1")

    rng = np.random.default_rng(seed)
    centroids = _kmeanspp_seeds(pts, k, rng)
    labels = np.full(n, -1)
    for _ in range(max_iter):
        dist = np.sum((pts[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        new_labels = np.argmin(dist, axis=1)
        counts = np.bincount(new_labels, minlength=k)
        for empty in np.flatnonzero(counts == 0):
            own = dist[np.arange(n), new_labels]
            for candidate in np.argsort(-own, kind="stable"):
                if counts[new_labels[candidate]] > 1:
                    counts[new_labels[candidate]] -= 1
                    new_labels[candidate] = empty
                    counts[empty] = 1
                    break
        for c in range(k):
            centroids[c] = pts[new_labels == c].mean(axis=0)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return centroids

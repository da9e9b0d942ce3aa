"""Small dense linear-algebra and statistics kernel.

Vectors are 1-D float64 arrays and matrices are 2-D float64 arrays.  Every
function here is pure: inputs are never modified.
"""

from __future__ import annotations

import warnings
from typing import Literal, Sequence

import numpy as np
import scipy.linalg

from .errors import (
    DegenerateSpread,
    DimensionMismatch,
    EmptyBatch,
    InsufficientSamples,
    SingularMatrix,
)

ArrayLike = Sequence[float] | np.ndarray

PIVOT_TOL = 1e-12


def as_samples(samples) -> np.ndarray:
    """Coerce a list of vectors into an ``(n, d)`` float64 array.

    Raises EmptyBatch for no samples and DimensionMismatch for ragged input.
    """
    if isinstance(samples, np.ndarray):
        arr = np.asarray(samples, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[:, None]
    else:
        rows = list(samples)
        if not rows:
            raise EmptyBatch("no samples")
        dims = {np.size(r) for r in rows}
        if len(dims) != 1:
            raise DimensionMismatch(f"samples have mixed dimensions {sorted(dims)}")
        arr = np.asarray([np.ravel(r) for r in rows], dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D sample array, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise EmptyBatch("no samples")
    if arr.shape[1] == 0:
        raise DimensionMismatch("vectors must have dimension > 0")
    if not np.all(np.isfinite(arr)):
        raise ValueError("samples contain non-finite entries")
    return arr


def mean_vector(samples) -> np.ndarray:
    return as_samples(samples).mean(axis=0)


def covariance(samples, normalization: Literal["population", "sample"] = "sample") -> np.ndarray:
    """Centered second-moment matrix, divided by n or n - 1."""
    x = as_samples(samples)
    n = x.shape[0]
    if normalization == "population":
        denom = n
    elif normalization == "sample":
        if n < 2:
            raise InsufficientSamples("sample covariance needs at least 2 samples")
        denom = n - 1
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / denom
    # Symmetrize away the last-bit asymmetry of the matmul.
    return 0.5 * (cov + cov.T)


def _ldl_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray | None:
    """Solve a symmetric system by LDL^T without pivoting.

    Returns None when a pivot falls below PIVOT_TOL times the largest
    diagonal magnitude.
    """
    n = a.shape[0]
    scale = np.max(np.abs(np.diag(a)))
    if scale == 0.0:
        return None
    lower = np.eye(n)
    diag = np.zeros(n)
    for j in range(n):
        lj = lower[j, :j]
        diag[j] = a[j, j] - np.dot(lj * lj, diag[:j])
        if abs(diag[j]) <= PIVOT_TOL * scale:
            return None
        if j + 1 < n:
            lower[j + 1 :, j] = (a[j + 1 :, j] - lower[j + 1 :, :j] @ (lj * diag[:j])) / diag[j]
    z = scipy.linalg.solve_triangular(lower, b, lower=True, unit_diagonal=True)
    return scipy.linalg.solve_triangular(lower.T, z / diag, lower=False, unit_diagonal=True)


def ridge_solve(a, b, lam: float = 0.0) -> np.ndarray:
    """Solve ``(a + lam * I) y = b``.

    Symmetric systems go through an LDL^T factorization.  Non-symmetric
    systems, or symmetric indefinite ones that need pivoting, fall back to
    partially pivoted LU.  Either path applies the same relative pivot
    tolerance before declaring the system singular.
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_1d(np.asarray(b, dtype=np.float64))
    if a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"matrix must be square, got {a.shape}")
    if a.shape[0] != b.shape[0]:
        raise DimensionMismatch(f"matrix is {a.shape} but right-hand side has length {b.shape[0]}")
    if lam < 0:
        raise ValueError("ridge must be nonnegative")
    system = a + lam * np.eye(a.shape[0])
    if np.allclose(system, system.T, rtol=0.0, atol=1e-14 * max(1.0, np.max(np.abs(system)))):
        y = _ldl_solve(system, b)
        if y is not None:
            return y
    scale = np.max(np.abs(system))
    if scale == 0.0:
        raise SingularMatrix("system matrix is zero")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(system, check_finite=True)
    if np.min(np.abs(np.diag(lu))) <= PIVOT_TOL * scale:
        raise SingularMatrix("system matrix is singular to working precision")
    return scipy.linalg.lu_solve((lu, piv), b)


def standardize(values: ArrayLike) -> np.ndarray:
    """Shift to zero mean and scale to unit population standard deviation."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size < 2:
        raise DegenerateSpread("need at least two values to standardize")
    centered = v - v.mean()
    sd = np.sqrt(np.mean(centered**2))
    if sd == 0.0 or sd <= 1e-14 * np.max(np.abs(v)):
        raise DegenerateSpread("values have zero spread")
    return centered / sd


def softmax(values: ArrayLike) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise EmptyBatch("softmax of an empty vector")
    e = np.exp(v - np.max(v))
    return e / e.sum()


def pearson(xs: ArrayLike, ys: ArrayLike) -> float:
    x = np.asarray(xs, dtype=np.float64).ravel()
    y = np.asarray(ys, dtype=np.float64).ravel()
    if x.size != y.size:
        raise DimensionMismatch(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise DegenerateSpread("need at least two pairs")
    zx = standardize(x)
    zy = standardize(y)
    return float(np.clip(np.mean(zx * zy), -1.0, 1.0))

# Copyright (c) 2025 Apple Inc. Licensed under MIT License.

"""Small linear-algebra kit shared by the estimators, predictors and simulators."""

import numpy as np

from .errors import DataError, SingularMatrixError


def as_matrix(value, name: str = "matrix") -> np.ndarray:
    """Coerce a scalar, nested list or array into a finite square float matrix."""
    m = np.atleast_2d(np.array(value, dtype=np.float64))
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DataError(f"{name} must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DataError(f"{name} contains non-finite entries")
    return m


def as_points(x, d: int) -> np.ndarray:
    """Coerce evaluation points into an (m, d) array.

    A 1-D input is read as a single point when ``d > 1`` and as m scalar
    points when ``d == 1``.
    """
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(-1, 1) if d == 1 else a.reshape(1, -1)
    if a.ndim != 2 or a.shape[1] != d:
        raise DataError(f"expected points of dimension {d}, got shape {a.shape}")
    return a


def pseudo_inverse(m) -> np.ndarray:
    """Moore-Penrose pseudo-inverse through the singular value decomposition.

    Singular values below ``d * sigma_max * eps`` are treated as zero.
    """
    m = np.asarray(m, dtype=np.float64)
    u, s, vt = np.linalg.svd(m)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(m.T.shape)
    tol = max(m.shape) * s[0] * np.finfo(np.float64).eps
    keep = s > tol
    s_inv = np.zeros_like(s)
    s_inv[keep] = 1.0 / s[keep]
    return (vt.T * s_inv) @ u.T


def spectral_norm(m) -> float:
    """Largest singular value of ``m``."""
    return float(np.linalg.norm(np.asarray(m, dtype=np.float64), ord=2))


def smallest_singular_value(m) -> float:
    return float(np.linalg.svd(np.asarray(m, dtype=np.float64), compute_uv=False)[-1])


def checked_inverse(m, name: str = "matrix", threshold: float = 0.0) -> np.ndarray:
    """Inverse of ``m``; raises SingularMatrixError when its smallest singular
    value is at or below ``threshold`` (or the inversion fails)."""
    m = np.asarray(m, dtype=np.float64)
    sigma_min = smallest_singular_value(m)
    if not sigma_min > threshold:
        raise SingularMatrixError(
            f"{name} is singular (smallest singular value {sigma_min:.3g})"
        )
    try:
        return np.linalg.inv(m)
    except np.linalg.LinAlgError as e:
        raise SingularMatrixError(f"{name} is singular: {e}") from e


def sup_norm_rows(v: np.ndarray) -> np.ndarray:
    """Row-wise infinity norm of an (m, d) array."""
    return np.max(np.abs(v), axis=1)

# Copyright (c) 2025 Apple Inc. Licensed under MIT License.

"""Noise laws for the state and measurement noises.

Every family exposes a vectorized density, its characteristic function under
the convention ``phi(t) = E exp(i t^T X)``, a seeded sampler and its
covariance. Points are passed as (m, d) arrays (see ``linalg.as_points``).

Built-in families:

- ``GaussianIID``: independent centered normal coordinates.
- ``GammaDifferenceIID``: each coordinate is the difference of two
  independent gamma(k, theta) variables (a symmetric variance-gamma law).
- ``LinearMap``: ``C @ base`` for a nonsingular mixing matrix ``C``.
"""

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy import special, stats

from .errors import DataError, DensityUnboundedError
from .linalg import as_matrix, as_points, checked_inverse
from .utils import rng_for

# Lookup grid for the variance-gamma density: +-12 standard deviations.
VG_GRID_SIZE = 4096
VG_GRID_SDS = 12.0


class NoiseFamily(ABC):
    """A zero-mean noise law on R^d."""

    @property
    @abstractmethod
    def d(self) -> int: ...

    @abstractmethod
    def density(self, x) -> np.ndarray:
        """Density at the rows of ``x``; returns shape (m,)."""

    @abstractmethod
    def char(self, t) -> np.ndarray:
        """Characteristic function at the rows of ``t``; complex, shape (m,)."""

    @abstractmethod
    def _draw(self, rng: np.random.Generator, m: int) -> np.ndarray: ...

    @abstractmethod
    def covariance(self) -> np.ndarray: ...

    @abstractmethod
    def to_dict(self) -> dict: ...

    @property
    def is_gaussian(self) -> bool:
        return False

    def sample(self, m: int, seed: int | np.random.Generator) -> np.ndarray:
        """Draw ``m`` i.i.d. vectors as an (m, d) array.

        ``seed`` is either a non-negative integer (the draw is then fully
        determined by it) or a generator owned by the caller.
        """
        if m < 1:
            raise ValueError(f"sample count must be >= 1, got {m}")
        rng = seed if isinstance(seed, np.random.Generator) else rng_for(seed)
        return self._draw(rng, m)


def _per_coordinate(values, d: int | None, name: str) -> tuple[float, ...]:
    arr = np.atleast_1d(np.asarray(values, dtype=np.float64))
    if d is not None and arr.size == 1 and d > 1:
        arr = np.repeat(arr, d)
    if arr.ndim != 1 or arr.size < 1:
        raise DataError(f"{name} must be a scalar or a vector")
    if d is not None and arr.size != d:
        raise DataError(f"{name} has {arr.size} entries, expected {d}")
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise DataError(f"{name} must be finite and strictly positive")
    return tuple(float(v) for v in arr)


@dataclass(frozen=True)
class GaussianIID(NoiseFamily):
    sigma: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "sigma", _per_coordinate(self.sigma, None, "sigma"))

    @classmethod
    def standard(cls, d: int = 1) -> "GaussianIID":
        return cls(tuple([1.0] * d))

    @property
    def d(self) -> int:
        return len(self.sigma)

    @property
    def is_gaussian(self) -> bool:
        return True

    def density(self, x) -> np.ndarray:
        x = as_points(x, self.d)
        sigma = np.asarray(self.sigma)
        return np.prod(stats.norm.pdf(x, scale=sigma), axis=1)

    def char(self, t) -> np.ndarray:
        t = as_points(t, self.d)
        sigma = np.asarray(self.sigma)
        return np.exp(-0.5 * np.sum((t * sigma) ** 2, axis=1)).astype(np.complex128)

    def _draw(self, rng, m):
        return rng.standard_normal((m, self.d)) * np.asarray(self.sigma)

    def covariance(self) -> np.ndarray:
        return np.diag(np.asarray(self.sigma) ** 2)

    def to_dict(self) -> dict:
        return {"type": "gaussian", "d": self.d, "sigma": list(self.sigma)}


def variance_gamma_pdf(x, shape: float, scale: float) -> np.ndarray:
    """Density of G1 - G2 for independent gamma(shape, scale) variables.

    Uses ``|x|^nu K_nu(|x|/scale)`` with ``nu = shape - 1/2``. Raises
    DensityUnboundedError at the exact origin when ``shape <= 1/2``.
    """
    x = np.abs(np.asarray(x, dtype=np.float64))
    nu = shape - 0.5
    out = np.empty_like(x)
    zero = x == 0.0
    if np.any(zero):
        if shape <= 0.5:
            raise DensityUnboundedError(
                f"gamma-difference density with shape {shape} is unbounded at 0"
            )
        out[zero] = math.exp(
            special.gammaln(nu)
            - special.gammaln(shape)
            - math.log(2.0 * math.sqrt(math.pi) * scale)
        )
    nz = ~zero
    if np.any(nz):
        ax = x[nz]
        log_coef = (
            -0.5 * math.log(math.pi)
            - special.gammaln(shape)
            - (shape + 0.5) * math.log(scale)
            - nu * math.log(2.0)
        )
        z = ax / scale
        out[nz] = np.exp(log_coef + nu * np.log(ax) - z) * special.kve(nu, z)
    return out


@lru_cache(maxsize=64)
def _variance_gamma_table(shape: float, scale: float) -> tuple[np.ndarray, np.ndarray]:
    half_width = VG_GRID_SDS * scale * math.sqrt(2.0 * shape)
    # An even node count keeps the origin off the grid.
    grid = np.linspace(-half_width, half_width, VG_GRID_SIZE)
    values = variance_gamma_pdf(grid, shape, scale)
    grid.setflags(write=False)
    values.setflags(write=False)
    return grid, values


def _variance_gamma_lookup(x: np.ndarray, shape: float, scale: float) -> np.ndarray:
    if shape <= 0.5 and np.any(x == 0.0):
        raise DensityUnboundedError(
            f"gamma-difference density with shape {shape} is unbounded at 0"
        )
    grid, values = _variance_gamma_table(shape, scale)
    out = np.interp(x, grid, values)
    outside = (x < grid[0]) | (x > grid[-1])
    if np.any(outside):
        out[outside] = variance_gamma_pdf(x[outside], shape, scale)
    return out


@dataclass(frozen=True)
class GammaDifferenceIID(NoiseFamily):
    shape: tuple[float, ...]
    scale: tuple[float, ...]

    def __post_init__(self):
        shape = _per_coordinate(self.shape, None, "shape")
        scale = _per_coordinate(self.scale, len(shape), "scale")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "scale", scale)

    @classmethod
    def uniform(cls, d: int, shape: float, scale: float) -> "GammaDifferenceIID":
        return cls(tuple([shape] * d), tuple([scale] * d))

    @property
    def d(self) -> int:
        return len(self.shape)

    def density(self, x) -> np.ndarray:
        x = as_points(x, self.d)
        out = np.ones(x.shape[0])
        for j, (k, theta) in enumerate(zip(self.shape, self.scale)):
            out *= _variance_gamma_lookup(x[:, j], k, theta)
        return out

    def char(self, t) -> np.ndarray:
        t = as_points(t, self.d)
        k = np.asarray(self.shape)
        theta = np.asarray(self.scale)
        log_phi = -np.sum(k * np.log1p((theta * t) ** 2), axis=1)
        return np.exp(log_phi).astype(np.complex128)

    def _draw(self, rng, m):
        k = np.asarray(self.shape)
        theta = np.asarray(self.scale)
        return rng.gamma(k, theta, (m, self.d)) - rng.gamma(k, theta, (m, self.d))

    def covariance(self) -> np.ndarray:
        k = np.asarray(self.shape)
        theta = np.asarray(self.scale)
        return np.diag(2.0 * k * theta**2)

    def to_dict(self) -> dict:
        return {
            "type": "gamma_difference",
            "d": self.d,
            "shape": list(self.shape),
            "scale": list(self.scale),
        }


@dataclass(frozen=True)
class LinearMap(NoiseFamily):
    """The law of ``C @ v`` where ``v`` follows ``base``."""

    matrix: tuple[tuple[float, ...], ...]
    base: NoiseFamily

    def __post_init__(self):
        m = as_matrix(self.matrix, "mixing matrix")
        if m.shape[0] != self.base.d:
            raise DataError(
                f"mixing matrix is {m.shape[0]}x{m.shape[0]} but the base family has dimension {self.base.d}"
            )
        checked_inverse(m, "mixing matrix")
        object.__setattr__(self, "matrix", tuple(tuple(row) for row in m.tolist()))

    @cached_property
    def _c(self) -> np.ndarray:
        return np.asarray(self.matrix)

    @cached_property
    def _c_inv(self) -> np.ndarray:
        return np.linalg.inv(self._c)

    @cached_property
    def _abs_det(self) -> float:
        return abs(float(np.linalg.det(self._c)))

    @property
    def d(self) -> int:
        return self.base.d

    @property
    def is_gaussian(self) -> bool:
        return self.base.is_gaussian

    def density(self, x) -> np.ndarray:
        x = as_points(x, self.d)
        return self.base.density(x @ self._c_inv.T) / self._abs_det

    def char(self, t) -> np.ndarray:
        t = as_points(t, self.d)
        return self.base.char(t @ self._c)

    def _draw(self, rng, m):
        return self.base._draw(rng, m) @ self._c.T

    def covariance(self) -> np.ndarray:
        return self._c @ self.base.covariance() @ self._c.T

    def to_dict(self) -> dict:
        return {
            "type": "linear_map",
            "d": self.d,
            "matrix": [list(row) for row in self.matrix],
            "base": self.base.to_dict(),
        }


def family_from_dict(data: dict) -> NoiseFamily:
    """Rebuild a family from the mapping produced by ``to_dict``."""
    if not isinstance(data, dict) or "type" not in data:
        raise DataError("noise family must be an object with a 'type' field")
    kind = data["type"]
    try:
        d = data.get("d")
        if kind == "gaussian":
            family: NoiseFamily = GaussianIID(_per_coordinate(data["sigma"], d, "sigma"))
        elif kind == "gamma_difference":
            shape = _per_coordinate(data["shape"], d, "shape")
            scale = _per_coordinate(data["scale"], len(shape), "scale")
            family = GammaDifferenceIID(shape, scale)
        elif kind == "linear_map":
            family = LinearMap(data["matrix"], family_from_dict(data["base"]))
        else:
            raise DataError(
                f"unknown noise family type {kind!r}; expected gaussian, gamma_difference or linear_map"
            )
    except KeyError as e:
        raise DataError(f"noise family {kind!r} is missing field {e}") from e
    if "d" in data and int(data["d"]) != family.d:
        raise DataError(f"noise family declares d={data['d']} but has dimension {family.d}")
    return family

# Copyright (c) 2025 Apple Inc. Licensed under MIT License.

"""Benchmark models, series generation, the T2 error metric and the
root densities that the experiments compare.

The state-root and observation-root densities are

    z(x) = E f_eps(x + A B^-1 eta)
    g(x) = E f_eps(B^-1 x + A B^-1 eta - B^-1 eta') / |det B|

with eta, eta' independent measurement-noise draws. Plugging in an estimate
of f_eps and of A gives the convolved estimators used by the experiments.
"""

import math
from collections.abc import Callable
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import stats

from .cache import file_cache_value
from .errors import DataError
from .estimation import TabulatedDensity, lattice_points
from .kernel import BandwidthPolicy
from .linalg import as_matrix, as_points, checked_inverse
from .model import MIN_SERIES_LENGTH, ObservationSeries, StateSpaceSpec
from .noise import GammaDifferenceIID, GaussianIID, LinearMap, NoiseFamily
from .utils import logger, rng_for

DensityFunction = Callable[[np.ndarray], np.ndarray]
RootTarget = Literal["state", "observation"]

BENCHMARK_IDS = ("O1", "S1", "O2", "S2")

# Points materialized per block when averaging a density over draws.
POINTS_PER_BLOCK = 1 << 21

_STREAM_EPS = 0
_STREAM_ETA = 1


@dataclass(frozen=True)
class BenchmarkModel:
    id: str
    spec: StateSpaceSpec
    bandwidth: BandwidthPolicy

    @property
    def d(self) -> int:
        return self.spec.d


def benchmark_model(model_id: str) -> BenchmarkModel:
    """One of the four benchmark models O1, S1, O2 and S2.

    O models use gamma-difference noises (ordinary smooth measurement noise),
    S models Gaussian ones (super smooth). The one-dimensional models have
    A = 0.8 and B = 1 with unit-variance noises; the two-dimensional models
    mix independent coordinates through fixed matrices.
    """
    key = model_id.upper()
    if key not in BENCHMARK_IDS:
        raise DataError(f"unknown model {model_id!r}; expected one of {', '.join(BENCHMARK_IDS)}")
    d = 1 if key.endswith("1") else 2
    if key.startswith("O"):
        eps_base: NoiseFamily = GammaDifferenceIID.uniform(d, 1.5, 1.0 / math.sqrt(3.0))
        eta_base: NoiseFamily = GammaDifferenceIID.uniform(d, 0.5, 1.0)
    else:
        eps_base = GaussianIID.standard(d)
        eta_base = GaussianIID.standard(d)
    if d == 1:
        spec = StateSpaceSpec(A=np.array([[0.8]]), B=np.array([[1.0]]), eps=eps_base, eta=eta_base)
    else:
        spec = StateSpaceSpec(
            A=np.array([[0.56, -0.25], [0.25, 0.45]]),
            B=np.array([[1.0, -0.5], [0.5, 1.0]]),
            eps=LinearMap(((0.979, 0.204), (0.204, 0.979)), eps_base),
            eta=LinearMap(((0.9, 0.0), (0.0, 0.9)), eta_base),
        )
    return BenchmarkModel(id=key, spec=spec, bandwidth=BandwidthPolicy.for_spec(spec))


@dataclass(frozen=True, eq=False)
class SimulatedSeries:
    """Observed series with its hidden states and one held-out future pair."""

    observations: ObservationSeries
    states: np.ndarray
    next_state: np.ndarray
    next_observation: np.ndarray


def generate_series(
    model: BenchmarkModel | StateSpaceSpec, n: int, seed: int, burn_in: int = 1_000
) -> SimulatedSeries:
    """Simulate X and Y from X = 0, discarding ``burn_in`` steps.

    Returns n observations, the matching n states, and (X_{n+1}, Y_{n+1}).
    """
    spec = model.spec if isinstance(model, BenchmarkModel) else model
    if n < MIN_SERIES_LENGTH:
        raise DataError(f"n must be >= {MIN_SERIES_LENGTH}, got {n}")
    if burn_in < 0:
        raise ValueError(f"burn_in must be non-negative, got {burn_in}")
    eps = spec.eps.sample(burn_in + n + 1, rng_for(seed, _STREAM_EPS))
    eta = spec.eta.sample(n + 1, rng_for(seed, _STREAM_ETA))

    A = spec.A
    x = np.zeros(spec.d)
    states = np.empty((n + 1, spec.d))
    for t in range(burn_in + n + 1):
        x = A @ x + eps[t]
        if t >= burn_in:
            states[t - burn_in] = x
    observations = states @ spec.B.T + eta
    return SimulatedSeries(
        observations=ObservationSeries(observations[:n]),
        states=states[:n],
        next_state=states[n],
        next_observation=observations[n],
    )


def t2_norm_diff(
    f: DensityFunction,
    g: DensityFunction,
    *,
    h: float,
    d: int,
    mc_samples: int = 50_000,
    seed: int = 0,
) -> float:
    """Monte Carlo estimate of sqrt(int_{[-1/h, 1/h]^d} |f - g|^2)."""
    if not h > 0:
        raise ValueError(f"h must be positive, got {h}")
    if mc_samples < 1:
        raise ValueError(f"mc_samples must be >= 1, got {mc_samples}")
    half = 1.0 / h
    points = rng_for(seed).uniform(-half, half, size=(mc_samples, d))
    diff = np.asarray(f(points), dtype=np.float64) - np.asarray(g(points), dtype=np.float64)
    volume = (2.0 * half) ** d
    return math.sqrt(volume * float(np.mean(diff**2)))


class RootDensity:
    """x -> scale * mean_j density(x L^T + offsets_j) for fixed draws."""

    def __init__(
        self,
        density: DensityFunction,
        offsets: np.ndarray,
        linear: np.ndarray | None = None,
        scale: float = 1.0,
    ):
        self.density = density
        self.offsets = offsets
        self.linear = linear
        self.scale = scale

    @property
    def d(self) -> int:
        return self.offsets.shape[1]

    def with_density(self, density: DensityFunction) -> "RootDensity":
        return RootDensity(density, self.offsets, self.linear, self.scale)

    def reach(self, half_width: float) -> np.ndarray:
        """Per-axis bound on |argument| of the density for x in [-half_width, half_width]^d."""
        span = half_width
        if self.linear is not None:
            span = half_width * np.sum(np.abs(self.linear), axis=1)
        return span + np.max(np.abs(self.offsets), axis=0)

    def __call__(self, x) -> np.ndarray:
        x = as_points(x, self.d)
        if self.linear is not None:
            x = x @ self.linear.T
        draws = self.offsets.shape[0]
        out = np.empty(x.shape[0])
        step = max(1, POINTS_PER_BLOCK // draws)
        for start in range(0, x.shape[0], step):
            block = x[start : start + step]
            points = (block[:, None, :] + self.offsets[None, :, :]).reshape(-1, self.d)
            out[start : start + step] = self.density(points).reshape(block.shape[0], draws).mean(axis=1)
        return self.scale * out


def state_root_density(
    noise_density: DensityFunction, A, B, eta: NoiseFamily, *, draws: int = 2_000, seed: int = 0
) -> RootDensity:
    A = as_matrix(A, "A")
    B_inv = checked_inverse(as_matrix(B, "B"), "B")
    y = eta.sample(draws, rng_for(seed, 0))
    return RootDensity(noise_density, y @ (A @ B_inv).T)


def observation_root_density(
    noise_density: DensityFunction, A, B, eta: NoiseFamily, *, draws: int = 2_000, seed: int = 0
) -> RootDensity:
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    B_inv = checked_inverse(B, "B")
    w = eta.sample(draws, rng_for(seed, 0))
    z = eta.sample(draws, rng_for(seed, 1))
    offsets = w @ (A @ B_inv).T - z @ B_inv.T
    return RootDensity(noise_density, offsets, linear=B_inv, scale=1.0 / abs(float(np.linalg.det(B))))


def conv_state_pred_density(
    noise_density: DensityFunction, A, B, eta: NoiseFamily, x, *, R: int = 2_000, seed: int = 0
) -> np.ndarray:
    """z(x) (or its estimate) at the rows of ``x`` by averaging over R draws of eta."""
    return state_root_density(noise_density, A, B, eta, draws=R, seed=seed)(x)


def conv_obs_pred_density(
    noise_density: DensityFunction, A, B, eta: NoiseFamily, x, *, R: int = 2_000, seed: int = 0
) -> np.ndarray:
    """g(x) (or its estimate) at the rows of ``x`` by averaging over R pairs of eta draws."""
    return observation_root_density(noise_density, A, B, eta, draws=R, seed=seed)(x)


class GaussianDensity:
    """Centered normal density with covariance ``cov``."""

    def __init__(self, cov):
        self.cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
        self._law = stats.multivariate_normal(mean=np.zeros(self.cov.shape[0]), cov=self.cov)

    def __call__(self, x) -> np.ndarray:
        x = as_points(x, self.cov.shape[0])
        return np.atleast_1d(self._law.pdf(x)).reshape(-1)


def has_gaussian_noises(spec: StateSpaceSpec) -> bool:
    return spec.eps.is_gaussian and spec.eta.is_gaussian


def true_state_density(spec: StateSpaceSpec) -> DensityFunction | None:
    """Stationary density of X_n, known in closed form for Gaussian state noise only."""
    if not spec.eps.is_gaussian:
        return None
    return GaussianDensity(spec.stationary_covariance())


@dataclass(frozen=True)
class TruthSettings:
    """Monte Carlo truths of non-Gaussian models: lattice [-extent, extent]^d."""

    draws: int = 1_000_000
    extent: float = 6.0
    points: int | None = None
    seed: int = 0
    cache_root: str | None = None

    def points_for(self, d: int) -> int:
        if self.points is not None:
            return self.points
        return 241 if d == 1 else 49


def true_root_density(
    spec: StateSpaceSpec, target: RootTarget, settings: TruthSettings = TruthSettings()
) -> DensityFunction:
    """True z (``target="state"``) or g (``target="observation"``).

    Gaussian models use the closed-form normal law of the root; other models
    a Monte Carlo lattice that is cached on disk.
    """
    if target not in ("state", "observation"):
        raise ValueError(f"target must be 'state' or 'observation', got {target!r}")
    if has_gaussian_noises(spec):
        return GaussianDensity(spec.root_covariances()[target])

    points = settings.points_for(spec.d)
    axes = [np.linspace(-settings.extent, settings.extent, points)] * spec.d
    key = {
        "target": target,
        "spec": spec.to_dict(),
        "extent": settings.extent,
        "points": points,
        "draws": settings.draws,
        "seed": settings.seed,
    }

    def compute():
        logger.info(
            "Computing Monte Carlo %s-root truth on %d^%d lattice with %d draws",
            target,
            points,
            spec.d,
            settings.draws,
        )
        build = state_root_density if target == "state" else observation_root_density
        root = build(
            spec.eps.density, spec.A, spec.B, spec.eta, draws=settings.draws, seed=settings.seed
        )
        return {"values": root(lattice_points(axes))}

    def on_hit(path):
        logger.info("Using cached %s-root truth %s", target, path.name)

    cached = file_cache_value(
        key, compute, scope="truth", cache_root=settings.cache_root, callback=on_hit
    )
    values = np.asarray(cached["values"], dtype=np.float64)
    if spec.d > 1:
        values = values.reshape((points,) * spec.d)
    return TabulatedDensity(axes, values, None)

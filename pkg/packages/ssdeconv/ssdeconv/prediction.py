# Copyright (c) 2025 Apple Inc. Licensed under MIT License.

"""Nonparametric prediction intervals for X_n, X_{n+1} and Y_{n+1}.

Each interval is a sup-norm box around a linear predictor built from the last
observation Y_n. Its radius is the (1 - alpha)-quantile of the sup norm of the
corresponding predictive root:

- filter:      X_n     - B^-1 Y_n       = -B^-1 eta_n
- state:       X_{n+1} - A B^-1 Y_n     = eps_{n+1} - A B^-1 eta_n
- observation: Y_{n+1} - B A B^-1 Y_n   = eta_{n+1} + B eps_{n+1} - B A B^-1 eta_n

The root CDFs are Monte Carlo integrals (H, N and G below) evaluated with
common random numbers: one fixed set of measurement-noise draws and uniform
cube draws is reused for every radius, which makes each CDF estimate a
continuous nondecreasing-in-practice function of the radius. The quantile is
then found by doubling followed by bisection.
"""

import enum
import math
from collections.abc import Callable
from dataclasses import dataclass
from typing import NamedTuple, Protocol

import numpy as np

from .errors import LevelUnreachableError
from .estimation import DensityEstimate, TabulatedDensity
from .linalg import as_matrix, checked_inverse, sup_norm_rows
from .model import ObservationSeries, StateSpaceSpec
from .noise import NoiseFamily
from .utils import logger, rng_for

DensityFunction = Callable[[np.ndarray], np.ndarray]

# Stream keys under MCBudget.seed.
_STREAM_ETA = 0
_STREAM_ETA_NEXT = 1
_STREAM_CUBE = 2
_STREAM_EPS = 3

MAX_DOUBLINGS_LIMIT = 60


class RootKind(enum.Enum):
    FILTER = "filter"
    STATE = "state"
    OBSERVATION = "observation"


@dataclass(frozen=True)
class MCBudget:
    """Monte Carlo settings of one interval construction.

    R: draws per CDF evaluation; tol: final bracket width of the search;
    max_doublings: cap on the doubling phase; seed: draws are a function of it.
    """

    R: int = 100_000
    tol: float = 1e-3
    max_doublings: int = MAX_DOUBLINGS_LIMIT
    seed: int = 0

    def __post_init__(self):
        if self.R < 1:
            raise ValueError(f"R must be >= 1, got {self.R}")
        if not (math.isfinite(self.tol) and self.tol > 0):
            raise ValueError(f"tol must be positive, got {self.tol}")
        if not 0 <= self.max_doublings <= MAX_DOUBLINGS_LIMIT:
            raise ValueError(
                f"max_doublings must be in [0, {MAX_DOUBLINGS_LIMIT}], got {self.max_doublings}"
            )
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")


@dataclass(frozen=True, eq=False)
class CommonDraws:
    """The fixed draw set shared by every CDF evaluation of one construction."""

    eta: np.ndarray
    eta_next: np.ndarray
    cube: np.ndarray

    @classmethod
    def draw(cls, eta: NoiseFamily, budget: MCBudget) -> "CommonDraws":
        return cls(
            eta=eta.sample(budget.R, rng_for(budget.seed, _STREAM_ETA)),
            eta_next=eta.sample(budget.R, rng_for(budget.seed, _STREAM_ETA_NEXT)),
            cube=rng_for(budget.seed, _STREAM_CUBE).uniform(-1.0, 1.0, size=(budget.R, eta.d)),
        )


class FilterCdf:
    """H(x): fraction of draws with ||B^-1 eta||_inf <= x."""

    def __init__(self, B, draws: CommonDraws):
        B_inv = checked_inverse(as_matrix(B, "B"), "B")
        self._norms = np.sort(sup_norm_rows(draws.eta @ B_inv.T))

    def __call__(self, x: float) -> float:
        return float(np.searchsorted(self._norms, x, side="right")) / self._norms.size


class StateRootCdf:
    """N(x) = (2x)^d * mean_j f_eps(x u_j + A B^-1 eta_j)."""

    def __init__(self, noise_density: DensityFunction, A, B, draws: CommonDraws):
        A = as_matrix(A, "A")
        B_inv = checked_inverse(as_matrix(B, "B"), "B")
        self._density = noise_density
        self._offsets = draws.eta @ (A @ B_inv).T
        self._cube = draws.cube

    def __call__(self, x: float) -> float:
        d = self._cube.shape[1]
        points = x * self._cube + self._offsets
        return (2.0 * x) ** d * float(np.mean(self._density(points)))


class ObservationRootCdf:
    """G(x) = (2x)^d / |det B| * mean_j f_eps(B^-1 x u_j + A B^-1 eta_j - B^-1 eta'_j)."""

    def __init__(self, noise_density: DensityFunction, A, B, draws: CommonDraws):
        A = as_matrix(A, "A")
        B = as_matrix(B, "B")
        B_inv = checked_inverse(B, "B")
        self._density = noise_density
        self._offsets = draws.eta @ (A @ B_inv).T - draws.eta_next @ B_inv.T
        self._cube = draws.cube @ B_inv.T
        self._scale = 1.0 / abs(float(np.linalg.det(B)))

    def __call__(self, x: float) -> float:
        d = self._cube.shape[1]
        points = x * self._cube + self._offsets
        return (2.0 * x) ** d * self._scale * float(np.mean(self._density(points)))


def op_H(x: float, B, eta: NoiseFamily, budget: MCBudget, draws: CommonDraws | None = None) -> float:
    if draws is None:
        draws = CommonDraws.draw(eta, budget)
    return FilterCdf(B, draws)(x)


def op_N(
    x: float,
    noise_density: DensityFunction,
    A_hat,
    B,
    eta: NoiseFamily,
    budget: MCBudget,
    draws: CommonDraws | None = None,
) -> float:
    if draws is None:
        draws = CommonDraws.draw(eta, budget)
    return StateRootCdf(noise_density, A_hat, B, draws)(x)


def op_G(
    x: float,
    noise_density: DensityFunction,
    A_hat,
    B,
    eta: NoiseFamily,
    budget: MCBudget,
    draws: CommonDraws | None = None,
) -> float:
    if draws is None:
        draws = CommonDraws.draw(eta, budget)
    return ObservationRootCdf(noise_density, A_hat, B, draws)(x)


@dataclass(frozen=True)
class SearchResult:
    x: float
    evaluations: int
    lower: float
    upper: float

    @property
    def bracket_width(self) -> float:
        return self.upper - self.lower


def search_quantile(
    cdf: Callable[[float], float], level: float, budget: MCBudget = MCBudget()
) -> SearchResult:
    """Smallest x with cdf(x) >= level, to within ``budget.tol``.

    Doubles the upper end of the bracket [0, 1] until it reaches the level,
    keeping the last failing point as the lower end, then bisects until the
    bracket is at most ``budget.tol`` wide and returns its midpoint. Values
    above 1 count as 1.
    """
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must be in (0, 1), got {level}")
    evaluations = 0

    def reaches(x: float) -> bool:
        nonlocal evaluations
        evaluations += 1
        return min(cdf(x), 1.0) >= level

    lower, upper = 0.0, 1.0
    doublings = 0
    while not reaches(upper):
        if doublings >= budget.max_doublings:
            raise LevelUnreachableError(
                f"level {level} not reached after {doublings} doublings (x = {upper:.6g}); "
                "the density estimate may lack mass or R may be too small"
            )
        lower, upper = upper, 2.0 * upper
        doublings += 1

    while upper - lower > budget.tol:
        mid = 0.5 * (lower + upper)
        if reaches(mid):
            upper = mid
        else:
            lower = mid

    return SearchResult(0.5 * (lower + upper), evaluations, lower, upper)


@dataclass(frozen=True, eq=False)
class IntervalReport:
    """The box {v : ||v - center||_inf <= radius}."""

    kind: RootKind
    center: np.ndarray
    radius: float
    level: float
    evaluations: int = 0
    bracket_width: float = 0.0

    @property
    def d(self) -> int:
        return self.center.shape[0]

    def contains(self, v) -> bool:
        v = np.asarray(v, dtype=np.float64).reshape(-1)
        return bool(np.max(np.abs(v - self.center)) <= self.radius)

    def axis_lengths(self) -> np.ndarray:
        return np.full(self.d, 2.0 * self.radius)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "center": self.center.tolist(),
            "radius": self.radius,
            "level": self.level,
            "evaluations": self.evaluations,
        }


class Region(Protocol):
    kind: RootKind
    center: np.ndarray
    level: float

    def contains(self, v) -> bool: ...

    def axis_lengths(self) -> np.ndarray: ...

    def to_dict(self) -> dict: ...


class IntervalSet(NamedTuple):
    """The filter, state and observation regions of one construction."""

    filter: Region
    state: Region
    observation: Region

    def to_dict(self) -> dict:
        return {kind: report.to_dict() for kind, report in self._asdict().items()}


@dataclass(frozen=True)
class TabulationSettings:
    """Lattice used to tabulate the noise density before the searches.

    The lattice covers the draw offsets plus ``margin`` times the largest
    row sum of |B^-1| in every direction.
    """

    enabled: bool = True
    points: int | None = None
    margin: float = 8.0


def predict_intervals(
    series: ObservationSeries,
    B,
    eta: NoiseFamily,
    noise_density: DensityFunction,
    A_hat,
    level: float = 0.95,
    budget: MCBudget = MCBudget(),
    *,
    tabulation: TabulationSettings = TabulationSettings(),
) -> IntervalSet:
    """Prediction boxes for X_n, X_{n+1} and Y_{n+1} at the given level.

    ``noise_density`` is usually the fitted ``DensityEstimate`` of f_eps (or
    the true density in oracle runs). A ``DensityEstimate`` is tabulated first
    unless ``tabulation.enabled`` is false.
    """
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must be in (0, 1), got {level}")
    B = as_matrix(B, "B")
    A_hat = as_matrix(A_hat, "A_hat")
    B_inv = checked_inverse(B, "B")
    draws = CommonDraws.draw(eta, budget)

    density = noise_density
    if tabulation.enabled and isinstance(noise_density, DensityEstimate):
        density = _tabulate_for_search(noise_density, A_hat, B_inv, draws, tabulation)

    filter_center = B_inv @ series.last
    state_center = A_hat @ filter_center
    observation_center = B @ state_center

    reports = []
    for kind, cdf, center in (
        (RootKind.FILTER, FilterCdf(B, draws), filter_center),
        (RootKind.STATE, StateRootCdf(density, A_hat, B, draws), state_center),
        (RootKind.OBSERVATION, ObservationRootCdf(density, A_hat, B, draws), observation_center),
    ):
        result = search_quantile(cdf, level, budget)
        logger.debug(
            "%s search: x=%.6g evaluations=%d bracket=[%.6g, %.6g]",
            kind.value,
            result.x,
            result.evaluations,
            result.lower,
            result.upper,
        )
        reports.append(
            IntervalReport(
                kind=kind,
                center=center,
                radius=result.x,
                level=level,
                evaluations=result.evaluations,
                bracket_width=result.bracket_width,
            )
        )
    return IntervalSet(*reports)


def _tabulate_for_search(
    estimate: DensityEstimate,
    A_hat: np.ndarray,
    B_inv: np.ndarray,
    draws: CommonDraws,
    settings: TabulationSettings,
) -> TabulatedDensity:
    offsets = np.concatenate(
        [draws.eta @ (A_hat @ B_inv).T, draws.eta_next @ B_inv.T], axis=0
    )
    reach = np.max(np.abs(offsets), axis=0)
    reach = reach + settings.margin * max(1.0, float(np.linalg.norm(B_inv, ord=np.inf)))
    return estimate.tabulate(-reach, reach, points=settings.points)


def root_cdf_oracle(
    kind: RootKind, x, spec: StateSpaceSpec, R: int = 100_000, seed: int = 0
) -> np.ndarray | float:
    """P(||root||_inf <= x) by direct simulation of the predictive root under ``spec``."""
    if R < 1:
        raise ValueError(f"R must be >= 1, got {R}")
    eta = spec.eta.sample(R, rng_for(seed, _STREAM_ETA))
    B_inv = spec.B_inv
    if kind is RootKind.FILTER:
        root = -eta @ B_inv.T
    else:
        eps = spec.eps.sample(R, rng_for(seed, _STREAM_EPS))
        root = eps - eta @ (spec.A @ B_inv).T
        if kind is RootKind.OBSERVATION:
            eta_next = spec.eta.sample(R, rng_for(seed, _STREAM_ETA_NEXT))
            root = eta_next + root @ spec.B.T
    norms = np.sort(sup_norm_rows(root))
    result = np.searchsorted(norms, np.asarray(x, dtype=np.float64), side="right") / R
    return float(result) if np.ndim(result) == 0 else result

# Copyright (c) 2025 Apple Inc. Licensed under MIT License.

from dataclasses import asdict, dataclass
from typing import Literal, TypedDict

try:
    from typing import Unpack
except ImportError:  # Python < 3.11
    from typing_extensions import Unpack

from .cache import sha256_hexdigest

Regime = Literal["ordinary", "super"]
KalmanInitOption = Literal["zero", "stationary"]
EXECUTION_OPTIONS = frozenset({"concurrency", "cache_dir"})


class ExperimentOptions(TypedDict, total=False):
    """
    model:
        Benchmark model id: ``"O1"``, ``"S1"``, ``"O2"`` or ``"S2"``.

    n:
        Length of every simulated series.

    replicates:
        Number of independent replicates (default 100).

    seed:
        Master seed. Every replicate derives its own streams from it, so a
        report is a pure function of its configuration.

    nodes:
        Number of Fourier integration nodes of the density estimators
        (default 10,000).

    antithetic:
        Append the negated nodes to the node set.

    kernel_a:
        Support radius of the flat-top kernel's Fourier transform (default 2).

    h:
        Explicit bandwidth. Overrides ``regime``.

    regime:
        ``"ordinary"`` (h = n^-1/8) or ``"super"`` (h = log(n)^-0.1). Defaults to
        the model's own regime.

    mc:
        Draws per CDF evaluation of the interval search (default 100,000).

    eps_tol:
        Final bracket width of the interval search (default 1e-3).

    level:
        Nominal coverage of the prediction regions (default 0.95).

    burn_in:
        Discarded steps before each simulated series (default 1,000).

    t2_samples:
        Monte Carlo points of the T2 error metric (default 50,000).

    conv_draws:
        Measurement-noise draws used to form the convolved estimators (default 2,000).

    truth_draws:
        Draws of the cached Monte Carlo truths of non-Gaussian models
        (default 1,000,000).

    kalman_init:
        Initial error covariance of the Kalman baseline: ``"stationary"``
        (default, matching the burn-in start) or ``"zero"``.

    grid_min, grid_max, grid_points:
        Evaluation grid of the figure bands (default [-4, 4] with 161 points).

    concurrency:
        Replicates processed in parallel (default: ``$SSDECONV_THREADS`` or the CPU count).

    skip_failures:
        Record replicates that fail numerically and continue instead of aborting.

    cache_dir:
        Directory of the on-disk truth cache.
    """

    model: str
    n: int
    replicates: int
    seed: int
    nodes: int
    antithetic: bool
    kernel_a: float
    h: float | None
    regime: Regime | None
    mc: int
    eps_tol: float
    level: float
    burn_in: int
    t2_samples: int
    conv_draws: int
    truth_draws: int
    kalman_init: KalmanInitOption
    grid_min: float
    grid_max: float
    grid_points: int
    concurrency: int | None
    skip_failures: bool
    cache_dir: str | None


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "S1"
    n: int = 500
    replicates: int = 100
    seed: int = 0
    nodes: int = 10_000
    antithetic: bool = False
    kernel_a: float = 2.0
    h: float | None = None
    regime: Regime | None = None
    mc: int = 100_000
    eps_tol: float = 1e-3
    level: float = 0.95
    burn_in: int = 1_000
    t2_samples: int = 50_000
    conv_draws: int = 2_000
    truth_draws: int = 1_000_000
    kalman_init: KalmanInitOption = "stationary"
    grid_min: float = -4.0
    grid_max: float = 4.0
    grid_points: int = 161
    concurrency: int | None = None
    skip_failures: bool = False
    cache_dir: str | None = None

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError(f"replicates must be >= 1, got {self.replicates}")
        if self.n < 3:
            raise ValueError(f"n must be >= 3, got {self.n}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")
        if not 0.0 < self.level < 1.0:
            raise ValueError(f"level must be in (0, 1), got {self.level}")
        if self.regime not in (None, "ordinary", "super"):
            raise ValueError(f"regime must be 'ordinary' or 'super', got {self.regime!r}")
        if self.kalman_init not in ("zero", "stationary"):
            raise ValueError(f"kalman_init must be 'zero' or 'stationary', got {self.kalman_init!r}")
        if self.grid_points < 2 or not self.grid_min < self.grid_max:
            raise ValueError("figure grid needs grid_min < grid_max and at least 2 points")
        for name in ("nodes", "mc", "t2_samples", "conv_draws", "truth_draws"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")

    def to_dict(self) -> dict:
        return asdict(self)

    def result_dict(self) -> dict:
        """The settings that determine results; execution-only settings are left out."""
        return {k: v for k, v in self.to_dict().items() if k not in EXECUTION_OPTIONS}

    def replace(self, **options: Unpack[ExperimentOptions]) -> "ExperimentConfig":
        return make_experiment_config(**{**self.to_dict(), **options})

    @property
    def config_hash(self) -> str:
        return sha256_hexdigest(self.result_dict(), scope="experiment")[:16]


def make_experiment_config(**options: Unpack[ExperimentOptions]) -> ExperimentConfig:
    """
    Validate experiment options and fill in defaults.
    """
    allowed_options = ExperimentOptions.__optional_keys__ | ExperimentOptions.__required_keys__
    invalid_options = options.keys() - allowed_options

    if len(invalid_options) > 0:
        raise ValueError(
            f"The following experiment options are not allowed: {','.join(sorted(invalid_options))}. "
            f"Allowed options are {', '.join(sorted(allowed_options))}"
        )

    values = {k: v for k, v in options.items() if v is not None or k in ("h", "regime")}
    if "model" in values:
        values["model"] = str(values["model"]).upper()
    return ExperimentConfig(**values)  # type: ignore[arg-type]

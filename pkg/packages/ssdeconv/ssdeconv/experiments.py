# Copyright (c) 2025 Apple Inc. Licensed under MIT License.

"""Replicated experiments on the benchmark models.

- ``run_table1``: estimation errors of A, f_X, f_eps and the convolved root
  densities, summarized by mean and 90% quantile.
- ``run_table2``: coverage and mean length of the nonparametric boxes and of
  the Kalman ellipsoids for X_n, X_{n+1} and Y_{n+1}.
- ``figure1_bands``: pointwise mean and quantile bands of an estimated curve
  across replicates, next to the true curve.

Every replicate derives its random streams from the master seed, the model,
n and its index, so reports are independent of scheduling and worker count.
"""

import json
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np
import pandas as pd

from .cache import sha256_hexdigest
from .errors import DataError, NumericError, ReplicateError
from .estimation import DensityEstimate, FittedModel, fit_model, tabulate_function
from .kalman import kalman_intervals
from .kernel import BandwidthPolicy, KernelSpec, default_bandwidth
from .linalg import spectral_norm
from .options import ExperimentConfig
from .parallel_map import parallel_map
from .prediction import IntervalSet, MCBudget, predict_intervals
from .simulation import (
    BENCHMARK_IDS,
    BenchmarkModel,
    RootDensity,
    SimulatedSeries,
    TruthSettings,
    benchmark_model,
    generate_series,
    observation_root_density,
    state_root_density,
    t2_norm_diff,
    true_root_density,
    true_state_density,
)
from .utils import atomic_write_text, derive_seed, logger

BandTarget = Literal["f_eps", "z", "g"]
BAND_TARGETS: tuple[BandTarget, ...] = ("f_eps", "z", "g")

TABLE1_PUBLISHED_ROWS = (("O1", 500), ("O1", 2000), ("S1", 500), ("S1", 2000), ("O2", 5000), ("S2", 5000))
TABLE2_PUBLISHED_ROWS = (("O1", 500), ("O1", 2000), ("S1", 500), ("S1", 2000))
PUBLISHED_REPLICATES = 500

TABLE1_QUANTITIES = ("A", "f_X", "f_eps", "z", "g")
ROOT_LABELS = {"filter": "F", "state": "PX", "observation": "PY"}

# Per-replicate stream keys.
_STREAM_SERIES = 0
_STREAM_NODES = 1
_STREAM_CONV = 2
_STREAM_T2 = 3
_STREAM_INTERVALS = 4


def _density_table_points(d: int) -> int:
    return 2048 if d == 1 else 128


def _root_table_points(d: int) -> int:
    return 512 if d == 1 else 64


@dataclass(frozen=True)
class ExperimentContext:
    """Quantities shared by all replicates of one configuration."""

    config: ExperimentConfig
    model: BenchmarkModel
    h: float
    bandwidth: str

    @classmethod
    def create(cls, config: ExperimentConfig) -> "ExperimentContext":
        model = benchmark_model(config.model)
        if config.h is not None:
            policy = BandwidthPolicy(h=config.h)
        elif config.regime is not None:
            policy = BandwidthPolicy.for_spec(model.spec, config.regime)
        else:
            policy = model.bandwidth
        return cls(config, model, default_bandwidth(config.n, policy), policy.label)

    def seed(self, replicate: int, stream: int) -> int:
        model_index = BENCHMARK_IDS.index(self.model.id)
        return derive_seed(self.config.seed, model_index, self.config.n, replicate, stream)

    def simulate(self, replicate: int) -> SimulatedSeries:
        return generate_series(
            self.model, self.config.n, self.seed(replicate, _STREAM_SERIES), self.config.burn_in
        )

    def fit(self, sim: SimulatedSeries, replicate: int, state_density: bool) -> FittedModel:
        spec = self.model.spec
        return fit_model(
            sim.observations,
            spec.B,
            spec.eta,
            h=self.h,
            nodes=self.config.nodes,
            seed=self.seed(replicate, _STREAM_NODES),
            kernel=KernelSpec(self.config.kernel_a),
            antithetic=self.config.antithetic,
            state_density=state_density,
        )

    def root_estimates(
        self, fit: FittedModel, replicate: int, half_width: float
    ) -> tuple[RootDensity, RootDensity]:
        """z-hat and g-hat over a tabulated f_eps-hat that covers [-half_width, half_width]^d."""
        spec = self.model.spec
        seed = self.seed(replicate, _STREAM_CONV)
        draws = self.config.conv_draws
        z_hat = state_root_density(fit.noise_density, fit.A_hat, spec.B, spec.eta, draws=draws, seed=seed)
        g_hat = observation_root_density(
            fit.noise_density, fit.A_hat, spec.B, spec.eta, draws=draws, seed=seed
        )
        reach = np.maximum(z_hat.reach(half_width), g_hat.reach(half_width))
        table = fit.noise_density.tabulate(-reach, reach)
        return z_hat.with_density(table), g_hat.with_density(table)

    def truth_settings(self) -> TruthSettings:
        return TruthSettings(draws=self.config.truth_draws, cache_root=self.config.cache_dir)

    def effective_config(self) -> dict:
        return {**self.config.result_dict(), "h_effective": self.h, "bandwidth": self.bandwidth}


def _run_replicates(
    context: ExperimentContext,
    description: str,
    func: Callable[[int], dict[str, Any]],
) -> tuple[list[dict[str, Any]], list[int]]:
    config = context.config

    def guarded(replicate: int) -> dict[str, Any] | None:
        try:
            return func(replicate)
        except NumericError as e:
            if config.skip_failures:
                logger.warning("Replicate %d failed and is skipped: %s", replicate, e)
                return None
            raise ReplicateError(replicate, e) from e
        except Exception as e:
            raise ReplicateError(replicate, e) from e

    results = parallel_map(
        list(range(config.replicates)),
        guarded,
        concurrency=config.concurrency,
        description=description,
    )
    rows = [dict(r, replicate=i) for i, r in enumerate(results) if r is not None]
    failures = [i for i, r in enumerate(results) if r is None]
    if not rows:
        raise DataError(f"all {config.replicates} replicates failed")
    return rows, failures


@dataclass
class MetricReport:
    """Summary rows plus the per-replicate values they aggregate."""

    kind: str
    configs: list[dict]
    summary: pd.DataFrame
    replicates: pd.DataFrame
    failures: list[int] = field(default_factory=list)

    @property
    def config_hash(self) -> str:
        return sha256_hexdigest(self.configs, scope=self.kind)[:16]

    @property
    def master_seed(self) -> int:
        return int(self.configs[0]["seed"])

    def header(self) -> str:
        configs = json.dumps(self.configs, sort_keys=True)
        return (
            f"# ssdeconv {self.kind} config_hash={self.config_hash} master_seed={self.master_seed}\n"
            f"# config={configs}\n"
        )

    def to_csv_text(self) -> str:
        return self.header() + self.summary.to_csv(index=False, float_format="%.6g", lineterminator="\n")

    def to_json_text(self) -> str:
        data = {
            "kind": self.kind,
            "config_hash": self.config_hash,
            "master_seed": self.master_seed,
            "configs": self.configs,
            "failures": self.failures,
            "rows": json.loads(self.summary.to_json(orient="records")),
        }
        return json.dumps(data, indent=2, sort_keys=True) + "\n"

    def write(self, path) -> None:
        """Write CSV, or JSON when ``path`` ends in ``.json``; atomically."""
        text = self.to_json_text() if str(path).endswith(".json") else self.to_csv_text()
        atomic_write_text(path, text)

    @classmethod
    def concat(cls, reports: list["MetricReport"]) -> "MetricReport":
        if not reports:
            raise ValueError("no reports to combine")
        return cls(
            kind=reports[0].kind,
            configs=[c for r in reports for c in r.configs],
            summary=pd.concat([r.summary for r in reports], ignore_index=True),
            replicates=pd.concat([r.replicates for r in reports], ignore_index=True),
            failures=[f for r in reports for f in r.failures],
        )


def run_table1(config: ExperimentConfig) -> MetricReport:
    """Estimation errors: ||A-hat - A||_2 and T2 errors of f_X, f_eps, z and g."""
    context = ExperimentContext.create(config)
    spec = context.model.spec
    d = spec.d
    half = 1.0 / context.h
    state_truth = true_state_density(spec)
    z_truth = true_root_density(spec, "state", context.truth_settings())
    g_truth = true_root_density(spec, "observation", context.truth_settings())
    logger.info(
        "table1: model=%s n=%d replicates=%d h=%.4g", config.model, config.n, config.replicates, context.h
    )

    def t2(estimate, truth, replicate: int, which: int) -> float:
        return t2_norm_diff(
            estimate,
            truth,
            h=context.h,
            d=d,
            mc_samples=config.t2_samples,
            seed=derive_seed(context.seed(replicate, _STREAM_T2), which),
        )

    def cube_table(func) -> Callable[[np.ndarray], np.ndarray]:
        return tabulate_function(func, -half, half, d=d, points=_root_table_points(d), exact_outside=False)

    def replicate(r: int) -> dict[str, Any]:
        sim = context.simulate(r)
        fit = context.fit(sim, r, state_density=state_truth is not None)
        z_hat, g_hat = context.root_estimates(fit, r, half)
        errors: dict[str, Any] = {"A": spectral_norm(fit.A_hat - spec.A)}
        if state_truth is not None and fit.state_density is not None:
            f_x = _cube_density_table(fit.state_density, half)
            errors["f_X"] = t2(f_x, state_truth, r, 0)
        else:
            errors["f_X"] = math.nan
        errors["f_eps"] = t2(_cube_density_table(fit.noise_density, half), spec.eps.density, r, 1)
        errors["z"] = t2(cube_table(z_hat), z_truth, r, 2)
        errors["g"] = t2(cube_table(g_hat), g_truth, r, 3)
        return errors

    rows, failures = _run_replicates(context, f"table1 {config.model} n={config.n}", replicate)
    per_replicate = pd.DataFrame(rows)
    summary: dict[str, Any] = {"model": config.model, "n": config.n}
    for q in TABLE1_QUANTITIES:
        values = per_replicate[q].to_numpy(dtype=np.float64)
        known = not np.all(np.isnan(values))
        summary[f"{q}_mean"] = float(np.nanmean(values)) if known else math.nan
        summary[f"{q}_q90"] = float(np.nanquantile(values, 0.9)) if known else math.nan
    summary.update(
        {"h": context.h, "replicates": len(rows), "failures": len(failures)}
    )
    return MetricReport(
        kind="table1",
        configs=[context.effective_config()],
        summary=pd.DataFrame([summary]),
        replicates=per_replicate.assign(model=config.model, n=config.n),
        failures=failures,
    )


def _cube_density_table(estimate: DensityEstimate, half: float):
    return estimate.tabulate(-half, half, points=_density_table_points(estimate.d))


def _score(regions: IntervalSet, sim: SimulatedSeries) -> dict[str, Any]:
    truths = {
        "filter": sim.states[-1],
        "state": sim.next_state,
        "observation": sim.next_observation,
    }
    out: dict[str, Any] = {}
    for name, region in regions._asdict().items():
        label = ROOT_LABELS[name]
        out[f"covered_{label}"] = region.contains(truths[name])
        out[f"length_{label}"] = float(np.mean(region.axis_lengths()))
    return out


def run_table2(config: ExperimentConfig) -> MetricReport:
    """Coverage and mean length of the nonparametric boxes and the Kalman ellipsoids."""
    context = ExperimentContext.create(config)
    spec = context.model.spec
    logger.info(
        "table2: model=%s n=%d replicates=%d h=%.4g R=%d",
        config.model,
        config.n,
        config.replicates,
        context.h,
        config.mc,
    )

    def replicate(r: int) -> dict[str, Any]:
        sim = context.simulate(r)
        fit = context.fit(sim, r, state_density=False)
        budget = MCBudget(R=config.mc, tol=config.eps_tol, seed=context.seed(r, _STREAM_INTERVALS))
        boxes = predict_intervals(
            sim.observations, spec.B, spec.eta, fit.noise_density, fit.A_hat, config.level, budget
        )
        ellipsoids = kalman_intervals(spec, sim.observations, config.level, init=config.kalman_init)
        row: dict[str, Any] = {}
        for method, regions in (("algorithm1", boxes), ("kalman", ellipsoids)):
            row.update({f"{method}.{k}": v for k, v in _score(regions, sim).items()})
        return row

    rows, failures = _run_replicates(context, f"table2 {config.model} n={config.n}", replicate)
    per_replicate = pd.DataFrame(rows)
    summary = []
    for method in ("algorithm1", "kalman"):
        entry: dict[str, Any] = {"model": config.model, "n": config.n, "method": method}
        for label in ROOT_LABELS.values():
            entry[f"coverage_{label}"] = float(per_replicate[f"{method}.covered_{label}"].mean())
        for label in ROOT_LABELS.values():
            entry[f"length_{label}"] = float(per_replicate[f"{method}.length_{label}"].mean())
        entry.update({"h": context.h, "replicates": len(rows), "failures": len(failures)})
        summary.append(entry)
    return MetricReport(
        kind="table2",
        configs=[context.effective_config()],
        summary=pd.DataFrame(summary),
        replicates=per_replicate.assign(model=config.model, n=config.n),
        failures=failures,
    )


def figure1_bands(config: ExperimentConfig, target: BandTarget = "f_eps") -> MetricReport:
    """Pointwise mean, 5%, 50% and 95% quantiles of an estimated curve on the grid.

    Only one-dimensional models are supported.
    """
    if target not in BAND_TARGETS:
        raise ValueError(f"target must be one of {', '.join(BAND_TARGETS)}, got {target!r}")
    context = ExperimentContext.create(config)
    spec = context.model.spec
    if spec.d != 1:
        raise DataError(f"figure bands need a one-dimensional model, {config.model} has d={spec.d}")
    grid = np.linspace(config.grid_min, config.grid_max, config.grid_points)
    if target == "f_eps":
        truth = spec.eps.density(grid)
    else:
        which = "state" if target == "z" else "observation"
        truth = true_root_density(spec, which, context.truth_settings())(grid)
    half = float(np.max(np.abs(grid)))

    def replicate(r: int) -> dict[str, Any]:
        sim = context.simulate(r)
        fit = context.fit(sim, r, state_density=False)
        if target == "f_eps":
            curve = fit.noise_density(grid)
        else:
            z_hat, g_hat = context.root_estimates(fit, r, half)
            curve = (z_hat if target == "z" else g_hat)(grid)
        return {"curve": curve}

    rows, failures = _run_replicates(
        context, f"figure1 {target} {config.model} n={config.n}", replicate
    )
    curves = np.stack([row["curve"] for row in rows])
    bands = pd.DataFrame(
        {
            "grid": grid,
            "truth": truth,
            "mean": curves.mean(axis=0),
            "q05": np.quantile(curves, 0.05, axis=0),
            "q50": np.quantile(curves, 0.5, axis=0),
            "q95": np.quantile(curves, 0.95, axis=0),
        }
    )
    per_replicate = pd.DataFrame(curves, columns=[f"{x:.6g}" for x in grid]).assign(
        replicate=[row["replicate"] for row in rows]
    )
    return MetricReport(
        kind=f"figure1.{target}",
        configs=[{**context.effective_config(), "target": target}],
        summary=bands,
        replicates=per_replicate,
        failures=failures,
    )


def run_published_rows(kind: Literal["table1", "table2"], config: ExperimentConfig) -> MetricReport:
    """All rows of a table at the published replication count."""
    rows = TABLE1_PUBLISHED_ROWS if kind == "table1" else TABLE2_PUBLISHED_ROWS
    runner = run_table1 if kind == "table1" else run_table2
    reports = [
        runner(config.replace(model=model, n=n, replicates=PUBLISHED_REPLICATES))
        for model, n in rows
    ]
    return MetricReport.concat(reports)

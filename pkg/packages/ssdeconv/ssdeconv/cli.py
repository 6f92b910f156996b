# Copyright (c) 2025 Apple Inc. Licensed under MIT License.

"""Command line interface."""

import json
import sys
from pathlib import Path

import click
import numpy as np

from .errors import DataError, NumericError, ReplicateError, SsdeconvError
from .estimation import fit_model
from .experiments import BAND_TARGETS, figure1_bands, run_published_rows, run_table1, run_table2
from .kalman import kalman_intervals
from .kernel import BandwidthPolicy, KernelSpec, default_bandwidth
from .model import RegimeKind, StateSpaceSpec
from .options import make_experiment_config
from .prediction import MCBudget, predict_intervals
from .series_io import read_series, write_matrix, write_series
from .simulation import BENCHMARK_IDS, benchmark_model, generate_series
from .utils import apply_logging_config, atomic_write_text, logger
from .version import __version__

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def resolve_model(model: str | None, spec: str | None) -> tuple[StateSpaceSpec, str]:
    """The model from exactly one of --model and --spec, with a label for reports."""
    if model is not None and spec is not None:
        raise click.UsageError("--model and --spec are mutually exclusive")
    if model is None and spec is None:
        raise click.UsageError("missing noise spec: pass --model or --spec")
    if model is not None:
        benchmark = benchmark_model(model)
        return benchmark.spec, benchmark.id
    assert spec is not None
    return StateSpaceSpec.load(spec), str(spec)


def resolve_bandwidth(
    n: int, h: float | None, regime: RegimeKind | None, spec: StateSpaceSpec
) -> tuple[float, str]:
    if h is not None:
        policy = BandwidthPolicy(h=h)
    else:
        policy = BandwidthPolicy.for_spec(spec, regime)
    return default_bandwidth(n, policy), policy.label


def write_json(path: str | Path, data: dict):
    atomic_write_text(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


def model_options(func):
    func = click.option(
        "--spec",
        "spec_path",
        type=click.Path(exists=True, dir_okay=False),
        default=None,
        help="JSON model specification (A, B, eps, eta).",
    )(func)
    func = click.option(
        "--model",
        type=click.Choice(BENCHMARK_IDS, case_sensitive=False),
        default=None,
        help="Built-in benchmark model.",
    )(func)
    return func


def fit_options(func):
    func = click.option(
        "--seed",
        type=click.IntRange(min=0),
        default=0,
        show_default=True,
        help="Master seed. Drives the Fourier nodes and, for intervals, the Monte Carlo draws through separate spawned streams.",
    )(func)
    func = click.option(
        "--nodes", type=click.IntRange(min=1), default=10_000, show_default=True, help="Fourier integration nodes."
    )(func)
    func = click.option(
        "--regime",
        type=click.Choice(["ordinary", "super"]),
        default=None,
        help="Force the smoothness regime that selects the bandwidth rule. Defaults to the one read off the model noise laws.",
    )(func)
    func = click.option("--h", type=click.FloatRange(min=0, min_open=True), default=None, help="Explicit bandwidth.")(func)
    return func


@click.group()
@click.option("--verbose", is_flag=True, default=False, help="Log debug messages.")
@click.version_option(__version__, prog_name="ssdeconv")
def cli(verbose: bool):
    """Nonparametric estimation and prediction intervals for linear state space models."""
    apply_logging_config(verbose)


@cli.command()
@model_options
@click.option("--n", type=click.IntRange(min=3), required=True, help="Number of observations.")
@click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True, help="Seed.")
@click.option("--burn-in", type=click.IntRange(min=0), default=1_000, show_default=True, help="Discarded steps.")
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Output series CSV.")
@click.option("--states", type=click.Path(dir_okay=False), default=None, help="Also write the hidden states here.")
def simulate(model, spec_path, n, seed, burn_in, out, states):
    """Simulate an observation series."""
    spec, label = resolve_model(model, spec_path)
    sim = generate_series(spec, n, seed, burn_in)
    comments = [f"ssdeconv simulate model={label} n={n} seed={seed} burn_in={burn_in}"]
    write_series(sim.observations, out, comments=comments)
    if states is not None:
        write_matrix(sim.states, states, prefix="x", comments=comments)
    logger.info("Wrote %d observations to %s", n, out)


@cli.command()
@click.option("--series", "series_path", type=click.Path(exists=True, dir_okay=False), required=True)
@model_options
@fit_options
@click.option("--antithetic", is_flag=True, default=False, help="Append negated Fourier nodes.")
@click.option("--grid-min", type=float, default=-4.0, show_default=True)
@click.option("--grid-max", type=float, default=4.0, show_default=True)
@click.option("--grid-points", type=click.IntRange(min=2), default=161, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), required=True, help="Output directory.")
def estimate(series_path, model, spec_path, h, regime, nodes, seed, antithetic, grid_min, grid_max, grid_points, out):
    """Estimate A, f_X and f_eps from an observation series."""
    spec, label = resolve_model(model, spec_path)
    series = read_series(series_path)
    if series.d != spec.d:
        raise DataError(f"{series_path}: series has d={series.d}, model has d={spec.d}")
    bandwidth, policy = resolve_bandwidth(series.n, h, regime, spec)
    fit = fit_model(
        series, spec.B, spec.eta, h=bandwidth, nodes=nodes, seed=seed, antithetic=antithetic
    )
    config = {
        "command": "estimate",
        "series": str(series_path),
        "model": label,
        "n": series.n,
        "bandwidth": policy,
        **fit.config(),
    }
    out_dir = Path(out)
    write_json(out_dir / "transition.json", {"config": config, "A_hat": fit.A_hat.tolist()})

    grid = np.linspace(grid_min, grid_max, grid_points)
    comment = f"# ssdeconv estimate {json.dumps(config, sort_keys=True)}\n"
    for name, density in (("noise_density", fit.noise_density), ("state_density", fit.state_density)):
        assert density is not None
        frame = density.to_frame(grid)
        atomic_write_text(
            out_dir / f"{name}.csv",
            comment + frame.to_csv(index=False, float_format="%.17g", lineterminator="\n"),
        )
    logger.info("Estimated A and densities with h=%.4g into %s", bandwidth, out_dir)


@cli.command()
@click.option("--series", "series_path", type=click.Path(exists=True, dir_okay=False), required=True)
@model_options
@fit_options
@click.option("--mc", type=click.IntRange(min=1), default=100_000, show_default=True, help="Draws per CDF evaluation.")
@click.option("--eps-tol", type=click.FloatRange(min=0, min_open=True), default=1e-3, show_default=True)
@click.option("--level", type=click.FloatRange(0, 1, min_open=True, max_open=True), default=0.95, show_default=True)
@click.option("--kalman/--no-kalman", default=False, help="Add the Kalman ellipsoids (uses the model's A).")
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Output JSON report.")
def intervals(series_path, model, spec_path, h, regime, nodes, seed, mc, eps_tol, level, kalman, out):
    """Prediction intervals for X_n, X_{n+1} and Y_{n+1}."""
    spec, label = resolve_model(model, spec_path)
    series = read_series(series_path)
    if series.d != spec.d:
        raise DataError(f"{series_path}: series has d={series.d}, model has d={spec.d}")
    bandwidth, policy = resolve_bandwidth(series.n, h, regime, spec)
    fit = fit_model(series, spec.B, spec.eta, h=bandwidth, nodes=nodes, seed=seed, state_density=False)
    budget = MCBudget(R=mc, tol=eps_tol, seed=seed)
    boxes = predict_intervals(series, spec.B, spec.eta, fit.noise_density, fit.A_hat, level, budget)
    report: dict = {
        "config": {
            "command": "intervals",
            "series": str(series_path),
            "model": label,
            "n": series.n,
            "bandwidth": policy,
            "mc": mc,
            "eps_tol": eps_tol,
            "level": level,
            **fit.config(),
        },
        "A_hat": fit.A_hat.tolist(),
        "intervals": boxes.to_dict(),
    }
    if kalman:
        report["kalman"] = kalman_intervals(spec, series, level).to_dict()
    write_json(out, report)
    logger.info("Wrote prediction intervals to %s", out)


@cli.command()
@click.argument("kind", type=click.Choice(["table1", "table2", "figure1"]))
@click.option("--model", type=click.Choice(BENCHMARK_IDS, case_sensitive=False), default="S1", show_default=True)
@click.option("--n", type=click.IntRange(min=3), default=500, show_default=True)
@click.option("--replicates", type=click.IntRange(min=1), default=100, show_default=True)
@fit_options
@click.option("--mc", type=click.IntRange(min=1), default=100_000, show_default=True)
@click.option("--eps-tol", type=click.FloatRange(min=0, min_open=True), default=1e-3, show_default=True)
@click.option("--level", type=click.FloatRange(0, 1, min_open=True, max_open=True), default=0.95, show_default=True)
@click.option("--target", type=click.Choice(BAND_TARGETS), default="f_eps", show_default=True, help="Curve for figure1.")
@click.option("--kalman-init", type=click.Choice(["stationary", "zero"]), default="stationary", show_default=True)
@click.option("--skip-failures", is_flag=True, default=False, help="Record failing replicates instead of aborting.")
@click.option("--full", is_flag=True, default=False, help="Rerun the published row sets with 500 replicates.")
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Report path (.csv or .json).")
def experiment(
    kind, model, n, replicates, h, regime, nodes, seed, mc, eps_tol, level, target, kalman_init, skip_failures, full, out
):
    """Reproduce the estimation table, the prediction table or the figure bands."""
    config = make_experiment_config(
        model=model,
        n=n,
        replicates=replicates,
        seed=seed,
        nodes=nodes,
        h=h,
        regime=regime,
        mc=mc,
        eps_tol=eps_tol,
        level=level,
        kalman_init=kalman_init,
        skip_failures=skip_failures,
    )
    if kind == "figure1":
        report = figure1_bands(config.replace(replicates=500) if full else config, target)
    elif full:
        report = run_published_rows(kind, config)
    else:
        report = run_table1(config) if kind == "table1" else run_table2(config)
    report.write(out)
    logger.info("Wrote %s report to %s", report.kind, out)


def _report_error(kind: str, message: str):
    message = " ".join(str(message).split())
    click.echo(f"error: kind={kind} message={message}", err=True)


def run_cli(argv: list[str] | None = None) -> int:
    """Run the command line with ``argv``; returns the process exit code."""
    try:
        result = cli.main(args=argv, prog_name="ssdeconv", standalone_mode=False)
    except click.UsageError as e:
        _report_error("usage", e.format_message())
        return EXIT_USAGE
    except click.Abort:
        _report_error("usage", "aborted")
        return 1
    except click.ClickException as e:
        _report_error("data", e.format_message())
        return EXIT_DATA
    except ReplicateError as e:
        numeric = isinstance(e.cause, NumericError)
        _report_error("numeric" if numeric else "data", str(e))
        return EXIT_NUMERIC if numeric else EXIT_DATA
    except NumericError as e:
        _report_error("numeric", str(e))
        return EXIT_NUMERIC
    except (DataError, SsdeconvError, OSError) as e:
        _report_error("data", str(e))
        return EXIT_DATA
    except ValueError as e:
        _report_error("usage", str(e))
        return EXIT_USAGE
    return result if isinstance(result, int) else 0


def main():
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()

"""Command-line interface.

Exit codes: 0 success, 1 input or fitting failure, 2 invalid configuration.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .adequacy import AdequacyError, GroupedData
from .dataio import (
    InputError,
    atomic_write,
    atomic_write_files,
    parse_grouped,
    parse_values,
    returns_from_prices,
    truncate,
)
from .engine import (
    ConfigError,
    EngineConfig,
    EngineError,
    adequate_bootstrap,
    standard_bootstrap,
    to_jsonable,
)
from .isotonic import ScheduleError
from .models import (
    FitError,
    LogNormal,
    NormalKnownMean,
    NormalKnownVariance,
    Pareto1,
    Pareto1Grouped,
    SamplingBias,
    nonparametric_percentile_ci,
)
from .sim import (
    ContaminationScenario,
    SamplingBiasScenario,
    contamination_config,
    emit_llr_qq,
    run_contamination,
    run_sampling_bias,
)
from .statdist import DomainError
from .theory import (
    coverage_table,
    coverage_table_tsv,
    sampling_bias_coverage,
    schur_eigen_coefficient,
)

EXIT_FAILURE = 1
EXIT_CONFIG = 2

MODELS = ("normal-mean", "normal-sigma", "lognormal", "pareto", "pareto-grouped", "sampling-bias")
RUN_FAILURES = (InputError, FitError, AdequacyError, EngineError, ScheduleError, DomainError, OSError)


class Fail(click.ClickException):
    exit_code = EXIT_FAILURE


class BadConfig(click.ClickException):
    exit_code = EXIT_CONFIG


def _run(fn):
    """Map library errors onto exit codes."""
    try:
        return fn()
    except ConfigError as exc:
        raise BadConfig(str(exc)) from None
    except RUN_FAILURES as exc:
        raise Fail(str(exc)) from None


def engine_options(f):
    opts = [
        click.option("--alpha", default=0.05, show_default=True, help="Size of the adequacy test."),
        click.option("--coverage", default=0.95, show_default=True, help="Confidence level of the interval."),
        click.option("--replicates", default=1000, show_default=True, help="Bootstrap replicates B at the adequate size."),
        click.option("--target-power", default=0.5, show_default=True, help="Rejection probability defining the adequate size."),
        click.option("--size-method", type=click.Choice(["isotonic", "parametric"]), default="isotonic", show_default=True),
        click.option("--mode", type=click.Choice(["with_replacement", "without_replacement"]), default="with_replacement", show_default=True),
        click.option("--classes", default=10, show_default=True, help="Pearson classes K for individual data."),
        click.option("--layout", type=click.Choice(["equiprobable", "tails"]), default="equiprobable", show_default=True),
        click.option("--tail-prob", default=0.001, show_default=True, help="Tail class probability for --layout tails."),
        click.option("--stride", type=int, default=None, help="Size grid spacing (default N // 200)."),
        click.option("--seed", type=int, default=None, help="Random seed; drawn and recorded when omitted."),
        click.option("--threads", type=int, default=1, envvar="ADEQBOOT_THREADS", show_default=True),
    ]
    for o in reversed(opts):
        f = o(f)
    return f


def _config(kw) -> EngineConfig:
    try:
        return EngineConfig(
            adequacy_alpha=kw["alpha"],
            target_power=kw["target_power"],
            ci_coverage=kw["coverage"],
            replicates_B=kw["replicates"],
            resampling=kw["mode"],
            size_method=kw["size_method"],
            stride=kw["stride"],
            seed=kw["seed"],
            classes_K=kw["classes"],
            class_layout=kw["layout"],
            tail_prob=kw["tail_prob"],
            workers=kw["threads"],
        ).with_seed()
    except ConfigError as exc:
        raise BadConfig(str(exc)) from None


def load_input(path: str, fmt: str, lag: int = 1, lower_limit=None, sample_size=None):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise Fail(f"cannot read {path}: {exc.strerror or exc}") from None
    try:
        if fmt == "grouped":
            return parse_grouped(text, sample_size)
        x = parse_values(text)
        if fmt == "returns":
            x = returns_from_prices(x, lag)
        return truncate(x, lower_limit)
    except InputError as exc:
        raise Fail(f"{path}: {exc}") from None


def build_family(model: str, data, lower_limit=None, J: int = 5, known_sigma=1.0, known_mean=0.0):
    grouped = isinstance(data, GroupedData)
    if grouped != (model == "pareto-grouped"):
        need = "grouped" if model == "pareto-grouped" else "values or returns"
        raise BadConfig(f"model {model} needs {need} input")
    if model == "normal-mean":
        return NormalKnownVariance(known_sigma)
    if model == "normal-sigma":
        return NormalKnownMean(known_mean)
    if model == "lognormal":
        return LogNormal()
    if model == "pareto":
        return Pareto1(lower_limit if lower_limit is not None else float(np.min(data)))
    if model == "pareto-grouped":
        eta = lower_limit if lower_limit is not None else float(data.boundaries[0])
        if not eta > 0:
            raise BadConfig("pareto-grouped needs a positive lower limit")
        return Pareto1Grouped(eta)
    return SamplingBias.equiprobable(J)


@click.group()
@click.version_option(__version__)
@click.option("-v", "--verbose", count=True, help="Log progress to stderr.")
def main(verbose):
    """Adequate bootstrap intervals, theory tables and simulation studies."""
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2), stream=sys.stderr)


@main.command("adequate")
@click.argument("input_path", metavar="INPUT")
@click.option("--format", "fmt", type=click.Choice(["values", "grouped", "returns"]), default="values", show_default=True)
@click.option("--lag", default=1, show_default=True, help="Price lag L for --format returns.")
@click.option("--model", type=click.Choice(MODELS), required=True)
@click.option("--lower-limit", type=float, default=None, help="Pareto lower limit eta; values below it are dropped.")
@click.option("--sample-size", type=int, default=None, help="Total count for grouped percentile data.")
@click.option("--J", "J", default=5, show_default=True, help="Classes of the sampling-bias model.")
@click.option("--known-sigma", default=1.0, show_default=True, help="Known sd for normal-mean.")
@click.option("--known-mean", default=0.0, show_default=True, help="Known mean for normal-sigma.")
@engine_options
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def cmd_adequate(input_path, fmt, lag, model, lower_limit, sample_size, J, known_sigma, known_mean, out_dir, **kw):
    """Adequate bootstrap of MODEL on INPUT.

    Writes result.json, power_curve.tsv, trials.tsv and replicates.tsv to OUT.
    """
    config = _config(kw)
    data = load_input(input_path, fmt, lag, lower_limit if fmt != "grouped" else None, sample_size)
    family = build_family(model, data, lower_limit, J, known_sigma, known_mean)

    def go():
        res = adequate_bootstrap(data, family, config)
        files = {"result.json": res.to_json(), "replicates.tsv": res.replicates_tsv()}
        if res.power_curve is not None:
            files["power_curve.tsv"] = res.power_curve.to_tsv()
            files["trials.tsv"] = res.power_curve.trials_tsv()
        atomic_write_files(out_dir, files)
        return res

    res = _run(go)
    click.echo(_interval_lines(res))


def _interval_lines(res) -> str:
    lines = [f"adequate size {res.adequate_size} of {res.N}" + (" (saturated)" if res.saturated else "")]
    for name, (lo, hi) in res.intervals.items():
        lines.append(f"{name}\t[{lo:.6g}, {hi:.6g}]")
    lines.append(f"seed {res.seed}")
    return "\n".join(lines)


@main.command("var")
@click.argument("input_path", metavar="INPUT")
@click.option("--format", "fmt", type=click.Choice(["values", "returns"]), default="returns", show_default=True)
@click.option("--lag", default=1, show_default=True, help="Non-overlapping window length in prices.")
@click.option("--level", default=0.99, show_default=True, help="VaR level; the (1 - level) quantile is reported.")
@engine_options
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def cmd_var(input_path, fmt, lag, level, out_dir, **kw):
    """Value at Risk intervals: adequate bootstrap, standard bootstrap, order statistics."""
    config = _config(kw)
    if not 0.5 < level < 1:
        raise BadConfig("--level must lie in (0.5, 1)")
    x = load_input(input_path, fmt, lag)
    family = LogNormal(level)

    def go():
        res = adequate_bootstrap(x, family, config)
        std = standard_bootstrap(x, family, dataclasses.replace(config, seed=config.seed + 1))
        doc = {
            "level": level,
            "N": len(x),
            "seed": config.seed,
            "adequate_size": res.adequate_size,
            "saturated": res.saturated,
            "point_estimate": res.full_data_fit["var"],
            "adequate": list(res.intervals["var"]),
            "standard": list(std.intervals["var"]),
        }
        try:
            doc["nonparametric"] = list(nonparametric_percentile_ci(x, 1.0 - level, config.ci_coverage))
        except FitError as exc:
            doc["nonparametric"] = None
            doc["nonparametric_error"] = str(exc)
        atomic_write_files(out_dir, {"var.json": json.dumps(to_jsonable(doc), indent=2, sort_keys=True) + "\n"})
        return doc

    doc = _run(go)
    for k in ("adequate", "standard", "nonparametric"):
        iv = doc[k]
        click.echo(f"{k}\t" + ("unavailable: " + doc["nonparametric_error"] if iv is None else f"[{iv[0]:.6g}, {iv[1]:.6g}]"))
    click.echo(f"adequate size {doc['adequate_size']} of {doc['N']}")


@main.command("coverage-table")
@click.option("--alpha", default=0.05, show_default=True)
@click.option("--level", default=0.95, show_default=True)
@click.option("--max-m", default=9, show_default=True)
@click.option("--max-k", default=9, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
def cmd_coverage_table(alpha, level, max_m, max_k, out_path):
    """Theoretical coverage grid (rows k, columns m) for identity Fisher information."""
    if not (0 < alpha < 1 and 0 < level < 1) or max_m < 1 or max_k < 1:
        raise BadConfig("need 0 < alpha, level < 1 and positive table dimensions")
    _emit(coverage_table_tsv(coverage_table(max_m, max_k, alpha, level)), out_path)


@main.command("sampling-bias-theory")
@click.option("--J", "Js", multiple=True, type=int, default=(3, 4, 5, 6, 7, 8), show_default=True)
@click.option("--alpha", default=0.05, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
def cmd_sampling_bias_theory(Js, alpha, out_path):
    """Theoretical coverage and Schur eigenvalues for the sampling-bias model."""
    if any(J < 3 for J in Js) or not 0 < alpha < 1:
        raise BadConfig("need J >= 3 and 0 < alpha < 1")
    rows = ["J\tcoverage\tschur_coefficient\tother_eigenvalue"]
    for J in Js:
        rows.append(f"{J}\t{sampling_bias_coverage(J, alpha):.3f}\t{schur_eigen_coefficient(J):.10f}\t{1.0 / J:.10f}")
    _emit("\n".join(rows) + "\n", out_path)


def _emit(text: str, out_path):
    if out_path:
        _run(lambda: atomic_write(out_path, text))
    else:
        click.echo(text, nl=False)


@main.group("simulate")
def simulate():
    """Simulation studies."""


def study_options(f):
    opts = [
        click.option("--scale", type=click.Choice(["desk", "paper"]), default="desk", show_default=True),
        click.option("--n-datasets", type=int, default=None, help="Override the scale preset."),
        click.option("--n-points", type=int, default=None, help="Override the scale preset."),
        click.option("--replicates", default=1000, show_default=True),
        click.option("--alpha", default=0.05, show_default=True),
        click.option("--coverage", default=0.95, show_default=True),
        click.option("--seed", type=int, default=None),
        click.option("--threads", type=int, default=1, envvar="ADEQBOOT_THREADS", show_default=True),
        click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False)),
    ]
    for o in reversed(opts):
        f = o(f)
    return f


def _sizes(scale, n_datasets, n_points):
    from .sim import SCALES

    d, n = SCALES[scale]
    return n_datasets or d, n_points or n


def _write_report(rep, out_dir, scatter: bool):
    files = {"report.json": rep.to_json(), "datasets.tsv": rep.datasets_tsv()}
    if scatter:
        files["scatter.tsv"] = rep.scatter_tsv()
    atomic_write_files(out_dir, files)
    s = rep.summary()
    for k in ("coverage", "standard_coverage", "median_size", "median_width", "mean_width", "saturation_rate", "n_failed"):
        if k in s:
            click.echo(f"{k}\t{s[k]}")
    click.echo(f"seed\t{rep.seed}")


@simulate.command("contamination")
@study_options
@click.option("--proportion", default=0.02, show_default=True)
@click.option("--sigma", "hyper_sigma", default=3.0, show_default=True, help="Contaminant sd.")
@click.option("--tau", "hyper_tau", default=4.0, show_default=True, help="Sd of the contaminant mean around 3.")
def sim_contamination(scale, n_datasets, n_points, replicates, alpha, coverage, seed, threads, out_dir, proportion, hyper_sigma, hyper_tau):
    """Contaminated-normal study of the mean."""
    n_datasets, n_points = _sizes(scale, n_datasets, n_points)

    def go():
        cfg = contamination_config(adequacy_alpha=alpha, ci_coverage=coverage, replicates_B=replicates, seed=seed)
        scn = ContaminationScenario(proportion, hyper_sigma, hyper_tau, n_datasets, n_points, cfg)
        return run_contamination(scn, threads)

    rep = _run(_guard(go))
    _run(lambda: _write_report(rep, out_dir, scatter=False))


@simulate.command("sampling-bias")
@study_options
@click.option("--J", "J", default=5, show_default=True)
@click.option("--tau", default=0.5, show_default=True, help="Log-normal sd of the inclusion weights.")
@click.option("--mode", type=click.Choice(["with_replacement", "without_replacement"]), default="with_replacement", show_default=True)
def sim_sampling_bias(scale, n_datasets, n_points, replicates, alpha, coverage, seed, threads, out_dir, J, tau, mode):
    """Sampling-bias study of sigma."""
    n_datasets, n_points = _sizes(scale, n_datasets, n_points)

    def go():
        cfg = EngineConfig(adequacy_alpha=alpha, ci_coverage=coverage, replicates_B=replicates, seed=seed)
        scn = SamplingBiasScenario(J, tau, n_datasets, n_points, cfg, mode)
        return run_sampling_bias(scn, threads)

    rep = _run(_guard(go))
    _run(lambda: _write_report(rep, out_dir, scatter=True))


def _guard(fn):
    # scenario constructors raise plain ValueError on bad settings
    def wrapped():
        try:
            return fn()
        except ConfigError:
            raise
        except ValueError as exc:
            if isinstance(exc, RUN_FAILURES):
                raise
            raise ConfigError(str(exc)) from None

    return wrapped


@main.command("llr-qq")
@click.option("--J", "J", default=5, show_default=True)
@click.option("--tau", default=0.0, show_default=True)
@click.option("--n-points", default=2000, show_default=True)
@click.option("--size", "forced_size", required=True, type=int, help="Resample size.")
@click.option("--reps", default=200, show_default=True)
@click.option("--mode", type=click.Choice(["with_replacement", "without_replacement"]), default="with_replacement", show_default=True)
@click.option("--alpha", default=0.05, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
def cmd_llr_qq(J, tau, n_points, forced_size, reps, mode, alpha, seed, out_path):
    """QQ data of likelihood-ratio adequacy statistics against chi-square(J-1)."""

    def go():
        cfg = EngineConfig(adequacy_alpha=alpha, seed=seed).with_seed()
        scn = SamplingBiasScenario(J, tau, 1, n_points, cfg, mode)
        if forced_size < 1 or reps < 1:
            raise ConfigError("--size and --reps must be positive")
        return emit_llr_qq(scn, forced_size, reps), cfg.seed

    text, used = _run(_guard(go))
    _emit(f"# seed\t{used}\n" + text, out_path)


if __name__ == "__main__":  # pragma: no cover
    main()

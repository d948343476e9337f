"""Command-line interface.

Subcommands: estimate, test, band, bandwidth, simulate.  Options override the
JSON config document; reports embed the resolved configuration so a run can
be reproduced from its own output.  Exit code 2 flags configuration problems,
3 numerical failures.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from .errors import ConfigError, RkdError
from .pipeline import analyze
from .reports import RunConfig, ingest, rule_function, write_report, write_study_report
from .simulation import run_study, worker_count

EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _parse_grid(text: str) -> list[float]:
    """Either 'start:stop:count' or a comma-separated list."""
    if ":" in text:
        start, stop, count = text.split(":")
        return np.linspace(float(start), float(stop), int(count)).round(12).tolist()
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _load_config(config_path, input_path, kwargs) -> RunConfig:
    raw = {}
    if config_path:
        raw = json.loads(Path(config_path).read_text())
    if input_path:
        raw["input"] = str(input_path)
    if kwargs.get("effect"):
        raw["effects"] = list(kwargs["effect"])
    for src, dst in (("p", "p"), ("q", "q"), ("kernel", "kernel"), ("boot", "boot"),
                     ("level", "level"), ("seed", "seed")):
        if kwargs.get(src) is not None:
            raw[dst] = kwargs[src]
    if kwargs.get("tau_grid"):
        raw["tau_grid"] = _parse_grid(kwargs["tau_grid"])
    if kwargs.get("y_col") or kwargs.get("x_col") or kwargs.get("b_col"):
        cols = dict(raw.get("columns", {"y": "y", "x": "x"}))
        if kwargs.get("y_col"):
            cols["y"] = kwargs["y_col"]
        if kwargs.get("x_col"):
            cols["x"] = kwargs["x_col"]
        if kwargs.get("b_col"):
            cols["b"] = kwargs["b_col"]
        raw["columns"] = cols
    kink = dict(raw.get("kink", {}))
    if kwargs.get("rule"):
        kink = {"rule": kwargs["rule"]}
    if kwargs.get("x0") is not None:
        if kwargs.get("slope_left") is None or kwargs.get("slope_right") is None:
            raise ConfigError("--x0 requires both --slope-left and --slope-right")
        kink = {"x0": kwargs["x0"], "slope_left": kwargs["slope_left"],
                "slope_right": kwargs["slope_right"]}
    if kink:
        raw["kink"] = kink
    if "input" not in raw:
        raise ConfigError("an input file is required (--input or config)")
    return RunConfig.from_dict(raw)


def _run_analysis(cfg: RunConfig, out, make_plots: bool, with_tests: bool,
                  force_boot: bool):
    sample, warnings = ingest(cfg.input, cfg.columns)
    if "rule" in cfg.kink and sample.b is not None:
        sample.check_rule(rule_function(cfg.kink["rule"]))
    design = cfg.design()
    acfg = cfg.analysis_config()
    acfg.with_tests = with_tests
    if force_boot and acfg.boot < 100:
        raise ConfigError("bands need at least 100 bootstrap draws (--boot)")
    results = analyze(sample, design, acfg)
    out = Path(out)
    report_path, csv_path = write_report(out, cfg, results, warnings)
    written = [report_path, csv_path]
    if make_plots:
        from .plots import render_effect_figures

        written += render_effect_figures(results, out / "figures")
    for w in warnings:
        click.echo(f"warning: {w}", err=True)
    for path in written:
        click.echo(f"wrote {path}")


def _common_options(fn):
    opts = [
        click.option("--input", "input_path", type=click.Path(), help="delimited data file"),
        click.option("--config", "config_path", type=click.Path(), help="JSON config document"),
        click.option("--effect", multiple=True, help="effect to estimate (repeatable)"),
        click.option("--tau-grid", help="quantile grid: 'a:b:count' or comma list"),
        click.option("--y-col", help="outcome column name"),
        click.option("--x-col", help="running-variable column name"),
        click.option("--b-col", help="treatment column name (optional)"),
        click.option("--rule", help="treatment rule, e.g. 'min(0.04*x, 205)'"),
        click.option("--x0", type=float, help="kink location (with --slope-left/right)"),
        click.option("--slope-left", type=float, help="first-stage slope below x0"),
        click.option("--slope-right", type=float, help="first-stage slope above x0"),
        click.option("--p", type=int, help="local polynomial order"),
        click.option("--q", type=int, help="pilot polynomial order"),
        click.option("--kernel", type=str, help="kernel name"),
        click.option("--boot", type=int, help="bootstrap draws"),
        click.option("--level", type=float, help="test / band level"),
        click.option("--seed", type=int, help="master seed"),
        click.option("--out", default="rkdkit-out", show_default=True, help="output directory"),
        click.option("--no-plots", is_flag=True, help="skip figure rendering"),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


@click.group()
def main():
    """Local treatment effects at a regression kink."""


def _dispatch(kwargs, with_tests: bool, force_boot: bool):
    try:
        cfg = _load_config(kwargs.pop("config_path"), kwargs.pop("input_path"), kwargs)
        _run_analysis(cfg, kwargs["out"], not kwargs["no_plots"], with_tests, force_boot)
    except (ConfigError, json.JSONDecodeError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except RkdError as exc:
        click.echo(f"estimation error: {exc}", err=True)
        sys.exit(EXIT_NUMERIC)


@main.command()
@_common_options
def estimate(**kwargs):
    """Point estimates, standard errors and uniform bands."""
    _dispatch(kwargs, with_tests=False, force_boot=False)


@main.command()
@_common_options
def test(**kwargs):
    """Estimates plus KS significance and homogeneity tests."""
    _dispatch(kwargs, with_tests=True, force_boot=False)


@main.command()
@_common_options
def band(**kwargs):
    """Estimates with uniform confidence bands (requires bootstrap draws)."""
    _dispatch(kwargs, with_tests=False, force_boot=True)


@main.command()
@_common_options
def bandwidth(**kwargs):
    """Plug-in bandwidth schedules only (no bootstrap)."""
    try:
        cfg = _load_config(kwargs.pop("config_path"), kwargs.pop("input_path"), kwargs)
        cfg.boot = 0
        _run_analysis(cfg, kwargs["out"], not kwargs["no_plots"],
                      with_tests=False, force_boot=False)
    except (ConfigError, json.JSONDecodeError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except RkdError as exc:
        click.echo(f"estimation error: {exc}", err=True)
        sys.exit(EXIT_NUMERIC)


@main.command()
@click.option("--effect", multiple=True, default=("mean",), show_default=True)
@click.option("--n", "n_list", multiple=True, type=int, default=(2000,), show_default=True)
@click.option("--reps", type=int, default=500, show_default=True)
@click.option("--boot", type=int, default=500, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--level", type=float, default=0.05, show_default=True)
@click.option("--p", type=int, default=2, show_default=True)
@click.option("--q", type=int, default=None)
@click.option("--kernel", default="tricube", show_default=True)
@click.option("--workers", type=int, default=None, help="defaults to RKDKIT_WORKERS or all cores")
@click.option("--out", default="rkdkit-out", show_default=True)
@click.option("--no-plots", is_flag=True)
def simulate(effect, n_list, reps, boot, seed, level, p, q, kernel, workers, out, no_plots):
    """Monte Carlo study on the reference data generating process."""
    try:
        report = run_study(effect, n_list, reps=reps, B=boot, seed=seed, level=level,
                           p=p, q=q, kernel=kernel, workers=workers)
    except RkdError as exc:
        click.echo(f"estimation error: {exc}", err=True)
        sys.exit(EXIT_NUMERIC)
    out = Path(out)
    path = write_study_report(out, report)
    click.echo(f"wrote {path} ({report.runtime_seconds:.1f}s, "
               f"{worker_count(workers)} workers)")
    if not no_plots:
        from .plots import render_study_figures

        for fig_path in render_study_figures(report, out / "figures"):
            click.echo(f"wrote {fig_path}")


if __name__ == "__main__":
    main()

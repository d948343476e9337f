"""Data ingestion, run configuration, and report serialization.

Input data is comma-delimited text with a header.  Rows containing
non-finite cells are dropped with a warning that lists their line numbers
(header = line 1).  Reports are a single JSON document embedding the fully
resolved configuration, the seed and the package version, so a report can be
re-run to bit-identical numbers; curve points additionally go to a flat CSV
with one row per grid point for plotting.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .effects import KinkDesign
from .errors import ConfigError
from .locfit import Sample
from .pipeline import AnalysisConfig, EFFECT_NAMES

REPORT_SCHEMA = "rkdkit-report/1"
STUDY_SCHEMA = "rkdkit-study/1"

_RULE_RE = re.compile(
    r"^\s*min\(\s*([0-9.eE+-]+)\s*\*?\s*x\s*,\s*([0-9.eE+-]+)\s*\)\s*$"
)


def parse_kink_rule(rule: str) -> KinkDesign:
    """Kink implied by a capped proportional rule ``min(a*x, cap)``.

    Below the kink the schedule climbs at rate a; above it the cap binds, so
    the slope drops to zero and the kink sits at x0 = cap / a.
    """
    m = _RULE_RE.match(rule)
    if not m:
        raise ConfigError(f"cannot parse treatment rule {rule!r}; expected 'min(a*x, cap)'")
    a, cap = float(m.group(1)), float(m.group(2))
    if a <= 0 or cap <= 0:
        raise ConfigError("rule requires positive rate and cap")
    return KinkDesign(x0=cap / a, slope_right=0.0, slope_left=a)


def rule_function(rule: str):
    m = _RULE_RE.match(rule)
    if not m:
        raise ConfigError(f"cannot parse treatment rule {rule!r}")
    a, cap = float(m.group(1)), float(m.group(2))
    return lambda x: np.minimum(a * np.asarray(x, dtype=float), cap)


def ingest(path, mapping: dict) -> tuple[Sample, list[str]]:
    """Read a delimited file into a Sample; returns (sample, warnings)."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"input file {path} does not exist")
    frame = pd.read_csv(path)
    cols = {"y": mapping.get("y", "y"), "x": mapping.get("x", "x")}
    bcol = mapping.get("b")
    missing = [c for c in cols.values() if c not in frame.columns]
    if bcol is not None and bcol not in frame.columns:
        missing.append(bcol)
    if missing:
        raise ConfigError(f"missing columns {missing}; file has {list(frame.columns)}")

    used = [cols["y"], cols["x"]] + ([bcol] if bcol else [])
    values = frame[used].apply(pd.to_numeric, errors="coerce")
    good = np.isfinite(values.to_numpy(dtype=float)).all(axis=1)
    warnings = []
    if not good.all():
        lines = (np.flatnonzero(~good) + 2).tolist()
        warnings.append(f"dropped {len(lines)} rows with non-finite cells at lines {lines}")
    if not good.any():
        raise ConfigError("no usable rows in input file")
    kept = values.loc[good]
    sample = Sample(
        y=kept[cols["y"]].to_numpy(dtype=float),
        x=kept[cols["x"]].to_numpy(dtype=float),
        b=kept[bcol].to_numpy(dtype=float) if bcol else None,
    )
    return sample, warnings


@dataclass
class RunConfig:
    """Fully resolved configuration for one CLI run."""

    input: str
    columns: dict = field(default_factory=lambda: {"y": "y", "x": "x"})
    kink: dict = field(default_factory=dict)
    effects: tuple = ("mean",)
    tau_grid: list = field(default_factory=lambda: np.round(np.arange(1, 10) / 10.0, 10).tolist())
    integration_grid: list = field(default_factory=lambda: np.round(np.arange(1, 100) / 100.0, 10).tolist())
    y_grid: list | None = None
    p: int = 2
    q: int | None = None
    kernel: str = "tricube"
    boot: int = 2500
    level: float = 0.05
    seed: int = 0
    bandwidth: dict = field(default_factory=lambda: {"mode": "plugin"})
    bh_c: float = 3.0
    bh_b: float = 1.0

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**raw)
        cfg.effects = tuple(cfg.effects)
        bad = set(cfg.effects) - set(EFFECT_NAMES)
        if bad:
            raise ConfigError(f"unknown effects {sorted(bad)}; valid: {EFFECT_NAMES}")
        if not cfg.kink:
            raise ConfigError("config must declare the kink (explicit slopes or a rule)")
        explicit = {"x0", "slope_left", "slope_right"} <= set(cfg.kink)
        has_rule = "rule" in cfg.kink
        if explicit == has_rule:
            raise ConfigError("declare exactly one of explicit kink slopes or a rule")
        return cfg

    def design(self) -> KinkDesign:
        if "rule" in self.kink:
            return parse_kink_rule(self.kink["rule"])
        return KinkDesign(x0=float(self.kink["x0"]),
                          slope_right=float(self.kink["slope_right"]),
                          slope_left=float(self.kink["slope_left"]))

    def analysis_config(self) -> AnalysisConfig:
        mode = self.bandwidth.get("mode", "plugin")
        return AnalysisConfig(
            effects=tuple(self.effects),
            p=self.p, q=self.q, kernel=self.kernel,
            tau_grid=np.asarray(self.tau_grid, dtype=float),
            integration_grid=np.asarray(self.integration_grid, dtype=float),
            y_grid=None if self.y_grid is None else np.asarray(self.y_grid, dtype=float),
            boot=self.boot, level=self.level, seed=self.seed,
            bandwidth_mode=mode,
            fixed_bandwidths=self.bandwidth.get("h"),
            bh_c=self.bh_c, bh_b=self.bh_b,
        )

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["effects"] = list(self.effects)
        return out


def _arr(x):
    return None if x is None else np.asarray(x).tolist()


def results_payload(results: dict) -> dict:
    """JSON-ready payload for the per-effect analysis results."""
    payload = {}
    for eff, rep in results.items():
        curve = rep.curve
        entry = {
            "grid": _arr(curve.grid),
            "estimates": _arr(curve.estimates),
            "bandwidths": _arr(curve.bandwidths),
            "se": _arr(curve.se),
            "band_lo": _arr(curve.band_lo),
            "band_hi": _arr(curve.band_hi),
            "n_obs": curve.n_obs,
            "baseline": {k: _arr(v) for k, v in curve.baseline.items()
                         if isinstance(v, (int, float, np.ndarray))},
            "tests": {
                name: {"statistic": t.statistic, "critical_value": t.critical_value,
                       "p_value": t.p_value, "level": t.level, "reject": t.reject}
                for name, t in rep.tests.items()
            },
        }
        if rep.schedule is not None:
            entry["bandwidth_schedule"] = {
                "grid": _arr(rep.schedule.grid),
                "pilot": _arr(rep.schedule.pilot),
                "main": _arr(rep.schedule.main),
                "warnings": list(rep.schedule.warnings),
            }
        if rep.ensemble is not None:
            entry["bootstrap"] = {"kind": rep.ensemble.kind,
                                  "draws": rep.ensemble.n_draws,
                                  "master_seed": rep.ensemble.master_seed}
        payload[eff] = entry
    return payload


def write_report(out_dir, config: RunConfig, results: dict,
                 ingest_warnings: list[str]) -> tuple[Path, Path]:
    """Write report.json and curves.csv; returns both paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = {
        "schema": REPORT_SCHEMA,
        "version": __version__,
        "config": config.to_dict(),
        "warnings": ingest_warnings,
        "results": results_payload(results),
    }
    report_path = out_dir / "report.json"
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True))

    rows = []
    for eff, rep in results.items():
        curve = rep.curve
        for i in range(curve.grid.size):
            rows.append({
                "effect": eff,
                "grid": curve.grid[i],
                "estimate": curve.estimates[i],
                "se": None if curve.se is None else curve.se[i],
                "band_lo": None if curve.band_lo is None else curve.band_lo[i],
                "band_hi": None if curve.band_hi is None else curve.band_hi[i],
                "bandwidth": curve.bandwidths[i],
            })
    csv_path = out_dir / "curves.csv"
    pd.DataFrame(rows, columns=["effect", "grid", "estimate", "se",
                                "band_lo", "band_hi", "bandwidth"]).to_csv(csv_path, index=False)
    return report_path, csv_path


def write_study_report(out_dir, report) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"schema": STUDY_SCHEMA, **report.to_dict()}
    path = out_dir / "study.json"
    path.write_text(json.dumps(payload, indent=2, sort_keys=True))
    return path

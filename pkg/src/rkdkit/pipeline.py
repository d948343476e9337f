"""Orchestration shared by the CLI and the simulation harness.

``analyze`` runs the requested effects on one sample: plug-in (or fixed)
bandwidths, point estimates, bootstrap ensembles, standard errors, uniform
bands and KS tests.  Intermediate machinery is shared where the selectors
overlap: when the Lorenz effect is requested, the per-level quantile pieces
are computed once on the union of the reporting and integration grids and
reused for the quantile effect; the distributional effect is evaluated at the
estimated conditional quantiles unless an explicit y grid is supplied.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bandwidth import (
    BandwidthSchedule,
    algorithm1_bandwidths,
    algorithm2_lorenz_bandwidths,
    qrkd_bandwidths,
)
from .effects import (
    EffectCurve,
    KinkDesign,
    ldte_at_quantiles,
    rkd_distributional,
    rkd_lorenz,
    rkd_mean,
    rkd_quantile,
)
from .errors import ConfigError
from .inference import (
    BootstrapEnsemble,
    homogeneity_test,
    lorenz_composite_draws,
    multiplier_draws,
    pivotal_draws,
    pointwise_se,
    significance_test,
    uniform_band,
)
from .kernels import kernel_constants
from .locfit import Sample, residuals
from .streams import derive_seed

__all__ = ["AnalysisConfig", "EffectReport", "analyze", "EFFECT_NAMES"]

EFFECT_NAMES = ("mean", "distributional", "quantile", "lorenz")

_SEED_PATH = {"mean": 11, "distributional": 12, "quantile": 13,
              "lorenz_mult": 14, "lorenz_piv": 15}


@dataclass
class AnalysisConfig:
    """Everything one analysis run needs besides the data."""

    effects: tuple = ("mean",)
    p: int = 2
    q: int | None = None
    kernel: str = "tricube"
    tau_grid: np.ndarray = field(default_factory=lambda: np.round(np.arange(1, 10) / 10.0, 10))
    integration_grid: np.ndarray = field(default_factory=lambda: np.round(np.arange(1, 100) / 100.0, 10))
    y_grid: np.ndarray | None = None
    boot: int = 2500
    level: float = 0.05
    seed: int = 0
    bandwidth_mode: str = "plugin"
    fixed_bandwidths: dict | None = None
    bh_c: float = 3.0
    bh_b: float = 1.0
    gram: str = "empirical"
    with_tests: bool = True

    def __post_init__(self):
        unknown = set(self.effects) - set(EFFECT_NAMES)
        if unknown:
            raise ConfigError(f"unknown effects: {sorted(unknown)}")
        if not 0.0 < self.level < 1.0:
            raise ConfigError("level must lie in (0, 1)")
        self.tau_grid = np.atleast_1d(np.asarray(self.tau_grid, dtype=float))
        self.integration_grid = np.atleast_1d(np.asarray(self.integration_grid, dtype=float))
        if np.any((self.tau_grid <= 0) | (self.tau_grid >= 1)):
            raise ConfigError("tau grid must lie strictly inside (0, 1)")
        if self.bandwidth_mode not in ("plugin", "fixed"):
            raise ConfigError("bandwidth_mode must be 'plugin' or 'fixed'")
        if self.bandwidth_mode == "fixed" and not self.fixed_bandwidths:
            raise ConfigError("fixed bandwidth mode needs a bandwidth per effect")

    @property
    def pilot_order(self) -> int:
        return self.p + 1 if self.q is None else self.q


@dataclass
class EffectReport:
    """One effect's curve plus the inference artifacts that produced it."""

    curve: EffectCurve
    schedule: BandwidthSchedule | None = None
    tests: dict = field(default_factory=dict)
    ensemble: BootstrapEnsemble | None = None


def _fixed_h(cfg: AnalysisConfig, effect: str, grid_len: int) -> np.ndarray:
    try:
        h = cfg.fixed_bandwidths[effect]
    except (TypeError, KeyError):
        raise ConfigError(f"no fixed bandwidth supplied for effect {effect!r}") from None
    return np.full(grid_len, float(h))


def _attach_inference(report: EffectReport, ens: BootstrapEnsemble,
                      cfg: AnalysisConfig) -> None:
    curve = report.curve
    report.ensemble = ens
    banded = uniform_band(curve, ens, cfg.level)
    banded.se = pointwise_se(ens, curve.bandwidths, curve.n_obs)
    report.curve = banded
    if cfg.with_tests:
        report.tests["significance"] = significance_test(banded, ens, cfg.level)
        if banded.grid.size >= 2:
            report.tests["homogeneity"] = homogeneity_test(banded, ens, cfg.level)


def _union_grid(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    merged = np.union1d(np.round(a, 12), np.round(b, 12))
    return merged


def analyze(sample: Sample, design: KinkDesign, cfg: AnalysisConfig) -> dict[str, EffectReport]:
    """Run every requested effect on one sample; deterministic in cfg.seed."""
    effects = tuple(cfg.effects)
    p, q = cfg.p, cfg.pilot_order
    kernel = cfg.kernel
    const_p = kernel_constants(kernel, p, q_list=(p + 1,))
    want_boot = cfg.boot > 0
    out: dict[str, EffectReport] = {}

    need_quantile_chain = bool({"quantile", "lorenz"} & set(effects)) or (
        "distributional" in effects and cfg.y_grid is None)

    # Lorenz bandwidths subsume the per-level quantile pieces on the union grid.
    lorenz_sched = None
    quantile_sched = None
    if "lorenz" in effects:
        ugrid = _union_grid(cfg.integration_grid, cfg.tau_grid)
        lorenz_sched = algorithm2_lorenz_bandwidths(
            sample, cfg.tau_grid, ugrid, p, q, kernel, x0=design.x0,
            c=cfg.bh_c, b=cfg.bh_b)
    elif need_quantile_chain:
        quantile_sched = qrkd_bandwidths(sample, cfg.tau_grid, p, q, kernel,
                                         x0=design.x0, c=cfg.bh_c, b=cfg.bh_b)

    def quantile_pieces_at_taus():
        """(bandwidths, fyx, fx) for the reporting grid, whichever selector ran."""
        if cfg.bandwidth_mode == "fixed":
            hs = _fixed_h(cfg, "quantile", cfg.tau_grid.size)
            sched = quantile_sched or lorenz_sched
            if sched is None:
                sched = qrkd_bandwidths(sample, cfg.tau_grid, p, q, kernel,
                                        x0=design.x0, c=cfg.bh_c, b=cfg.bh_b)
            return hs, sched
        if lorenz_sched is not None:
            comp = lorenz_sched.components
            idx = np.searchsorted(np.round(comp["u_grid"], 12), np.round(cfg.tau_grid, 12))
            return comp["h_u"][idx], lorenz_sched
        return quantile_sched.main, quantile_sched

    quantile_curve = None
    if need_quantile_chain:
        hs, sched = quantile_pieces_at_taus()
        quantile_curve = rkd_quantile(sample, design, cfg.tau_grid, p, hs, kernel)

    if "mean" in effects or "lorenz" in effects:
        if lorenz_sched is not None:
            comp_l = lorenz_sched.components
            h_mean = float(comp_l["h_mean"])
            fx_mean = float(comp_l["fx"])
            mean_sched = BandwidthSchedule(
                grid=np.array([0.0]), pilot=np.array([comp_l["b_mean"]]),
                main=np.array([h_mean]),
                components={"fx": fx_mean, "vn": comp_l["vn"],
                            "bias": np.array([comp_l["bias_mu"]]),
                            "var": np.array([comp_l["var_mu"]])},
                warnings=list(lorenz_sched.warnings))
        else:
            mean_sched = algorithm1_bandwidths(sample, None, "mean", p, q, kernel,
                                               x0=design.x0)
            h_mean = float(mean_sched.main[0])
            fx_mean = float(mean_sched.components["fx"])
        if cfg.bandwidth_mode == "fixed" and "mean" in effects:
            h_mean = float(_fixed_h(cfg, "mean", 1)[0])

    if "mean" in effects:
        curve = rkd_mean(sample, design, p, h_mean, kernel)
        report = EffectReport(curve=curve,
                              schedule=mean_sched if cfg.bandwidth_mode == "plugin" else None)
        if want_boot:
            eps = residuals(curve.baseline["fit"], sample.y, sample.x)
            ens = multiplier_draws(sample, design, curve.grid, eps.reshape(-1, 1),
                                   curve.bandwidths, fx_mean, const_p,
                                   cfg.boot, derive_seed(cfg.seed, _SEED_PATH["mean"]),
                                   gram=cfg.gram)
            _attach_inference(report, ens, cfg)
        out["mean"] = report

    if "quantile" in effects:
        hs, sched = quantile_pieces_at_taus()
        report = EffectReport(curve=quantile_curve,
                              schedule=sched if cfg.bandwidth_mode == "plugin" else None)
        if want_boot:
            comp = sched.components
            if "fyx" in comp:
                fyx = comp["fyx"]
                fx = float(comp["fx"])
            else:
                idx = np.searchsorted(np.round(comp["u_grid"], 12), np.round(cfg.tau_grid, 12))
                fyx = comp["fyx_u"][idx]
                fx = float(comp["fx"])
            ens = pivotal_draws(sample, design, cfg.tau_grid, quantile_curve.bandwidths,
                                fx, fyx, const_p, cfg.boot,
                                derive_seed(cfg.seed, _SEED_PATH["quantile"]),
                                gram=cfg.gram)
            _attach_inference(report, ens, cfg)
        out["quantile"] = report

    if "distributional" in effects:
        if cfg.y_grid is not None:
            y_points = np.atleast_1d(np.asarray(cfg.y_grid, dtype=float))
        else:
            y_points = np.asarray(quantile_curve.baseline["y_tau"], dtype=float)
        dist_sched = algorithm1_bandwidths(sample, y_points, "distribution", p, q,
                                           kernel, x0=design.x0)
        hs = (dist_sched.main if cfg.bandwidth_mode == "plugin"
              else _fixed_h(cfg, "distributional", y_points.size))
        if cfg.y_grid is None:
            builder = lambda yg: rkd_distributional(sample, design, yg, p, hs, kernel)
            curve = ldte_at_quantiles(builder, quantile_curve)
        else:
            curve = rkd_distributional(sample, design, y_points, p, hs, kernel)
        report = EffectReport(curve=curve,
                              schedule=dist_sched if cfg.bandwidth_mode == "plugin" else None)
        if want_boot:
            eps = np.column_stack([
                residuals(fit, (sample.y <= yv).astype(float), sample.x)
                for yv, fit in zip(curve.grid, curve.baseline["fits"])
            ])
            ens = multiplier_draws(sample, design, curve.grid, eps, curve.bandwidths,
                                   float(dist_sched.components["fx"]), const_p,
                                   cfg.boot, derive_seed(cfg.seed, _SEED_PATH["distributional"]),
                                   gram=cfg.gram)
            _attach_inference(report, ens, cfg)
        out["distributional"] = report

    if "lorenz" in effects:
        comp = lorenz_sched.components
        if cfg.bandwidth_mode == "fixed":
            h_fix = float(_fixed_h(cfg, "lorenz", 1)[0])
            comp = dict(comp)
            comp["h_u"] = np.full(comp["u_grid"].shape, h_fix)
            comp["h_mean"] = h_fix
            comp["h_lorenz"] = np.full(cfg.tau_grid.shape, h_fix)
            sched_for_fit = BandwidthSchedule(grid=lorenz_sched.grid,
                                              pilot=lorenz_sched.pilot,
                                              main=comp["h_lorenz"],
                                              components=comp)
        else:
            sched_for_fit = lorenz_sched
        curve = rkd_lorenz(sample, design, cfg.tau_grid, comp["u_grid"], p,
                           sched_for_fit, kernel)
        report = EffectReport(curve=curve,
                              schedule=lorenz_sched if cfg.bandwidth_mode == "plugin" else None)
        if want_boot:
            mean_curve = curve.baseline["mean_curve"]
            eps = residuals(mean_curve.baseline["fit"], sample.y, sample.x)
            mult = multiplier_draws(sample, design, mean_curve.grid, eps.reshape(-1, 1),
                                    mean_curve.bandwidths, float(comp["fx"]), const_p,
                                    cfg.boot, derive_seed(cfg.seed, _SEED_PATH["lorenz_mult"]),
                                    gram=cfg.gram)
            piv = pivotal_draws(sample, design, comp["u_grid"], comp["h_u"],
                                float(comp["fx"]), comp["fyx_u"], const_p, cfg.boot,
                                derive_seed(cfg.seed, _SEED_PATH["lorenz_piv"]),
                                gram=cfg.gram)
            ens = lorenz_composite_draws(mult, piv, curve.baseline["mu0"],
                                         curve.baseline["lorenz"], comp["u_grid"],
                                         tau_grid=cfg.tau_grid)
            _attach_inference(report, ens, cfg)
        out["lorenz"] = report

    return out

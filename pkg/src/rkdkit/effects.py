"""Local treatment effect estimators assembled from constrained fits.

Every effect is a ratio: the jump in a one-sided first derivative of some
conditional object across the kink, divided by the jump in the first-stage
slope.  The mean and distributional effects come from least-squares fits of
(transformed) outcomes; the quantile effect from check-loss fits; the Lorenz
effect composes the quantile curve, the baseline Lorenz ordinates, and the
mean effect.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EstimationError, NonpositiveMeanError
from .locfit import (
    ConstrainedFit,
    Sample,
    fit_constrained_quantile,
    fit_constrained_wls,
    rearrange_monotone,
)

__all__ = [
    "KinkDesign",
    "EffectCurve",
    "rkd_mean",
    "rkd_distributional",
    "rkd_quantile",
    "ldte_at_quantiles",
    "rkd_lorenz",
    "integrate_lower_tail",
]


@dataclass(frozen=True)
class KinkDesign:
    """Kink location and the two one-sided first-stage slopes."""

    x0: float
    slope_right: float
    slope_left: float

    @property
    def kink_gap(self) -> float:
        return self.slope_right - self.slope_left

    def __post_init__(self):
        if abs(self.kink_gap) <= 1e-12:
            raise EstimationError("first-stage slopes coincide: no kink to exploit")


@dataclass
class EffectCurve:
    """Point estimates of one effect over a grid, with per-point bandwidths."""

    kind: str
    grid: np.ndarray
    estimates: np.ndarray
    bandwidths: np.ndarray
    baseline: dict = field(default_factory=dict)
    n_obs: int = 0
    se: np.ndarray | None = None
    band_lo: np.ndarray | None = None
    band_hi: np.ndarray | None = None

    def __post_init__(self):
        self.grid = np.atleast_1d(np.asarray(self.grid, dtype=float))
        self.estimates = np.atleast_1d(np.asarray(self.estimates, dtype=float))
        self.bandwidths = np.atleast_1d(np.asarray(self.bandwidths, dtype=float))
        if not (self.grid.shape == self.estimates.shape == self.bandwidths.shape):
            raise EstimationError("grid, estimates and bandwidths must align")
        if np.any(self.bandwidths <= 0):
            raise EstimationError("bandwidths must be positive")


def _broadcast_h(h, grid) -> np.ndarray:
    arr = np.asarray(h, dtype=float)
    if arr.ndim == 0:
        return np.full(len(grid), float(arr))
    if arr.shape != (len(grid),):
        raise EstimationError("bandwidths must be a scalar or align with the grid")
    return arr


def _derivative_gap(fit: ConstrainedFit, design: KinkDesign) -> float:
    return (fit.deriv_right(1) - fit.deriv_left(1)) / design.kink_gap


def rkd_mean(sample: Sample, design: KinkDesign, p: int, h: float, kernel) -> EffectCurve:
    """Mean effect: jump in the first derivative of E[Y|X] over the kink gap."""
    fit = fit_constrained_wls(sample.y, sample.x, design.x0, p, h, kernel)
    return EffectCurve(
        kind="mean",
        grid=np.array([0.0]),
        estimates=np.array([_derivative_gap(fit, design)]),
        bandwidths=np.array([float(h)]),
        baseline={"mu0": fit.level, "fit": fit},
        n_obs=sample.n,
    )


def rkd_distributional(sample: Sample, design: KinkDesign, y_grid, p: int,
                       bandwidths, kernel) -> EffectCurve:
    """Distributional effect at each y: indicator outcomes 1{Y <= y}."""
    y_grid = np.atleast_1d(np.asarray(y_grid, dtype=float))
    hs = _broadcast_h(bandwidths, y_grid)
    est = np.empty_like(y_grid)
    levels = np.empty_like(y_grid)
    fits: list[ConstrainedFit] = []
    for j, (yv, h) in enumerate(zip(y_grid, hs)):
        try:
            fit = fit_constrained_wls((sample.y <= yv).astype(float), sample.x,
                                      design.x0, p, h, kernel)
        except EstimationError as exc:
            raise EstimationError(f"distributional fit failed at y={yv}: {exc}") from exc
        est[j] = _derivative_gap(fit, design)
        levels[j] = fit.level
        fits.append(fit)
    return EffectCurve(
        kind="distributional",
        grid=y_grid,
        estimates=est,
        bandwidths=hs,
        baseline={"levels": levels, "fits": fits},
        n_obs=sample.n,
    )


def rkd_quantile(sample: Sample, design: KinkDesign, tau_grid, p: int,
                 bandwidths, kernel) -> EffectCurve:
    """Quantile effect over tau_grid; baseline quantiles rearranged monotone.

    Fits sweep the grid from the median outward, warm-starting each solve at
    its neighbour's coefficients; per-point results agree with independent
    fits to solver tolerance.
    """
    tau_grid = np.atleast_1d(np.asarray(tau_grid, dtype=float))
    if np.any((tau_grid <= 0) | (tau_grid >= 1)):
        raise EstimationError("quantile grid must lie strictly inside (0, 1)")
    hs = _broadcast_h(bandwidths, tau_grid)
    est = np.empty_like(tau_grid)
    raw_levels = np.empty_like(tau_grid)
    fits: list[ConstrainedFit | None] = [None] * len(tau_grid)
    warm = None
    for j in np.argsort(np.abs(tau_grid - 0.5), kind="stable"):
        tau, h = tau_grid[j], hs[j]
        try:
            fit = fit_constrained_quantile(sample.y, sample.x, tau, design.x0, p, h,
                                           kernel, init=warm)
        except EstimationError as exc:
            raise EstimationError(f"quantile fit failed at tau={tau}: {exc}") from exc
        warm = fit.coeffs
        est[j] = _derivative_gap(fit, design)
        raw_levels[j] = fit.level
        fits[j] = fit
    levels = raw_levels if len(tau_grid) == 1 else rearrange_monotone(tau_grid, raw_levels)
    return EffectCurve(
        kind="quantile",
        grid=tau_grid,
        estimates=est,
        bandwidths=hs,
        baseline={"y_tau": levels, "y_tau_raw": raw_levels, "fits": fits},
        n_obs=sample.n,
    )


def ldte_at_quantiles(dist_curve_builder, quantile_curve: EffectCurve) -> EffectCurve:
    """Distributional effect evaluated at the estimated quantile points.

    dist_curve_builder is a callable y_grid -> EffectCurve (typically
    rkd_distributional with sample, design and bandwidths bound).
    """
    y_tau = np.asarray(quantile_curve.baseline["y_tau"], dtype=float)
    curve = dist_curve_builder(y_tau)
    curve.baseline["taus"] = quantile_curve.grid.copy()
    return curve


def integration_weights(u_grid: np.ndarray, taus) -> np.ndarray:
    """Linear weights W with (W @ values)[j] = integral of the curve on [0, tau_j].

    Trapezoid on the sampled grid; the unsampled leading interval [0, u_min]
    is approximated by a rectangle at the first sampled value.  Expressing the
    lower-tail integral as fixed weights lets the same rule act on point
    estimates and on whole bootstrap ensembles.
    """
    u = np.asarray(u_grid, dtype=float)
    if u.ndim != 1 or np.any(np.diff(u) <= 0):
        raise EstimationError("integration grid must be strictly increasing")
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    W = np.zeros((len(taus), len(u)))
    du = np.diff(u)
    for j, tau in enumerate(taus):
        if tau < u[0] - 1e-12:
            W[j, 0] = tau
            continue
        W[j, 0] += u[0]
        k = int(np.clip(np.searchsorted(u, tau + 1e-12) - 1, 0, len(u) - 1))
        W[j, :k] += 0.5 * du[:k]
        W[j, 1:k + 1] += 0.5 * du[:k]
        if tau > u[k]:
            t = (tau - u[k]) / du[k]
            W[j, k] += 0.5 * (tau - u[k]) * (2.0 - t)
            W[j, k + 1] += 0.5 * (tau - u[k]) * t
    return W


def integrate_lower_tail(u_grid: np.ndarray, values: np.ndarray, taus) -> np.ndarray:
    """Integral of a curve sampled on u_grid from 0 to each tau."""
    values = np.asarray(values, dtype=float)
    if values.shape != np.asarray(u_grid).shape:
        raise EstimationError("values must align with the integration grid")
    return integration_weights(u_grid, taus) @ values


def rkd_lorenz(sample: Sample, design: KinkDesign, tau_grid, integration_grid,
               p: int, bandwidth_schedule, kernel) -> EffectCurve:
    """Lorenz effect: composite of the integrated quantile effect and the mean effect.

    bandwidth_schedule must provide per-point bandwidths for the quantile
    curve on the integration grid (``h_u``), the mean-effect bandwidth
    (``h_mean``), and the per-tau normalization bandwidths (``h_lorenz``); see
    ``bandwidth.algorithm2_lorenz_bandwidths``.
    """
    tau_grid = np.atleast_1d(np.asarray(tau_grid, dtype=float))
    u_grid = np.atleast_1d(np.asarray(integration_grid, dtype=float))
    comp = bandwidth_schedule.components if hasattr(bandwidth_schedule, "components") else bandwidth_schedule
    h_u = np.asarray(comp["h_u"], dtype=float)
    h_mean = float(comp["h_mean"])
    if "h_lorenz" in comp:
        h_lorenz = np.asarray(comp["h_lorenz"], dtype=float)
    else:
        h_lorenz = np.asarray(bandwidth_schedule.main, dtype=float)
    if h_u.shape != u_grid.shape:
        raise EstimationError("h_u must align with the integration grid")

    mean_curve = rkd_mean(sample, design, p, h_mean, kernel)
    mu0 = float(mean_curve.baseline["mu0"])
    if mu0 <= 0:
        raise NonpositiveMeanError(f"baseline conditional mean {mu0:.4g} <= 0")
    dmu = float(mean_curve.estimates[0])

    qcurve = rkd_quantile(sample, design, u_grid, p, h_u, kernel)
    y_u = np.asarray(qcurve.baseline["y_tau"], dtype=float)
    dq_u = qcurve.estimates

    lorenz_base = integrate_lower_tail(u_grid, y_u, tau_grid) / mu0
    int_dq = integrate_lower_tail(u_grid, dq_u, tau_grid)
    est = (int_dq - lorenz_base * dmu) / mu0

    return EffectCurve(
        kind="lorenz",
        grid=tau_grid,
        estimates=est,
        bandwidths=h_lorenz,
        baseline={
            "mu0": mu0,
            "mean_effect": dmu,
            "lorenz": lorenz_base,
            "u_grid": u_grid,
            "y_u": y_u,
            "dq_u": dq_u,
            "h_u": h_u,
            "h_mean": h_mean,
            "quantile_curve": qcurve,
            "mean_curve": mean_curve,
        },
        n_obs=sample.n,
    )

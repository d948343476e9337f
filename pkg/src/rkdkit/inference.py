"""Multiplier and pivotal process simulation, KS-type tests, uniform bands.

Each bootstrap draw is one realization of the limiting process over the whole
grid: a single weight vector (standard normal multipliers, or uniforms for
the pivotal method) is shared by every grid point inside a row, preserving
the cross-point dependence of the process.  Rows are generated from
counter-based streams addressed by (master_seed, row), so ensembles are
bit-identical no matter how rows are scheduled across workers.

The influence weights divide by an estimate of the kernel design matrix.  By
default this is the empirical scaled Gram of the realized design
("empirical"), which keeps the simulated variance aligned with the actual
estimator variance even when plug-in bandwidths are wide relative to the
running-variable spread; "population" uses the constant matrix scaled by the
kernel density estimate instead and matches the asymptotic formula as the
bandwidth shrinks.
"""
from __future__ import annotations

import warnings as _warnings
from dataclasses import dataclass, replace

import numpy as np

from .effects import EffectCurve, KinkDesign, integration_weights
from .errors import EstimationError, PivotalDensityError
from .kernels import KernelConstants, basis_matrix, eval_kernel, get_kernel
from .locfit import Sample
from .streams import stream

__all__ = [
    "BootstrapEnsemble",
    "TestResult",
    "multiplier_draws",
    "pivotal_draws",
    "lorenz_composite_draws",
    "significance_test",
    "homogeneity_test",
    "uniform_band",
    "pointwise_se",
]


@dataclass
class BootstrapEnsemble:
    """B simulated process draws over a grid, tagged with the seed that made them."""

    grid: np.ndarray
    draws: np.ndarray
    master_seed: int
    kind: str

    def __post_init__(self):
        self.grid = np.atleast_1d(np.asarray(self.grid, dtype=float))
        self.draws = np.asarray(self.draws, dtype=float)
        if self.draws.ndim != 2 or self.draws.shape[1] != self.grid.size:
            raise EstimationError("draws must be a (B, grid) matrix")

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0]


@dataclass
class TestResult:
    kind: str
    statistic: float
    critical_value: float
    p_value: float
    level: float

    @property
    def reject(self) -> bool:
        return self.statistic > self.critical_value


def _design_selector(x: np.ndarray, x0: float, h: float, constants: KernelConstants,
                     kernel, fx_hat: float, gram: str) -> np.ndarray:
    """Row vector v with v @ r_p(u_i) the (right-left) influence contrast."""
    if gram == "population":
        gram_inv = constants.gamma_inv / fx_hat
    elif gram == "empirical":
        u = (x - x0) / h
        k = eval_kernel(kernel, u)
        m = k > 0
        r = basis_matrix(constants.p, u[m])
        emp = (r * k[m][:, None]).T @ r / (x.size * h)
        gram_inv = np.linalg.inv(emp)
    else:
        raise EstimationError(f"unknown gram mode {gram!r}")
    return gram_inv[1, :] - gram_inv[2, :]


def _check_boot_size(B: int) -> None:
    if B < 1:
        raise EstimationError("need at least one bootstrap draw")
    if B < 100:
        _warnings.warn(f"B={B} bootstrap draws: critical values will be unstable",
                       stacklevel=3)


def multiplier_draws(sample: Sample, design: KinkDesign, grid, residual_matrix,
                     bandwidths, fx_hat: float, constants: KernelConstants,
                     B: int, seed: int, gram: str = "empirical") -> BootstrapEnsemble:
    """Simulated mean-type process: normal multipliers on estimated residuals."""
    _check_boot_size(B)
    if not fx_hat > 0:
        raise EstimationError("running-variable density estimate must be positive")
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    eps = np.atleast_2d(np.asarray(residual_matrix, dtype=float))
    if eps.shape[0] == 1 and grid.size == 1:
        eps = eps.reshape(-1, 1)
    if eps.shape != (sample.n, grid.size):
        raise EstimationError("residual matrix must be (n, grid) shaped")
    hs = np.broadcast_to(np.asarray(bandwidths, dtype=float), grid.shape)
    kernel = get_kernel(constants.kernel)
    n = sample.n

    influence = np.zeros((n, grid.size))
    for j in range(grid.size):
        h = float(hs[j])
        sel = _design_selector(sample.x, design.x0, h, constants, kernel, fx_hat, gram)
        u = (sample.x - design.x0) / h
        k = eval_kernel(kernel, u)
        influence[:, j] = (basis_matrix(constants.p, u) @ sel) * k * eps[:, j] / (
            design.kink_gap * np.sqrt(n * h))

    draws = np.empty((B, grid.size))
    for row in range(B):
        xi = stream(seed, row).standard_normal(n)
        draws[row] = xi @ influence
    return BootstrapEnsemble(grid=grid, draws=draws, master_seed=int(seed),
                             kind="multiplier")


def pivotal_draws(sample: Sample, design: KinkDesign, tau_grid, bandwidths,
                  fx_hat: float, fyx_at_quantiles, constants: KernelConstants,
                  B: int, seed: int, gram: str = "empirical") -> BootstrapEnsemble:
    """Simulated quantile-type process: uniform ranks, no re-estimation per draw."""
    _check_boot_size(B)
    if not fx_hat > 0:
        raise EstimationError("running-variable density estimate must be positive")
    taus = np.atleast_1d(np.asarray(tau_grid, dtype=float))
    fyx = np.atleast_1d(np.asarray(fyx_at_quantiles, dtype=float))
    hs = np.broadcast_to(np.asarray(bandwidths, dtype=float), taus.shape)
    if fyx.shape != taus.shape:
        raise EstimationError("conditional densities must align with the quantile grid")
    bad = ~(fyx > 0)
    if np.any(bad):
        raise PivotalDensityError(
            f"nonpositive conditional density at tau={taus[bad][0]:.4g}"
        )
    kernel = get_kernel(constants.kernel)
    n = sample.n

    coef = np.zeros((n, taus.size))
    for j, tau in enumerate(taus):
        h = float(hs[j])
        sel = _design_selector(sample.x, design.x0, h, constants, kernel, fx_hat, gram)
        u = (sample.x - design.x0) / h
        k = eval_kernel(kernel, u)
        coef[:, j] = (basis_matrix(constants.p, u) @ sel) * k / (
            design.kink_gap * fyx[j] * np.sqrt(n * h))
    totals = coef.sum(axis=0)

    draws = np.empty((B, taus.size))
    block = max(1, min(B, int(2**22 // max(n, 1))))
    row = 0
    while row < B:
        rows = [stream(seed, r).random(n) for r in range(row, min(row + block, B))]
        ub = np.asarray(rows)
        for j, tau in enumerate(taus):
            draws[row:row + ub.shape[0], j] = tau * totals[j] - (ub <= tau) @ coef[:, j]
        row += ub.shape[0]
    return BootstrapEnsemble(grid=taus, draws=draws, master_seed=int(seed),
                             kind="pivotal")


def lorenz_composite_draws(multiplier_ens: BootstrapEnsemble,
                           pivotal_ens: BootstrapEnsemble,
                           mu0_hat: float, lorenz_baseline, integration_grid,
                           tau_grid=None) -> BootstrapEnsemble:
    """Row-wise composition of the two simulated processes for the Lorenz effect.

    ``lorenz_baseline`` holds the estimated Lorenz ordinates on ``tau_grid``
    (defaults to the multiplier grid when omitted).  Each output row is
    (integral of the pivotal row up to tau - baseline * multiplier row) / mu0.
    """
    if multiplier_ens.n_draws != pivotal_ens.n_draws:
        raise EstimationError("ensembles must have the same number of draws")
    if mu0_hat <= 0:
        raise EstimationError("baseline mean must be positive")
    u_grid = np.atleast_1d(np.asarray(integration_grid, dtype=float))
    if not np.allclose(pivotal_ens.grid, u_grid):
        raise EstimationError("pivotal ensemble grid must equal the integration grid")
    if tau_grid is None:
        raise EstimationError("tau_grid is required to place the composite draws")
    lorenz = np.atleast_1d(np.asarray(lorenz_baseline, dtype=float))
    taus = np.atleast_1d(np.asarray(tau_grid, dtype=float))
    if lorenz.shape != taus.shape:
        raise EstimationError("baseline Lorenz ordinates must align with tau_grid")
    if multiplier_ens.grid.size != 1:
        raise EstimationError("mean-effect ensemble must be scalar per draw")

    W = integration_weights(u_grid, taus)
    integral = pivotal_ens.draws @ W.T
    draws = (integral - multiplier_ens.draws[:, [0]] * lorenz[None, :]) / mu0_hat
    return BootstrapEnsemble(grid=taus, draws=draws,
                             master_seed=pivotal_ens.master_seed,
                             kind="lorenz_composite")


def _assert_aligned(curve: EffectCurve, ens: BootstrapEnsemble) -> None:
    if curve.grid.shape != ens.grid.shape or not np.allclose(curve.grid, ens.grid):
        raise EstimationError("curve and ensemble grids do not match")


def _scaled_estimates(curve: EffectCurve) -> np.ndarray:
    return np.sqrt(curve.n_obs * curve.bandwidths**3) * curve.estimates


def significance_test(curve: EffectCurve, ens: BootstrapEnsemble,
                      level: float) -> TestResult:
    """KS test of the null that the effect is identically zero on the grid."""
    _assert_aligned(curve, ens)
    stat = float(np.max(np.abs(_scaled_estimates(curve))))
    sups = np.max(np.abs(ens.draws), axis=1)
    crit = float(np.quantile(sups, 1.0 - level, method="higher"))
    pval = float(np.mean(sups > stat))
    return TestResult("significance", stat, crit, pval, level)


def _grid_average(values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    span = grid[-1] - grid[0]
    if span <= 0:
        raise EstimationError("homogeneity requires a grid spanning an interval")
    return np.trapezoid(values, grid, axis=-1) / span


def homogeneity_test(curve: EffectCurve, ens: BootstrapEnsemble,
                     level: float) -> TestResult:
    """KS test of the null that the effect is constant on the grid."""
    _assert_aligned(curve, ens)
    if curve.grid.size < 2:
        raise EstimationError("homogeneity test needs at least two grid points")
    scale = np.sqrt(curve.n_obs * curve.bandwidths**3)
    centered = curve.estimates - _grid_average(curve.estimates, curve.grid)
    stat = float(np.max(np.abs(scale * centered)))
    row_avg = _grid_average(ens.draws, ens.grid)
    sups = np.max(np.abs(ens.draws - row_avg[:, None]), axis=1)
    crit = float(np.quantile(sups, 1.0 - level, method="higher"))
    pval = float(np.mean(sups > stat))
    return TestResult("homogeneity", stat, crit, pval, level)


def uniform_band(curve: EffectCurve, ens: BootstrapEnsemble,
                 level: float) -> EffectCurve:
    """Simultaneous band: estimate +/- c(1-level) / sqrt(n h^3) pointwise."""
    _assert_aligned(curve, ens)
    sups = np.max(np.abs(ens.draws), axis=1)
    crit = float(np.quantile(sups, 1.0 - level, method="higher"))
    half = crit / np.sqrt(curve.n_obs * curve.bandwidths**3)
    return replace(curve,
                   band_lo=curve.estimates - half,
                   band_hi=curve.estimates + half)


def pointwise_se(ens: BootstrapEnsemble, bandwidths, n: int) -> np.ndarray:
    """Per-point standard error: sd of draws divided by sqrt(n h^3)."""
    if ens.n_draws < 2:
        raise EstimationError("need at least two draws for a standard error")
    hs = np.broadcast_to(np.asarray(bandwidths, dtype=float), ens.grid.shape)
    return np.std(ens.draws, axis=0, ddof=1) / np.sqrt(n * hs**3)

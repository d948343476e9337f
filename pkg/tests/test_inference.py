import numpy as np
import pytest
from scipy.stats import norm

from rkdkit.effects import EffectCurve, KinkDesign
from rkdkit.errors import EstimationError, PivotalDensityError
from rkdkit.inference import (
    BootstrapEnsemble,
    homogeneity_test,
    lorenz_composite_draws,
    multiplier_draws,
    pivotal_draws,
    pointwise_se,
    significance_test,
    uniform_band,
)
from rkdkit.kernels import cross_kernel_matrices, kernel_constants
from rkdkit.locfit import fit_constrained_wls, residuals
from rkdkit.simulation import DgpConfig, generate_dgp

DESIGN = KinkDesign(x0=0.0, slope_right=1.0, slope_left=-1.0)
CONST = kernel_constants("tricube", 2, q_list=(3,))


def dgp(n=2000, seed=0):
    return generate_dgp(DgpConfig(n=n, seed=seed))


def test_multiplier_zero_residuals_zero_draws():
    sample, design = dgp(seed=1)
    eps = np.zeros((sample.n, 1))
    ens = multiplier_draws(sample, design, [0.0], eps, 0.3, 2.0, CONST, B=120, seed=5)
    assert np.all(ens.draws == 0.0)


def test_multiplier_reproducible_and_mean_zero():
    sample, design = dgp(seed=2)
    fit = fit_constrained_wls(sample.y, sample.x, 0.0, 2, 0.4, "tricube")
    eps = residuals(fit, sample.y, sample.x).reshape(-1, 1)
    ens1 = multiplier_draws(sample, design, [0.0], eps, 0.4, 2.2, CONST, B=400, seed=9)
    ens2 = multiplier_draws(sample, design, [0.0], eps, 0.4, 2.2, CONST, B=400, seed=9)
    assert np.array_equal(ens1.draws, ens2.draws)
    col = ens1.draws[:, 0]
    assert abs(col.mean()) < 3.0 * col.std(ddof=1) / np.sqrt(len(col))


def test_multiplier_population_gram_matches_small_h_theory():
    # at a narrow bandwidth both gram modes approximate the asymptotic variance
    cfg = DgpConfig(n=50_000, seed=3)
    sample, design = generate_dgp(cfg)
    h = 0.05
    fit = fit_constrained_wls(sample.y, sample.x, 0.0, 2, h, "tricube")
    eps = residuals(fit, sample.y, sample.x).reshape(-1, 1)
    st2 = cfg.sigma_tilde**2
    gi = CONST.gamma_inv
    mid = gi @ (st2 * (CONST.psi_plus + CONST.psi_minus)) @ gi
    fx0 = norm.pdf(0.0, scale=cfg.sigma_x)
    want = (mid[1, 1] + mid[2, 2] - 2 * mid[1, 2]) / (4.0 * fx0)
    for gram in ("empirical", "population"):
        ens = multiplier_draws(sample, design, [0.0], eps, h, fx0, CONST,
                               B=2000, seed=11, gram=gram)
        got = ens.draws[:, 0].var(ddof=1)
        assert got == pytest.approx(want, rel=0.15), gram


def test_multiplier_warns_on_tiny_b():
    sample, design = dgp(n=400, seed=4)
    eps = np.zeros((sample.n, 1))
    with pytest.warns(UserWarning):
        multiplier_draws(sample, design, [0.0], eps, 0.3, 2.0, CONST, B=50, seed=1)


def test_pivotal_mean_zero_and_process_rows():
    sample, design = dgp(seed=5)
    taus = np.array([0.25, 0.5, 0.75])
    fyx = np.full(3, 3.0)
    ens = pivotal_draws(sample, design, taus, 0.4, 2.2, fyx, CONST, B=500, seed=21)
    assert ens.draws.shape == (500, 3)
    for j in range(3):
        col = ens.draws[:, j]
        assert abs(col.mean()) < 3.5 * col.std(ddof=1) / np.sqrt(len(col))


def test_pivotal_rejects_bad_density():
    sample, design = dgp(n=500, seed=6)
    with pytest.raises(PivotalDensityError):
        pivotal_draws(sample, design, [0.5], 0.4, 2.0, [0.0], CONST, B=100, seed=1)


def test_pivotal_cross_tau_covariance_matches_limit():
    cfg = DgpConfig(n=50_000, seed=7)
    sample, design = generate_dgp(cfg)
    taus = np.array([0.25, 0.75])
    hs = np.array([0.06, 0.09])
    st = cfg.sigma_tilde
    fyx = norm.pdf(norm.ppf(taus)) / st
    fx0 = norm.pdf(0.0, scale=cfg.sigma_x)
    ens = pivotal_draws(sample, design, taus, hs, fx0, fyx, CONST, B=2000, seed=23)
    got = np.cov(ens.draws[:, 0], ens.draws[:, 1])[0, 1]

    base = hs[0]
    c1, c2 = hs / base
    t_mat = cross_kernel_matrices("tricube", 2, c1, c2, "full")
    gi = CONST.gamma_inv
    mid = gi @ t_mat @ gi
    contrast = mid[1, 1] + mid[2, 2] - 2 * mid[1, 2]
    want = (min(*taus) - taus[0] * taus[1]) * contrast / (4.0 * fx0 * fyx[0] * fyx[1])
    # one design draw plus B=2000 resampling noise is about 10% relative
    assert got == pytest.approx(want, rel=0.25)


def test_composite_zero_and_linearity():
    grid_u = np.round(np.arange(1, 100) / 100, 10)
    taus = np.array([0.3, 0.6])
    B = 40
    rng = np.random.default_rng(8)
    piv = BootstrapEnsemble(grid=grid_u, draws=rng.normal(size=(B, 99)), master_seed=1,
                            kind="pivotal")
    mult = BootstrapEnsemble(grid=np.array([0.0]), draws=rng.normal(size=(B, 1)),
                             master_seed=1, kind="multiplier")
    zero = BootstrapEnsemble(grid=grid_u, draws=np.zeros((B, 99)), master_seed=1,
                             kind="pivotal")
    zero_m = BootstrapEnsemble(grid=np.array([0.0]), draws=np.zeros((B, 1)),
                               master_seed=1, kind="multiplier")
    lorenz = np.array([0.2, 0.5])

    out0 = lorenz_composite_draws(zero_m, zero, 1.5, lorenz, grid_u, tau_grid=taus)
    assert np.all(out0.draws == 0.0)

    out1 = lorenz_composite_draws(mult, piv, 1.5, lorenz, grid_u, tau_grid=taus)
    doubled_p = BootstrapEnsemble(grid=grid_u, draws=2 * piv.draws, master_seed=1, kind="pivotal")
    doubled_m = BootstrapEnsemble(grid=np.array([0.0]), draws=2 * mult.draws, master_seed=1, kind="multiplier")
    out2 = lorenz_composite_draws(doubled_m, doubled_p, 1.5, lorenz, grid_u, tau_grid=taus)
    assert np.allclose(out2.draws, 2 * out1.draws, atol=1e-12)


def test_composite_vanishes_at_small_tau():
    grid_u = np.round(np.arange(1, 100) / 100, 10)
    B = 30
    rng = np.random.default_rng(9)
    piv = BootstrapEnsemble(grid=grid_u, draws=rng.normal(size=(B, 99)), master_seed=1, kind="pivotal")
    mult = BootstrapEnsemble(grid=np.array([0.0]), draws=rng.normal(size=(B, 1)), master_seed=1, kind="multiplier")
    out = lorenz_composite_draws(mult, piv, 1.0, np.array([0.0]), grid_u,
                                 tau_grid=np.array([0.001]))
    assert np.max(np.abs(out.draws)) < 0.05 * np.max(np.abs(piv.draws))


def make_curve(grid, est, h, n=1000):
    return EffectCurve(kind="quantile", grid=grid, estimates=est, bandwidths=h, n_obs=n)


def test_significance_trivial_cases():
    grid = np.array([0.2, 0.5, 0.8])
    ens = BootstrapEnsemble(grid=grid, draws=np.abs(np.random.default_rng(1).normal(size=(200, 3))) + 0.1,
                            master_seed=0, kind="pivotal")
    zero_curve = make_curve(grid, np.zeros(3), np.full(3, 0.3))
    res = significance_test(zero_curve, ens, 0.05)
    assert res.statistic == 0.0
    assert res.p_value == 1.0

    flat_ens = BootstrapEnsemble(grid=grid, draws=np.zeros((200, 3)), master_seed=0, kind="pivotal")
    curve = make_curve(grid, np.ones(3), np.full(3, 0.3))
    res2 = significance_test(curve, flat_ens, 0.05)
    assert res2.p_value == 0.0
    banded = uniform_band(curve, flat_ens, 0.05)
    assert np.allclose(banded.band_lo, curve.estimates)
    assert np.allclose(banded.band_hi, curve.estimates)


def test_pvalue_critical_value_consistency():
    rng = np.random.default_rng(10)
    grid = np.array([0.3, 0.7])
    ens = BootstrapEnsemble(grid=grid, draws=rng.normal(size=(500, 2)), master_seed=0, kind="pivotal")
    for level in (0.05, 0.2, 0.5):
        for scale in (0.1, 1.0, 3.0):
            curve = make_curve(grid, np.full(2, scale), np.full(2, 0.3))
            res = significance_test(curve, ens, level)
            assert res.reject == (res.statistic > res.critical_value)
            if res.reject:
                assert res.p_value < level + 1.0 / ens.n_draws
            else:
                assert res.p_value >= level - 1.0 / ens.n_draws


def test_homogeneity_centering_invariance():
    rng = np.random.default_rng(11)
    grid = np.linspace(0.1, 0.9, 9)
    draws = rng.normal(size=(300, 9))
    ens = BootstrapEnsemble(grid=grid, draws=draws, master_seed=0, kind="pivotal")
    const_curve = make_curve(grid, np.full(9, 2.2), np.full(9, 0.3))
    res = homogeneity_test(const_curve, ens, 0.05)
    assert res.statistic == pytest.approx(0.0, abs=1e-10)

    curve = make_curve(grid, np.sin(grid), np.full(9, 0.3))
    shifted_curve = make_curve(grid, np.sin(grid) + 5.0, np.full(9, 0.3))
    shifted_ens = BootstrapEnsemble(grid=grid, draws=draws + 5.0, master_seed=0, kind="pivotal")
    r1 = homogeneity_test(curve, ens, 0.05)
    r2 = homogeneity_test(shifted_curve, shifted_ens, 0.05)
    assert r1.statistic == pytest.approx(r2.statistic, rel=1e-9)
    assert r1.critical_value == pytest.approx(r2.critical_value, rel=1e-9)


def test_band_monotone_in_level():
    rng = np.random.default_rng(12)
    grid = np.linspace(0.1, 0.9, 5)
    ens = BootstrapEnsemble(grid=grid, draws=rng.normal(size=(400, 5)), master_seed=0, kind="pivotal")
    curve = make_curve(grid, rng.normal(size=5), np.full(5, 0.3))
    b10 = uniform_band(curve, ens, 0.10)
    b05 = uniform_band(curve, ens, 0.05)
    assert np.all(b05.band_lo <= b10.band_lo)
    assert np.all(b05.band_hi >= b10.band_hi)
    assert np.all((b05.band_lo <= curve.estimates) & (curve.estimates <= b05.band_hi))


def test_band_degenerates_as_level_grows():
    # as the level approaches one the critical value falls to the bottom of
    # the simulated sups, so the band collapses toward the point estimate
    rng = np.random.default_rng(13)
    grid = np.array([0.5])
    ens = BootstrapEnsemble(grid=grid, draws=np.abs(rng.normal(size=(200, 1))), master_seed=0, kind="pivotal")
    curve = make_curve(grid, np.array([1.0]), np.array([0.3]))
    wide = uniform_band(curve, ens, 0.999)
    half = (wide.band_hi - wide.band_lo)[0] / 2
    second_smallest = np.partition(np.abs(ens.draws[:, 0]), 1)[1]
    assert half <= second_smallest / np.sqrt(1000 * 0.3**3) + 1e-12
    assert wide.band_lo[0] <= curve.estimates[0] <= wide.band_hi[0]


def test_pointwise_se_scaling():
    rng = np.random.default_rng(14)
    grid = np.array([0.2, 0.8])
    draws = rng.normal(size=(300, 2))
    ens = BootstrapEnsemble(grid=grid, draws=draws, master_seed=0, kind="pivotal")
    se = pointwise_se(ens, np.array([0.3, 0.3]), 1000)
    ens2 = BootstrapEnsemble(grid=grid, draws=3.0 * draws, master_seed=0, kind="pivotal")
    se2 = pointwise_se(ens2, np.array([0.3, 0.3]), 1000)
    assert np.allclose(se2, 3.0 * se, rtol=1e-12)
    zero = BootstrapEnsemble(grid=grid, draws=np.zeros((10, 2)), master_seed=0, kind="pivotal")
    assert np.all(pointwise_se(zero, np.array([0.3, 0.3]), 1000) == 0.0)


def test_grid_mismatch_rejected():
    grid = np.array([0.2, 0.8])
    ens = BootstrapEnsemble(grid=grid, draws=np.zeros((10, 2)), master_seed=0, kind="pivotal")
    curve = make_curve(np.array([0.3, 0.8]), np.zeros(2), np.full(2, 0.3))
    with pytest.raises(EstimationError):
        significance_test(curve, ens, 0.05)

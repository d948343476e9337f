import numpy as np
import pytest

from rkdkit.errors import EstimationError
from rkdkit.kernels import (
    SUPPORTED_KERNELS,
    basis_matrix,
    basis_vector,
    cross_kernel_matrices,
    eval_kernel,
    kernel_constants,
)

GAMMA1_UNIFORM = np.array([
    [1.0, 0.25, -0.25],
    [0.25, 1.0 / 6.0, 0.0],
    [-0.25, 0.0, 1.0 / 6.0],
])

PSI1_PLUS_UNIFORM = np.array([
    [0.25, 0.125, 0.0],
    [0.125, 1.0 / 12.0, 0.0],
    [0.0, 0.0, 0.0],
])


def test_eval_kernel_point_values():
    assert eval_kernel("tricube", 0.0) == pytest.approx(70.0 / 81.0, abs=1e-12)
    assert eval_kernel("tricube", 1.5) == 0.0
    assert eval_kernel("uniform", 0.3) == 0.5


def test_kernel_mass_and_symmetry():
    u = np.linspace(-1, 1, 20001)
    for name in SUPPORTED_KERNELS:
        k = eval_kernel(name, u)
        mass = np.trapezoid(k, u)
        assert mass == pytest.approx(1.0, abs=1e-8), name
        first_moment = np.trapezoid(u * k, u)
        assert first_moment == pytest.approx(0.0, abs=1e-10), name
        assert np.allclose(k, k[::-1]), name


def test_basis_vector_examples():
    assert np.allclose(basis_vector(2, 0.5), [1, 0.5, 0, 0.25, 0])
    assert np.allclose(basis_vector(2, -0.5), [1, 0, -0.5, 0, 0.25])
    assert np.allclose(basis_vector(2, 0.0), [1, 0, 0, 0, 0])


def test_basis_rejects_order_zero():
    with pytest.raises(EstimationError):
        basis_vector(0, 0.5)


def test_basis_continuity_at_kink():
    # value of the fitted curve is continuous at 0 for any coefficient vector
    rng = np.random.default_rng(0)
    for p in (1, 2, 3):
        alpha = rng.normal(size=2 * p + 1)
        left = basis_vector(p, -1e-12) @ alpha
        right = basis_vector(p, 1e-12) @ alpha
        assert left == pytest.approx(right, abs=1e-9)


def test_gamma_uniform_closed_form():
    c = kernel_constants("uniform", 1)
    assert np.max(np.abs(c.gamma - GAMMA1_UNIFORM)) < 1e-8


def test_psi_plus_uniform_closed_form():
    c = kernel_constants("uniform", 1)
    assert np.max(np.abs(c.psi_plus - PSI1_PLUS_UNIFORM)) < 1e-8


def test_psi_decomposition_and_positive_definite():
    for name in SUPPORTED_KERNELS:
        for p in (1, 2, 3):
            c = kernel_constants(name, p)
            assert np.max(np.abs(c.psi_full - (c.psi_plus + c.psi_minus))) < 1e-10
            assert np.linalg.eigvalsh(c.gamma).min() > 0


def test_theta_halves_sum_to_full_moment():
    u = np.linspace(-1, 1, 400001)
    for name in ("tricube", "uniform"):
        c = kernel_constants(name, 2, q_list=(3,))
        k = eval_kernel(name, u)
        full = np.trapezoid(basis_matrix(2, u) * (u**3 * k)[:, None], u, axis=0)
        total = c.theta_plus[3] + c.theta_minus[3]
        assert np.max(np.abs(total - full)) < 1e-8


def test_theta_mirror_symmetry():
    # odd basis rows flip sign between the two half-line moment vectors
    c = kernel_constants("triangular", 1, q_list=(2,))
    tp, tm = c.theta_plus[2], c.theta_minus[2]
    assert tp[0] == pytest.approx(tm[0], abs=1e-10)     # even integrand
    assert tp[1] == pytest.approx(-tm[2], abs=1e-10)    # u-slots mirror


def test_gamma_tricube_p2_vs_monte_carlo():
    rng = np.random.default_rng(42)
    u = rng.uniform(-1, 1, 10_000_000)
    r = basis_matrix(2, u)
    k = eval_kernel("tricube", u)
    approx = 2.0 * (r * k[:, None]).T @ r / len(u)
    c = kernel_constants("tricube", 2)
    assert np.max(np.abs(approx - c.gamma)) < 1e-3


def test_cross_kernel_reduces_to_psi():
    for name in SUPPORTED_KERNELS:
        c = kernel_constants(name, 2)
        cross = cross_kernel_matrices(name, 2, 1.0, 1.0, "full")
        assert np.max(np.abs(cross - c.psi_full)) < 1e-10


def test_cross_kernel_uniform_plus_closed_form():
    got = cross_kernel_matrices("uniform", 1, 1.0, 1.0, "plus")
    assert np.max(np.abs(got - PSI1_PLUS_UNIFORM)) < 1e-10


def test_cross_kernel_equal_scale_scaling_law():
    # substituting u -> s*u shows the equal-scale case is psi_full for any s:
    # the 1/sqrt(s1*s2) prefactor cancels the jacobian exactly
    c = kernel_constants("epanechnikov", 2)
    for s in (0.5, 2.0):
        got = cross_kernel_matrices("epanechnikov", 2, s, s, "full")
        assert np.max(np.abs(got - c.psi_full)) < 1e-10


def test_cross_kernel_tricube_vs_monte_carlo():
    s1, s2 = 1.0, 0.5
    rng = np.random.default_rng(7)
    u = rng.uniform(-0.5, 0.5, 10_000_000)
    r1 = basis_matrix(2, u / s1)
    r2 = basis_matrix(2, u / s2)
    k = eval_kernel("tricube", u / s1) * eval_kernel("tricube", u / s2)
    approx = (r1 * k[:, None]).T @ r2 / len(u) / np.sqrt(s1 * s2)
    got = cross_kernel_matrices("tricube", 2, s1, s2, "full")
    assert np.max(np.abs(approx - got)) < 1e-4


def test_cross_kernel_rejects_bad_scale():
    with pytest.raises(EstimationError):
        cross_kernel_matrices("tricube", 2, -1.0, 1.0)


def test_gaussian_kernel_rejected():
    with pytest.raises(EstimationError):
        eval_kernel("gaussian", 0.0)

"""Kernel functions, the constrained polynomial basis, and kernel constants.

The basis shares one intercept between the two sides of the evaluation point
but carries separate polynomial coefficients for each side, so a fitted curve
is continuous at the kink while its derivatives may jump there.

All kernel constants are integrals of piecewise-polynomial functions against
compactly supported kernels, evaluated by Gauss-Legendre quadrature split at
the basis kink.  Every supported kernel is polynomial on each half of its
support, so the split quadrature is exact to machine precision; a nested
refinement check still enforces the 1e-10 tolerance contract.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import EstimationError

__all__ = [
    "KernelSpec",
    "KernelConstants",
    "get_kernel",
    "eval_kernel",
    "basis_vector",
    "basis_matrix",
    "kernel_constants",
    "cross_kernel_matrices",
]


@dataclass(frozen=True)
class KernelSpec:
    """A named kernel supported on [-1, 1]."""

    name: str
    density: Callable[[np.ndarray], np.ndarray]


_KERNELS = {
    "tricube": lambda u: (70.0 / 81.0) * (1.0 - np.abs(u) ** 3) ** 3,
    "triangular": lambda u: 1.0 - np.abs(u),
    "epanechnikov": lambda u: 0.75 * (1.0 - u**2),
    "uniform": lambda u: np.full_like(u, 0.5),
}

SUPPORTED_KERNELS = tuple(_KERNELS)


def get_kernel(name: str | KernelSpec) -> KernelSpec:
    if isinstance(name, KernelSpec):
        return name
    try:
        return KernelSpec(name, _KERNELS[name])
    except KeyError:
        raise EstimationError(
            f"unsupported kernel {name!r}; choose one of {SUPPORTED_KERNELS}"
        ) from None


def eval_kernel(spec: str | KernelSpec, u) -> np.ndarray | float:
    """K(u); zero outside the compact support [-1, 1]."""
    spec = get_kernel(spec)
    arr = np.asarray(u, dtype=float)
    out = np.zeros_like(arr)
    inside = np.abs(arr) <= 1.0
    out[inside] = spec.density(arr[inside])
    if np.ndim(u) == 0:
        return float(out)
    return out


def basis_vector(p: int, u: float) -> np.ndarray:
    """Constrained basis (1, u d+, u d-, ..., u^p d+, u^p d-) at a point."""
    return basis_matrix(p, np.array([float(u)]))[0]


def basis_matrix(p: int, u: np.ndarray) -> np.ndarray:
    """Row-wise constrained basis for an array of points, shape (n, 2p+1)."""
    if p < 1:
        raise EstimationError("polynomial order must be >= 1 (a derivative is estimated)")
    u = np.asarray(u, dtype=float)
    n = u.shape[0]
    out = np.empty((n, 2 * p + 1))
    out[:, 0] = 1.0
    dplus = u >= 0
    upow = np.ones_like(u)
    for k in range(1, p + 1):
        upow = upow * u
        out[:, 2 * k - 1] = np.where(dplus, upow, 0.0)
        out[:, 2 * k] = np.where(dplus, 0.0, upow)
    return out


@dataclass(frozen=True)
class KernelConstants:
    """Kernel-dependent constant matrices for a given basis order."""

    kernel: str
    p: int
    gamma: np.ndarray
    gamma_inv: np.ndarray
    theta_plus: dict[int, np.ndarray]
    theta_minus: dict[int, np.ndarray]
    psi_plus: np.ndarray
    psi_minus: np.ndarray
    psi_full: np.ndarray = field(default=None)


_NODES = {m: leggauss(m) for m in (40, 80)}


def _segment_nodes(a: float, b: float, m: int):
    x, w = _NODES[m]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid + half * x, half * w


def _raw_constants(kernel: str, p: int, q_list: tuple[int, ...], m: int):
    spec = get_kernel(kernel)
    d = 2 * p + 1
    gamma = np.zeros((d, d))
    psi = {"plus": np.zeros((d, d)), "minus": np.zeros((d, d))}
    theta = {"plus": {q: np.zeros(d) for q in q_list}, "minus": {q: np.zeros(d) for q in q_list}}
    for side, (a, b) in (("minus", (-1.0, 0.0)), ("plus", (0.0, 1.0))):
        x, w = _segment_nodes(a, b, m)
        r = basis_matrix(p, x)
        k = spec.density(x)
        gamma += (r * (k * w)[:, None]).T @ r
        psi[side] += (r * (k * k * w)[:, None]).T @ r
        for q in q_list:
            theta[side][q] += (r * (x**q * k * w)[:, None]).sum(axis=0)
    return gamma, theta, psi


@lru_cache(maxsize=None)
def _cached_constants(kernel: str, p: int, q_list: tuple[int, ...]) -> KernelConstants:
    g40, t40, s40 = _raw_constants(kernel, p, q_list, 40)
    g80, t80, s80 = _raw_constants(kernel, p, q_list, 80)
    if np.max(np.abs(g40 - g80)) > 1e-10 or np.max(np.abs(s40["plus"] - s80["plus"])) > 1e-10:
        raise EstimationError(f"quadrature for kernel {kernel!r} did not converge to 1e-10")
    eigmin = np.linalg.eigvalsh(g80).min()
    if eigmin <= 0:
        raise EstimationError(
            f"singular constant matrix for kernel={kernel!r}, p={p}: invalid kernel/order pair"
        )
    return KernelConstants(
        kernel=kernel,
        p=p,
        gamma=g80,
        gamma_inv=np.linalg.inv(g80),
        theta_plus=t80["plus"],
        theta_minus=t80["minus"],
        psi_plus=s80["plus"],
        psi_minus=s80["minus"],
        psi_full=s80["plus"] + s80["minus"],
    )


def kernel_constants(spec: str | KernelSpec, p: int, q_list=()) -> KernelConstants:
    """Constant matrices for (kernel, p); moment vectors for each q in q_list."""
    if p < 1:
        raise EstimationError("polynomial order must be >= 1")
    name = get_kernel(spec).name
    return _cached_constants(name, int(p), tuple(sorted(int(q) for q in q_list)))


def cross_kernel_matrices(spec: str | KernelSpec, p: int, s1: float, s2: float, side: str = "full") -> np.ndarray:
    """Two-scale kernel covariance matrix over a half line or the full line.

    Evaluates (s1*s2)^(-1/2) * integral of r_p(u/s1) r_p(u/s2)' K(u/s1) K(u/s2)
    over the requested side.  With s1 == s2 == 1 and side == "full" this
    reduces to the squared-kernel matrix from :func:`kernel_constants`.
    """
    if s1 <= 0 or s2 <= 0:
        raise EstimationError("scales must be positive")
    if side not in ("plus", "minus", "full"):
        raise EstimationError(f"unknown side {side!r}")
    kspec = get_kernel(spec)
    d = 2 * p + 1
    out = np.zeros((d, d))
    reach = min(s1, s2)
    segments = []
    if side in ("minus", "full"):
        segments.append((-reach, 0.0))
    if side in ("plus", "full"):
        segments.append((0.0, reach))
    for a, b in segments:
        x, w = _segment_nodes(a, b, 80)
        r1 = basis_matrix(p, x / s1)
        r2 = basis_matrix(p, x / s2)
        kw = kspec.density(x / s1) * kspec.density(x / s2) * w
        out += (r1 * kw[:, None]).T @ r2
    return out / np.sqrt(s1 * s2)

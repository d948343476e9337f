"""Constrained local fitting at a kink.

Two engines share the constrained basis: kernel-weighted least squares for
conditional means of transformed outcomes, and kernel-weighted check-loss
minimization for conditional quantiles.  Both evaluate the basis at the raw
offset x - x0 while the kernel weight uses the scaled offset (x - x0) / h, so
fitted coefficients are (level, d1+/1!, d1-/1!, ..., dp+/p!, dp-/p!) in the
units of the data.

A bandwidth of ``math.inf`` is allowed and yields constant weights, i.e. the
global constrained fit used by pilot stages of bandwidth selection.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import IdentificationError, IllConditionedError, EstimationError
from .kernels import basis_matrix, eval_kernel, get_kernel
from .qrsolver import check_objective, solve_weighted_quantile

_MAX_CONDITION = 1e12

__all__ = [
    "Sample",
    "ConstrainedFit",
    "fit_constrained_wls",
    "fit_constrained_quantile",
    "rearrange_monotone",
    "residuals",
]


@dataclass
class Sample:
    """Observed outcome / running-variable arrays, optionally with treatment."""

    y: np.ndarray
    x: np.ndarray
    b: np.ndarray | None = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        if self.y.ndim != 1 or self.x.ndim != 1 or self.y.shape != self.x.shape:
            raise EstimationError("y and x must be one-dimensional arrays of equal length")
        if self.y.size < 1:
            raise EstimationError("sample is empty")
        if not (np.all(np.isfinite(self.y)) and np.all(np.isfinite(self.x))):
            raise EstimationError("sample contains non-finite values")
        if self.b is not None:
            self.b = np.asarray(self.b, dtype=float)
            if self.b.shape != self.y.shape or not np.all(np.isfinite(self.b)):
                raise EstimationError("treatment column must align with y and be finite")

    @property
    def n(self) -> int:
        return self.y.size

    def check_rule(self, rule, tol: float = 1e-9) -> None:
        """Verify a declared deterministic treatment rule against the b column."""
        if self.b is None:
            return
        predicted = rule(self.x)
        bad = np.abs(predicted - self.b) > tol
        if np.any(bad):
            i = int(np.argmax(bad))
            raise EstimationError(
                f"treatment column violates the declared rule at row {i}: "
                f"b={self.b[i]!r} vs rule(x)={predicted[i]!r}"
            )


@dataclass
class ConstrainedFit:
    """Result of a constrained local fit of order p at x0 with bandwidth h."""

    p: int
    x0: float
    h: float
    coeffs: np.ndarray
    n_eff_left: int
    n_eff_right: int
    objective: float
    tau: float | None = field(default=None)

    @property
    def level(self) -> float:
        return float(self.coeffs[0])

    def deriv_right(self, nu: int = 1) -> float:
        """nu-th right derivative at x0 (coefficients are derivative / nu!)."""
        return float(math.factorial(nu) * self.coeffs[2 * nu - 1])

    def deriv_left(self, nu: int = 1) -> float:
        return float(math.factorial(nu) * self.coeffs[2 * nu])

    def predict(self, x: np.ndarray) -> np.ndarray:
        return basis_matrix(self.p, np.asarray(x, dtype=float) - self.x0) @ self.coeffs


def _window(x: np.ndarray, x0: float, h: float, kernel) -> tuple[np.ndarray, np.ndarray]:
    if not h > 0:
        raise EstimationError("bandwidth must be positive")
    u = (x - x0) / h if math.isfinite(h) else np.zeros_like(x)
    w = eval_kernel(kernel, u)
    return w, w > 0


def _check_support(x, x0, mask, p):
    n_left = int(np.count_nonzero(mask & (x < x0)))
    n_right = int(np.count_nonzero(mask & (x >= x0)))
    if n_left < p + 1 or n_right < p + 1:
        raise IdentificationError(
            f"need at least {p + 1} kernel-positive observations per side of "
            f"x0={x0}; got left={n_left}, right={n_right}"
        )
    return n_left, n_right


def fit_constrained_wls(z: np.ndarray, x: np.ndarray, x0: float, p: int, h: float,
                        kernel) -> ConstrainedFit:
    """Kernel-weighted least squares on the constrained basis.

    Solved through an orthogonal decomposition of the weighted design rather
    than explicit normal equations; columns are rescaled first so the
    condition check reflects the intrinsic geometry, not the units of x.
    """
    z = np.asarray(z, dtype=float)
    x = np.asarray(x, dtype=float)
    kernel = get_kernel(kernel)
    w, mask = _window(x, x0, h, kernel)
    n_left, n_right = _check_support(x, x0, mask, p)

    design = basis_matrix(p, x[mask] - x0)
    sqw = np.sqrt(w[mask])
    dw = design * sqw[:, None]
    scale = np.abs(dw).max(axis=0)
    scale[scale == 0] = 1.0
    dws = dw / scale

    coeffs, _, rank, sv = np.linalg.lstsq(dws, z[mask] * sqw, rcond=None)
    cond = sv[0] / sv[-1] if sv[-1] > 0 else np.inf
    if rank < design.shape[1] or cond > _MAX_CONDITION:
        raise IllConditionedError(
            f"weighted design condition number {cond:.3e} exceeds {_MAX_CONDITION:.0e}"
        )
    coeffs = coeffs / scale
    resid = z[mask] - design @ coeffs
    return ConstrainedFit(
        p=p, x0=float(x0), h=float(h), coeffs=coeffs,
        n_eff_left=n_left, n_eff_right=n_right,
        objective=float(np.sum(w[mask] * resid**2)),
    )


def fit_constrained_quantile(y: np.ndarray, x: np.ndarray, tau: float, x0: float,
                             p: int, h: float, kernel,
                             tol: float = 1e-10, max_iter: int = 300,
                             init: np.ndarray | None = None) -> ConstrainedFit:
    """Kernel-weighted check-loss minimization on the constrained basis."""
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    kernel = get_kernel(kernel)
    w, mask = _window(x, x0, h, kernel)
    n_left, n_right = _check_support(x, x0, mask, p)

    design = basis_matrix(p, x[mask] - x0)
    coeffs, info = solve_weighted_quantile(design, y[mask], tau, weights=w[mask],
                                           tol=tol, max_iter=max_iter, beta0=init)
    return ConstrainedFit(
        p=p, x0=float(x0), h=float(h), coeffs=coeffs,
        n_eff_left=n_left, n_eff_right=n_right,
        objective=check_objective(y[mask] - design @ coeffs, tau, w[mask]),
        tau=float(tau),
    )


def rearrange_monotone(taus: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Monotone rearrangement of a quantile curve: sort values ascending."""
    taus = np.asarray(taus, dtype=float)
    if taus.ndim != 1 or np.any(np.diff(taus) <= 0):
        raise EstimationError("quantile levels must be strictly increasing")
    values = np.asarray(values, dtype=float)
    if values.shape != taus.shape:
        raise EstimationError("values must align with the quantile grid")
    return np.sort(values)


def residuals(fit: ConstrainedFit, z: np.ndarray, x: np.ndarray) -> np.ndarray:
    """In-window residuals z - fitted basis value; zero outside the bandwidth."""
    z = np.asarray(z, dtype=float)
    x = np.asarray(x, dtype=float)
    if z.shape != x.shape:
        raise EstimationError("z and x must have the same length")
    inside = np.abs(x - fit.x0) <= fit.h
    out = np.zeros_like(z)
    out[inside] = z[inside] - fit.predict(x[inside])
    return out

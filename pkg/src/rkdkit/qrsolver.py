"""Interior-point solver for weighted check-loss minimization.

Primal-dual path following with a Mehrotra predictor-corrector step on the
bounded-variable dual of the quantile regression linear program.  Positive
observation weights are absorbed by row scaling, which leaves the minimizer
unchanged because the check function is positively homogeneous.

The solver is deterministic: a fixed starting point and step rule, no
randomization, so repeated calls on identical inputs are bit-identical.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .errors import ConvergenceError, EstimationError

_STEP_SHRINK = 0.9995


def check_objective(residuals: np.ndarray, tau: float, weights: np.ndarray | None = None) -> float:
    """Weighted check loss sum over residuals."""
    v = np.where(residuals >= 0, tau * residuals, (tau - 1.0) * residuals)
    if weights is not None:
        v = v * weights
    return float(np.sum(v))


def _max_step(v: np.ndarray, dv: np.ndarray) -> float:
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return min(1.0, _STEP_SHRINK * float(np.min(-v[neg] / dv[neg])))


def _exact_lp(Xs: np.ndarray, y: np.ndarray, tau: float) -> np.ndarray | None:
    """Exact solve of the check-loss LP; used when path following stalls."""
    n, d = Xs.shape
    eye = sp.identity(n, format="csc")
    a_eq = sp.hstack([sp.csc_matrix(Xs), -sp.csc_matrix(Xs), eye, -eye], format="csc")
    cost = np.concatenate([np.zeros(2 * d), np.full(n, tau), np.full(n, 1.0 - tau)])
    res = linprog(cost, A_eq=a_eq, b_eq=y, bounds=(0, None), method="highs")
    if res.status != 0:
        return None
    return res.x[:d] - res.x[d:2 * d]


def solve_weighted_quantile(design: np.ndarray, y: np.ndarray, tau: float,
                            weights: np.ndarray | None = None,
                            tol: float = 1e-10, max_iter: int = 300,
                            beta0: np.ndarray | None = None):
    """Minimize sum_i w_i * rho_tau(y_i - design_i' beta).

    Returns (beta, info) where info records iterations, the final relative
    duality gap and the achieved objective.  Raises ConvergenceError (with the
    last objective attached) when the gap has not closed after max_iter
    iterations.  ``beta0`` warm-starts the path following (a nearby solution
    cuts the iteration count roughly in half; tail quantiles benefit most).
    """
    if not 0.0 < tau < 1.0:
        raise EstimationError("quantile level must lie strictly inside (0, 1)")
    X = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    if weights is not None:
        w = np.asarray(weights, dtype=float)
        keep = w > 0
        row_w = w[keep]
        X = X[keep] * row_w[:, None]
        y = y[keep] * row_w
    else:
        row_w = np.ones(len(y))
    n, d = X.shape
    if n < d:
        raise EstimationError("fewer observations than parameters in quantile fit")

    col_scale = np.abs(X).max(axis=0)
    col_scale[col_scale == 0] = 1.0
    Xs = X / col_scale

    if beta0 is not None and np.all(np.isfinite(beta0)) and len(beta0) == d:
        beta = np.asarray(beta0, dtype=float) * col_scale
    else:
        beta = np.linalg.lstsq(Xs, y, rcond=None)[0]
    r = y - Xs @ beta
    # center the start at the target quantile of the (unweighted) residuals,
    # absorbing the shift into the intercept; without this the tail quantiles
    # start far from the central path and can stall
    base_col = X[:, 0] / row_w
    if np.ptp(base_col) <= 1e-12 * max(abs(base_col[0]), 1.0) and base_col[0] != 0:
        shift = float(np.quantile(r / row_w, tau))
        beta[0] += shift * col_scale[0] / base_col[0]
        r = r - shift * row_w
    spread = max(float(np.mean(np.abs(r))), 1e-12 * max(float(np.mean(np.abs(y))), 1.0))
    pad = 1e-4 * spread
    wv = np.maximum(r, 0.0) + pad          # multiplier for the upper bound
    z = np.maximum(-r, 0.0) + pad          # multiplier for the lower bound
    a = np.full(n, 1.0 - tau)
    s = 1.0 - a

    it = 0
    gap_rel = np.inf
    obj = check_objective(r, tau)
    for it in range(1, max_iter + 1):
        gap = float(z @ a + wv @ s)
        obj = check_objective(r, tau)
        gap_rel = gap / (abs(obj) + 1.0)
        if gap_rel <= tol:
            break

        mu = gap / (2.0 * n)
        q = z / a + wv / s
        qinv = 1.0 / q
        rd = Xs @ beta - y - z + wv
        g_aff = -rd - (z - wv)

        M = (Xs * qinv[:, None]).T @ Xs
        try:
            L = np.linalg.cholesky(M)
        except np.linalg.LinAlgError:
            L = np.linalg.cholesky(M + 1e-12 * np.trace(M) * np.eye(d))

        def solve_normal(rhs):
            return np.linalg.solve(L.T, np.linalg.solve(L, rhs))

        db = solve_normal(Xs.T @ (qinv * g_aff))
        da_a = qinv * (g_aff - Xs @ db)
        dz_a = -z - (z / a) * da_a
        dw_a = -wv + (wv / s) * da_a
        ds_a = -da_a

        ap = min(_max_step(a, da_a), _max_step(s, ds_a))
        ad = min(_max_step(z, dz_a), _max_step(wv, dw_a))
        mu_aff = ((z + ad * dz_a) @ (a + ap * da_a) + (wv + ad * dw_a) @ (s + ap * ds_a)) / (2.0 * n)
        sigma = min(1.0, max(mu_aff / mu, 0.0)) ** 3 if mu > 0 else 0.1

        g = g_aff + (sigma * mu) * (1.0 / a - 1.0 / s) - (da_a * dz_a) / a + (ds_a * dw_a) / s
        db = solve_normal(Xs.T @ (qinv * g))
        da = qinv * (g - Xs @ db)
        dz = (sigma * mu) / a - z - (z / a) * da - (da_a * dz_a) / a
        dw = (sigma * mu) / s - wv + (wv / s) * da - (ds_a * dw_a) / s
        ds = -da

        ap = min(_max_step(a, da), _max_step(s, ds))
        ad = min(_max_step(z, dz), _max_step(wv, dw))
        a = a + ap * da
        s = s + ap * ds
        z = z + ad * dz
        wv = wv + ad * dw
        beta = beta + ad * db
        r = y - Xs @ beta
    else:
        exact = _exact_lp(Xs, y, tau)
        if exact is None:
            raise ConvergenceError(
                f"quantile solver did not converge in {max_iter} iterations "
                f"(relative gap {gap_rel:.2e})",
                objective=obj,
            )
        obj_exact = check_objective(y - Xs @ exact, tau)
        if obj_exact <= obj:
            beta, obj = exact, obj_exact
        return beta / col_scale, {"iterations": max_iter, "gap": np.nan,
                                  "objective": obj, "fallback": True}

    return beta / col_scale, {"iterations": it, "gap": gap_rel, "objective": obj}

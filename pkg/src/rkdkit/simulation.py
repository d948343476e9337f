"""Monte Carlo study: data generating process, analytic truths, harness.

The reference design draws (X, eps) bivariate normal, assigns the treatment
B = |X| (a deterministic rule with slopes -1 and +1 around a kink at zero),
and builds the outcome

    Y = 1 + 0.5 B + X + 0.1 X^2 + 1.5 B X + (1 + 2 B) eps.

Conditional on X = 0 the potential outcome at treatment level b is normal
with mean 1 + 0.5 b and standard deviation (1 + 2 b) * sigma_tilde, where
sigma_tilde = sigma_eps * sqrt(1 - rho^2).  Differentiating that law at b = 0
gives closed forms for every effect the package estimates, which serve as the
truth in the study tables:

    mean            0.5
    quantile(tau)   0.5 + 2 sigma_tilde z_tau
    cdf at y        phi((y-1)/sigma_tilde) (-0.5 - 2 (y-1)) / sigma_tilde
    lorenz(tau)     -1.5 sigma_tilde phi(z_tau)
"""
from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.stats import norm

from . import __version__ as _pkg_version
from .effects import KinkDesign
from .errors import EstimationError, RkdError
from .locfit import Sample
from .pipeline import AnalysisConfig, analyze
from .streams import derive_seed, stream

__all__ = [
    "DgpConfig",
    "StudyReport",
    "generate_dgp",
    "true_effects",
    "true_quantiles",
    "run_study",
    "worker_count",
]

DEFAULT_TAU_GRID = np.round(np.arange(1, 10) / 10.0, 10)
DEFAULT_INTEGRATION_GRID = np.round(np.arange(1, 100) / 100.0, 10)


@dataclass(frozen=True)
class DgpConfig:
    """Parameters of the reference data generating process."""

    n: int
    seed: int
    sigma_x: float = 0.1781742
    sigma_eps: float = 0.1295
    rho: float = 0.25

    def __post_init__(self):
        if self.sigma_x <= 0 or self.sigma_eps <= 0:
            raise EstimationError("dispersion parameters must be positive")
        if not abs(self.rho) < 1:
            raise EstimationError("|rho| must be below one")

    @property
    def sigma_tilde(self) -> float:
        return self.sigma_eps * float(np.sqrt(1.0 - self.rho**2))


def generate_dgp(cfg: DgpConfig) -> tuple[Sample, KinkDesign]:
    """Draw a sample from the reference design; deterministic in cfg.seed."""
    rng = stream(cfg.seed)
    cov = np.array([
        [cfg.sigma_x**2, cfg.rho * cfg.sigma_x * cfg.sigma_eps],
        [cfg.rho * cfg.sigma_x * cfg.sigma_eps, cfg.sigma_eps**2],
    ])
    chol = np.linalg.cholesky(cov)
    xe = rng.standard_normal((cfg.n, 2)) @ chol.T
    x, eps = xe[:, 0], xe[:, 1]
    b = np.abs(x)
    y = 1.0 + 0.5 * b + x + 0.1 * x**2 + 1.5 * b * x + (1.0 + 2.0 * b) * eps
    return Sample(y=y, x=x, b=b), KinkDesign(x0=0.0, slope_right=1.0, slope_left=-1.0)


def true_quantiles(taus, cfg: DgpConfig | None = None) -> np.ndarray:
    """Conditional outcome quantiles at the kink, y_tau = 1 + sigma_tilde z_tau."""
    st = (cfg or DgpConfig(n=1, seed=0)).sigma_tilde
    return 1.0 + st * norm.ppf(np.asarray(taus, dtype=float))


def true_effects(kind: str, grid, cfg: DgpConfig | None = None) -> np.ndarray:
    """Analytic effect values for the reference design on the given grid."""
    st = (cfg or DgpConfig(n=1, seed=0)).sigma_tilde
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if kind == "mean":
        return np.full(grid.shape, 0.5)
    if kind == "quantile":
        return 0.5 + 2.0 * st * norm.ppf(grid)
    if kind == "distributional":
        return norm.pdf((grid - 1.0) / st) * (-0.5 - 2.0 * (grid - 1.0)) / st
    if kind == "lorenz":
        return -1.5 * st * norm.pdf(norm.ppf(grid))
    raise EstimationError(f"unknown effect kind {kind!r}")


def worker_count(explicit: int | None = None) -> int:
    if explicit is not None:
        return max(1, int(explicit))
    env = os.environ.get("RKDKIT_WORKERS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


@dataclass
class StudyReport:
    """Aggregated Monte Carlo statistics for each requested effect and n."""

    effects: tuple
    n_list: tuple
    reps: int
    boot: int
    seed: int
    level: float
    bandwidth_mode: str
    tables: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)
    runtime_seconds: float = 0.0
    version: str = _pkg_version

    def to_dict(self) -> dict:
        out = asdict(self)
        out["tables"] = {
            eff: {str(n): {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                           for k, v in tab.items()}
                  for n, tab in per_n.items()}
            for eff, per_n in self.tables.items()
        }
        return out


def _replication(task: dict) -> tuple[int, int, dict]:
    """One Monte Carlo replication, executed possibly in a worker process."""
    n, rep = task["n"], task["rep"]
    dgp = DgpConfig(n=n, seed=derive_seed(task["seed"], n, rep, 0),
                    sigma_x=task["sigma_x"], sigma_eps=task["sigma_eps"],
                    rho=task["rho"])
    sample, design = generate_dgp(dgp)
    cfg = AnalysisConfig(
        effects=tuple(task["effects"]),
        p=task["p"], q=task["q"], kernel=task["kernel"],
        tau_grid=np.asarray(task["tau_grid"]),
        integration_grid=np.asarray(task["integration_grid"]),
        boot=task["boot"], level=task["level"],
        seed=derive_seed(task["seed"], n, rep, 1),
        bandwidth_mode=task["bandwidth_mode"],
        fixed_bandwidths=task.get("fixed_bandwidths"),
        with_tests=False,
    )
    out: dict = {}
    try:
        results = analyze(sample, design, cfg)
    except RkdError as exc:
        return n, rep, {"error": f"{type(exc).__name__}: {exc}"}
    taus = np.asarray(task["tau_grid"], dtype=float)
    for eff, res in results.items():
        curve = res.curve
        if eff == "mean":
            truth = true_effects("mean", [0.0], dgp)
        elif eff == "quantile":
            truth = true_effects("quantile", curve.grid, dgp)
        elif eff == "distributional":
            truth = true_effects("distributional", true_quantiles(taus, dgp), dgp)
        else:
            truth = true_effects("lorenz", curve.grid, dgp)
        rec = {"estimates": curve.estimates, "truth": truth}
        if curve.band_lo is not None:
            rec["covered"] = bool(np.all((curve.band_lo <= truth) & (truth <= curve.band_hi)))
        out[eff] = rec
    return n, rep, out


def run_study(effects, n_list, reps: int, B: int, seed: int,
              bandwidth_mode: str = "plugin", level: float = 0.05,
              tau_grid=None, integration_grid=None, p: int = 2, q: int | None = None,
              kernel: str = "tricube", workers: int | None = None,
              sigma_x: float = 0.1781742, sigma_eps: float = 0.1295,
              rho: float = 0.25, fixed_bandwidths: dict | None = None) -> StudyReport:
    """Monte Carlo study over sample sizes; deterministic in the master seed.

    Per replication: fresh sample, plug-in bandwidths, estimates, bootstrap
    ensembles and bands (when B > 0), aggregated into bias ratio, RMSE and
    uniform coverage against the analytic truths.  Failed replications are
    counted and reported, never silently replaced.
    """
    if reps < 1:
        raise EstimationError("need at least one replication")
    effects = tuple(effects)
    AnalysisConfig(effects=effects)  # validate effect names before spawning workers
    n_list = tuple(int(n) for n in n_list)
    taus = DEFAULT_TAU_GRID if tau_grid is None else np.asarray(tau_grid, dtype=float)
    ugrid = DEFAULT_INTEGRATION_GRID if integration_grid is None else np.asarray(integration_grid, dtype=float)
    q = p + 1 if q is None else q

    base_task = {
        "seed": int(seed), "effects": effects, "p": p, "q": q, "kernel": kernel,
        "tau_grid": taus.tolist(), "integration_grid": ugrid.tolist(),
        "boot": int(B), "level": level, "bandwidth_mode": bandwidth_mode,
        "fixed_bandwidths": fixed_bandwidths,
        "sigma_x": sigma_x, "sigma_eps": sigma_eps, "rho": rho,
    }
    tasks = [dict(base_task, n=n, rep=r) for n in n_list for r in range(reps)]

    t0 = time.perf_counter()
    nworkers = worker_count(workers)
    if nworkers == 1 or len(tasks) == 1:
        raw = [_replication(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=nworkers) as pool:
            raw = list(pool.map(_replication, tasks, chunksize=4))
    raw.sort(key=lambda item: (item[0], item[1]))

    tables: dict = {eff: {} for eff in effects}
    failures: dict = {}
    for n in n_list:
        per_rep = [payload for (nn, _, payload) in raw if nn == n]
        errs = [p_["error"] for p_ in per_rep if "error" in p_]
        failures[str(n)] = errs
        ok = [p_ for p_ in per_rep if "error" not in p_]
        if not ok:
            raise EstimationError(
                f"every replication failed at n={n}; first error: {errs[0]}")
        for eff in effects:
            est = np.stack([p_[eff]["estimates"] for p_ in ok])
            truth = ok[0][eff]["truth"]
            mean_est = est.mean(axis=0)
            bias = np.abs(mean_est - truth)
            with np.errstate(divide="ignore"):
                ratio = np.where(np.abs(truth) < 1e-8, bias, bias / np.abs(truth))
            tab = {
                "grid": (taus if eff != "mean" else np.array([0.0])),
                "truth": truth,
                "bias_ratio": ratio,
                "bias_ratio_is_absolute": np.abs(truth) < 1e-8,
                "rmse": np.sqrt(np.mean((est - truth[None, :])**2, axis=0)),
                "reps_ok": len(ok),
            }
            if B > 0 and "covered" in ok[0][eff]:
                tab["coverage"] = float(np.mean([p_[eff]["covered"] for p_ in ok]))
            tables[eff][n] = tab

    return StudyReport(
        effects=effects, n_list=n_list, reps=reps, boot=int(B), seed=int(seed),
        level=level, bandwidth_mode=bandwidth_mode, tables=tables,
        failures=failures, runtime_seconds=time.perf_counter() - t0,
    )

"""Figure rendering for analysis reports and simulation studies.

Figures are written next to the delimited output: one panel per effect with
the point estimates and the uniform band, a bandwidth profile when plug-in
schedules are present, and RMSE/coverage summaries for study reports.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

_EFFECT_LABEL = {
    "mean": "mean effect",
    "distributional": "distributional effect",
    "quantile": "quantile effect",
    "lorenz": "Lorenz effect",
}


def render_effect_figures(results: dict, out_dir) -> list[Path]:
    """One figure per estimated effect; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for eff, rep in results.items():
        curve = rep.curve
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        grid = curve.grid
        if curve.band_lo is not None:
            ax.fill_between(grid, curve.band_lo, curve.band_hi,
                            alpha=0.25, color="tab:blue", label="uniform band")
        marker = "o" if grid.size < 25 else None
        ax.plot(grid, curve.estimates, color="tab:blue", marker=marker, label="estimate")
        ax.axhline(0.0, color="0.6", lw=0.8, ls=":")
        xlabel = {"mean": "", "quantile": "quantile level",
                  "lorenz": "quantile level", "distributional": "outcome level"}[eff]
        ax.set_xlabel(xlabel)
        ax.set_ylabel(_EFFECT_LABEL[eff])
        title = _EFFECT_LABEL[eff]
        tests = rep.tests
        if "significance" in tests:
            title += f"  (signif. p={tests['significance'].p_value:.3f})"
        ax.set_title(title)
        if grid.size > 1:
            ax.legend(loc="best", fontsize=8)
        fig.tight_layout()
        path = out_dir / f"{eff}_curve.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)

        if rep.schedule is not None and rep.schedule.grid.size > 1:
            fig, ax = plt.subplots(figsize=(6.0, 3.2))
            ax.plot(rep.schedule.grid, rep.schedule.main, marker=".", label="main")
            ax.plot(rep.schedule.grid, rep.schedule.pilot, marker=".", ls="--", label="pilot")
            ax.set_xlabel("grid")
            ax.set_ylabel("bandwidth")
            ax.set_title(f"{_EFFECT_LABEL[eff]}: plug-in bandwidths")
            ax.legend(fontsize=8)
            fig.tight_layout()
            path = out_dir / f"{eff}_bandwidths.png"
            fig.savefig(path, dpi=150)
            plt.close(fig)
            written.append(path)
    return written


def render_study_figures(report, out_dir) -> list[Path]:
    """RMSE-versus-n and coverage summaries for a Monte Carlo study."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for eff, per_n in report.tables.items():
        ns = sorted(per_n)
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        rmse = np.array([per_n[n]["rmse"] for n in ns])
        grid = np.asarray(per_n[ns[0]]["grid"])
        if grid.size == 1:
            ax.plot(ns, rmse[:, 0], marker="o")
            ax.set_xlabel("sample size")
        else:
            for k, n in enumerate(ns):
                ax.plot(grid, rmse[k], marker=".", label=f"n={n}")
            ax.set_xlabel("grid")
            ax.legend(fontsize=8)
        ax.set_ylabel("RMSE")
        cov = [per_n[n].get("coverage") for n in ns]
        sub = ", ".join(f"cvg(n={n})={c:.3f}" for n, c in zip(ns, cov) if c is not None)
        ax.set_title(f"{_EFFECT_LABEL.get(eff, eff)}" + (f"  [{sub}]" if sub else ""))
        fig.tight_layout()
        path = out_dir / f"study_{eff}_rmse.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written

"""Figure rendering for reports.

Companions to the delimited outputs: indicator heat maps for field scans,
basin maps for grid runs, and convergence-history plots for single
trajectories.  All functions write image files (any extension matplotlib
understands) and never open interactive windows.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .indicator import FieldScanResult
from .solver import GridCellResult, Status, TerminationReport

_STATUS_COLORS = {
    Status.CONVERGED_ROOT.value: "#1f77b4",
    Status.CONVERGED_SINGULAR.value: "#d62728",
    Status.MAX_ITER.value: "#7f7f7f",
    Status.STALLED.value: "#ff7f0e",
    Status.LIMIT_UNSTABLE.value: "#9467bd",
    Status.BREAKDOWN.value: "#2ca02c",
}


def save_field_figure(result: FieldScanResult, path: str) -> None:
    """Two-panel heat map: log10 of g and log10 of the sigma ratio."""
    g = np.full((result.nx, result.ny), np.nan)
    ratio = np.full((result.nx, result.ny), np.nan)
    for idx, cell in enumerate(result.cells):
        i, j = divmod(idx, result.ny)
        if cell.g_value is not None and cell.g_value > 0.0:
            g[i, j] = np.log10(cell.g_value)
        if cell.sigma_min_ratio is not None and cell.sigma_min_ratio > 0.0:
            ratio[i, j] = np.log10(cell.sigma_min_ratio)
    extent = (result.xs[0], result.xs[-1], result.ys[0], result.ys[-1])
    fig, axes = plt.subplots(1, 2, figsize=(11, 4.6), constrained_layout=True)
    for ax, data, label in (
        (axes[0], g, "log10 g"),
        (axes[1], ratio, "log10 sigma_min/sigma_max"),
    ):
        im = ax.imshow(data.T, origin="lower", extent=extent, aspect="auto",
                       cmap="viridis")
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
        ax.set_title(label)
        fig.colorbar(im, ax=ax, shrink=0.9)
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_grid_figure(results: list[GridCellResult], nx: int, ny: int,
                     path: str) -> None:
    """Basin map: each start colored by its termination status."""
    fig, ax = plt.subplots(figsize=(6.4, 5.6), constrained_layout=True)
    seen = []
    for r in results:
        status = r.status.value
        color = _STATUS_COLORS.get(status, "#000000")
        label = status if status not in seen else None
        if label is not None:
            seen.append(status)
        ax.scatter(r.x0[0], r.x0[1], c=color, s=22, marker="s", label=label)
    ax.set_xlabel("x0_1")
    ax.set_ylabel("x0_2")
    ax.set_title("termination status by start point")
    ax.legend(loc="upper left", fontsize=8, framealpha=0.9)
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_trajectory_figure(report: TerminationReport, path: str) -> None:
    """Semilog history of the residual norm, indicator g, and damping."""
    ks = [r.k for r in report.records]
    f_norms = [r.f_norm for r in report.records]
    fig, (ax1, ax2) = plt.subplots(
        2, 1, figsize=(6.8, 6.4), sharex=True, constrained_layout=True
    )
    ax1.semilogy(ks, f_norms, "o-", label="||F||")
    g_pts = [(r.k, r.g_value) for r in report.records
             if r.g_value is not None and r.g_value > 0.0]
    if g_pts:
        ax1.semilogy(*zip(*g_pts), "s--", label="g")
    ax1.legend()
    ax1.set_ylabel("value")
    ax1.set_title(f"status: {report.status.value}")
    lam_pts = [(r.k, r.lam) for r in report.records if r.lam is not None]
    if lam_pts:
        ax2.semilogy(*zip(*lam_pts), "d-", color="#2ca02c", label="lambda")
        ax2.legend()
    ax2.set_xlabel("iteration")
    ax2.set_ylabel("damping")
    fig.savefig(path, dpi=130)
    plt.close(fig)

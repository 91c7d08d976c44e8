"""Render fitted-band and sweep figures to image files.

Builds ``matplotlib.figure.Figure`` objects directly rather than going
through pyplot, so there is no global figure state and rendering is safe
from library code, worker threads, and the service process.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.figure import Figure

from .experiments import ExperimentReport
from .gpr import PosteriorSummary

__all__ = ["render_band_figure", "render_sweep_figure"]

_FIGSIZE = (7.0, 4.5)
_DPI = 150


def render_band_figure(
    summary: PosteriorSummary,
    path,
    train=None,
    title: str | None = None,
    time_scale: float | None = None,
) -> Path:
    """Posterior mean, mode, and 95% band; optionally the fitted points.

    ``train`` is a sequence of ``(tau, level)`` pairs drawn as markers.
    ``time_scale`` (e.g. a duration in days) stretches the horizontal axis
    from normalized time into physical time.  Returns the written path.
    """
    fig = Figure(figsize=_FIGSIZE, dpi=_DPI)
    ax = fig.add_subplot(111)
    scale = 1.0 if time_scale is None else float(time_scale)
    grid = summary.grid * scale
    ax.fill_between(grid, summary.lower95, summary.upper95,
                    color="tab:blue", alpha=0.25, linewidth=0,
                    label="95% band")
    ax.plot(grid, summary.mean, color="tab:blue", label="posterior mean")
    # the mode is stored as knot coefficients; with a piecewise-linear basis
    # the induced curve is exactly the polyline through the knots
    knots = np.asarray(summary.knots) * scale
    ax.plot(knots, summary.mode, color="tab:orange", linestyle="--",
            label="posterior mode")
    if train is not None:
        pts = np.asarray(train, dtype=float)
        if pts.size:
            ax.plot(pts[:, 0] * scale, pts[:, 1], linestyle="none",
                    marker="o", color="black", markersize=5,
                    label="aggregated estimates")
    ax.set_xlabel("time (days)" if time_scale is not None else "normalized time")
    ax.set_ylabel("recovery level")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="lower right", frameon=False)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, format="png")
    return out


def render_sweep_figure(report: ExperimentReport, path,
                        title: str | None = None) -> Path:
    """Mean RMSE per sweep cell with 95% CI error bars.

    A levels sweep gets one line per spacing rule over the level counts;
    every other sweep is a single line over its cells in config order.
    """
    fig = Figure(figsize=_FIGSIZE, dpi=_DPI)
    ax = fig.add_subplot(111)

    def _errbar(xs, cells, label=None):
        means = np.array([c.mean_rmse for c in cells])
        lo = means - np.array([c.ci_lower for c in cells])
        hi = np.array([c.ci_upper for c in cells]) - means
        ax.errorbar(xs, means, yerr=[lo, hi], fmt="o-", capsize=4,
                    label=label)

    if report.kind == "levels":
        series: dict[str, list] = {}
        for cell in report.cells:
            series.setdefault(cell.overrides["spacing"], []).append(cell)
        for spacing, cells in series.items():
            cells = sorted(cells, key=lambda c: c.overrides["level_count"])
            xs = [c.overrides["level_count"] for c in cells]
            _errbar(xs, cells, label=spacing)
        ax.set_xlabel("number of elicited levels")
        ax.legend(frameon=False, title="spacing")
    else:
        xs = np.arange(len(report.cells))
        _errbar(xs, list(report.cells))
        ax.set_xticks(xs)
        ax.set_xticklabels([c.label for c in report.cells],
                           rotation=20, ha="right")
        ax.set_xlabel("sweep cell")
    ax.set_ylabel("RMSE")
    ax.grid(True, alpha=0.3)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, format="png")
    return out

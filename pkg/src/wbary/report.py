"""Raster/vector figures for CLI reports, drawn with matplotlib's object API.

Only :class:`matplotlib.figure.Figure` is used (no pyplot state), so these
helpers are safe to call from worker threads and never open a window.
"""

from __future__ import annotations

import numpy as np
from matplotlib.figure import Figure
from matplotlib.ticker import MaxNLocator

from .measures import DiscreteMeasure

AREA_FRACTION = 0.05  # share of the panel covered by discs in total


def _disc_sizes(weights, ax_points: float) -> np.ndarray:
    # scatter sizes are areas in pt^2, so mass maps linearly onto them
    return AREA_FRACTION * ax_points * np.asarray(weights) / np.sum(weights)


def _scatter_measure(ax, measure: DiscreteMeasure, color="C0", panel_pt2: float = 4e4):
    if measure.d != 2:
        raise ValueError(f"can only draw planar measures, got d={measure.d}")
    x, y = measure.points.T
    ax.scatter(x, y, s=_disc_sizes(measure.weights, panel_pt2), c=color, alpha=0.7,
               linewidths=0)
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xticks([])
    ax.set_yticks([])


def plot_measure(measure: DiscreteMeasure, path, title: str | None = None,
                 inputs=None) -> None:
    """Scatter plot of a planar measure, disc area proportional to mass.

    ``inputs`` (optional) are drawn faintly underneath for context.
    """
    fig = Figure(figsize=(5, 5))
    ax = fig.add_subplot()
    for mu in inputs or ():
        ax.scatter(*mu.points.T, s=_disc_sizes(mu.weights, 4e4), c="0.8", linewidths=0)
    _scatter_measure(ax, measure)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path)


def plot_compare(rows, path) -> None:
    """Bar chart of the error ratio and the adapted bound per method."""
    methods = [r["method"] for r in rows]
    ratio = [r["ratio"] for r in rows]
    eta = [r["eta"] for r in rows]
    pos = np.arange(len(rows))
    fig = Figure(figsize=(1.6 * len(rows) + 2, 3.5))
    ax = fig.add_subplot()
    ax.bar(pos - 0.2, ratio, 0.4, label=f"ratio to {rows[0]['ratio_to']}")
    ax.bar(pos + 0.2, eta, 0.4, label="adapted bound")
    ax.axhline(1.0, color="k", lw=0.8)
    ax.set_xticks(pos, methods)
    ax.set_ylabel("objective ratio")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path)


def plot_sweep(measures, shape, path, weights=None) -> None:
    """Grid of small scatter panels, row-major in ``shape = (rows, cols)``."""
    rows, cols = shape
    fig = Figure(figsize=(1.8 * cols, 1.8 * rows))
    for k, nu in enumerate(measures):
        ax = fig.add_subplot(rows, cols, k + 1)
        _scatter_measure(ax, nu, panel_pt2=8e3)
        if weights is not None and len(weights[k]) <= 4:
            ax.set_title(" ".join(f"{w:.2f}" for w in weights[k]), fontsize=6)
    fig.tight_layout()
    fig.savefig(path)


def plot_objective_history(objectives, path, lower_bound: float | None = None) -> None:
    """Objective after each fixed-point round (round 0 is the initial measure)."""
    fig = Figure(figsize=(4.5, 3.2))
    ax = fig.add_subplot()
    ax.plot(np.arange(len(objectives)), objectives, "o-")
    if lower_bound is not None:
        ax.axhline(lower_bound, color="0.5", ls="--", label="lower bound")
        ax.legend(frameon=False)
    ax.xaxis.set_major_locator(MaxNLocator(integer=True))
    ax.set_xlabel("round")
    ax.set_ylabel("objective")
    fig.tight_layout()
    fig.savefig(path)


# ------------------------------------------------------------ plain SVG

SVG_WIDTH = 500.0
SVG_MARGIN = 0.05


def measure_svg(measure: DiscreteMeasure, width: float = SVG_WIDTH) -> str:
    """Plain SVG 1.1 document with one ``<circle>`` per atom.

    The viewport is the bounding box of the support grown by 5% on every
    side; disc areas are proportional to mass and cover 5% of the canvas in
    total.  Output depends only on the measure, so identical inputs give
    identical bytes.
    """
    if measure.d != 2:
        raise ValueError(f"SVG output needs d = 2, got d = {measure.d}")
    pts = measure.points
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = hi - lo
    ref = float(span.max()) if span.max() > 0 else 1.0
    span = np.maximum(span, 0.05 * ref)  # keep the aspect ratio bounded
    span = span * (1 + 2 * SVG_MARGIN)
    lo = 0.5 * (lo + hi) - 0.5 * span
    height = width * span[1] / span[0]
    scale = width / span[0]
    radii = np.sqrt(AREA_FRACTION * width * height * measure.weights / np.pi)
    lines = [
        '<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
        '<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width:.2f}" height="{height:.2f}" viewBox="0 0 {width:.2f} {height:.2f}">',
        f'<rect x="0" y="0" width="{width:.2f}" height="{height:.2f}" fill="white"/>',
    ]
    for (x, y), r in zip(pts, radii):
        cx = (x - lo[0]) * scale
        cy = height - (y - lo[1]) * scale  # SVG y axis points down
        lines.append(f'<circle cx="{cx:.4f}" cy="{cy:.4f}" r="{r:.4f}" '
                     'fill="#1f77b4" fill-opacity="0.7"/>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"

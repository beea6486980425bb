"""SVG and PNG renderings of graphs and metric reports.

Figures are drawn on bare ``Figure`` objects with the Agg canvas, so no
global pyplot state is touched, and saved without timestamp or version
metadata so reruns produce identical bytes.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.collections import LineCollection
from matplotlib.figure import Figure
from matplotlib.patches import Rectangle

from .geometry import Rect
from .graph import BoundaryGraph
from .metrics import MetricReport

PNG_METADATA = {"Software": None}


def _fmt(v: float) -> str:
    s = f"{v:.2f}".rstrip("0").rstrip(".")
    return "0" if s == "-0" else s


def graph_svg(graph: BoundaryGraph, bounds: Rect, frames=(), vertex_radius: float = 1.5) -> str:
    """SVG document: per-patch cores as faint rectangles, edges as segments, vertices as circles."""
    x0, y0 = bounds.x0, bounds.y0
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(bounds.width)}" height="{_fmt(bounds.height)}" '
        f'viewBox="{_fmt(x0)} {_fmt(y0)} {_fmt(bounds.width)} {_fmt(bounds.height)}">',
        f'<rect x="{_fmt(x0)}" y="{_fmt(y0)}" width="{_fmt(bounds.width)}" height="{_fmt(bounds.height)}" fill="white"/>',
        '<g id="cores" fill="none" stroke="#4060c0" stroke-opacity="0.25" stroke-width="2">',
    ]
    for f in frames:
        c = f.core
        out.append(f'<rect x="{_fmt(c.x0)}" y="{_fmt(c.y0)}" width="{_fmt(c.width)}" height="{_fmt(c.height)}">'
                   f'<title>{f.name}</title></rect>')
    out.append("</g>")
    out.append('<g id="edges" stroke="#202020" stroke-width="1.2" stroke-linecap="round">')
    for ax, ay, bx, by in graph.segments():
        out.append(f'<line x1="{_fmt(ax)}" y1="{_fmt(ay)}" x2="{_fmt(bx)}" y2="{_fmt(by)}"/>')
    out.append("</g>")
    out.append('<g id="vertices" fill="#d03030">')
    for x, y in graph.positions():
        out.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="{_fmt(vertex_radius)}"/>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def save_graph_svg(graph: BoundaryGraph, path, bounds: Rect, frames=()) -> None:
    Path(path).write_text(graph_svg(graph, bounds, frames), encoding="utf-8")


def _save(fig: Figure, path) -> None:
    FigureCanvasAgg(fig)
    fig.savefig(path, format="png", metadata=PNG_METADATA)


def overlay_png(pred: BoundaryGraph, gt: BoundaryGraph, bounds: Rect, path, frames=(), dpi: int = 100) -> None:
    """Ground truth in grey under the prediction, with vertices marked."""
    inches = 8.0
    fig = Figure(figsize=(inches, inches * bounds.height / max(bounds.width, 1.0)), dpi=dpi)
    ax = fig.add_axes((0, 0, 1, 1))
    for f in frames:
        c = f.core
        ax.add_patch(_rect_patch(c))
    segs = gt.segments().reshape(-1, 2, 2)
    ax.add_collection(LineCollection(segs, colors="#b0b0b0", linewidths=3.0))
    segs = pred.segments().reshape(-1, 2, 2)
    ax.add_collection(LineCollection(segs, colors="#1f4fb4", linewidths=0.8))
    pos = pred.positions()
    if len(pos):
        ax.scatter(pos[:, 0], pos[:, 1], s=2.0, c="#d03030", linewidths=0)
    ax.set_xlim(bounds.x0, bounds.x1)
    ax.set_ylim(bounds.y1, bounds.y0)
    ax.set_aspect("equal")
    ax.axis("off")
    _save(fig, path)


def _rect_patch(r: Rect):
    return Rectangle((r.x0, r.y0), r.width, r.height, fill=False, edgecolor="#4060c0", alpha=0.25, linewidth=1.0)


def report_png(reports: list[MetricReport], path, dpi: int = 100) -> None:
    """Grouped bars of F1 at every tau plus APLS and TLTS, one group per report."""
    if not reports:
        raise ValueError("no reports to plot")
    taus = [p.tau for p in reports[0].pixel]
    names = [f"F1@{t:g}" for t in taus] + ["APLS", "TLTS"]
    fig = Figure(figsize=(7.0, 3.5), dpi=dpi)
    ax = fig.add_subplot(1, 1, 1)
    width = 0.8 / len(reports)
    xs = np.arange(len(names))
    for k, r in enumerate(reports):
        vals = [p.f1 for p in r.pixel] + [r.apls or 0.0, r.tlts or 0.0]
        ax.bar(xs + (k - (len(reports) - 1) / 2) * width, vals, width, label=r.label or f"report {k}")
    ax.set_xticks(xs, names)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("score")
    ax.legend(loc="lower right", fontsize="small")
    fig.tight_layout()
    _save(fig, path)

"""Deterministic SVG rendering of placements: canvas outline, grid lines,
blockages, cluster and macro rectangles, optional congestion heat layer."""

from __future__ import annotations

import numpy as np

from .cost import CongestionGrids
from .grid import GridSpec, Placement
from .netlist import Netlist, NodeKind

_VIEW_W = 800.0


def _fmt(v: float) -> str:
    return f"{v:.4f}"


def render_svg(
    nl: Netlist,
    placement: Placement,
    grid: GridSpec | None = None,
    congestion: CongestionGrids | None = None,
) -> str:
    """Byte-identical output for identical inputs; y axis flipped so the
    canvas origin renders bottom-left."""
    scale = _VIEW_W / nl.canvas_width
    view_h = nl.canvas_height * scale

    def rect(x, y, w, h, style, title=None):
        # placement coordinates are bottom-left origin; SVG is top-left
        sy = view_h - (y + h) * scale
        body = (
            f'<rect x="{_fmt(x * scale)}" y="{_fmt(sy)}" '
            f'width="{_fmt(w * scale)}" height="{_fmt(h * scale)}" {style}'
        )
        if title is None:
            return body + "/>"
        return body + f"><title>{title}</title></rect>"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(_VIEW_W)}" '
        f'height="{_fmt(view_h)}" viewBox="0 0 {_fmt(_VIEW_W)} {_fmt(view_h)}">',
        rect(0, 0, nl.canvas_width, nl.canvas_height,
             'fill="#fafafa" stroke="#000" stroke-width="1"'),
    ]

    if congestion is not None and grid is not None:
        heat = np.maximum(congestion.H, congestion.V)
        peak = float(heat.max()) or 1.0
        for r in range(grid.rows):
            for c in range(grid.cols):
                level = heat[r, c] / peak
                if level <= 0:
                    continue
                parts.append(
                    rect(
                        c * grid.cell_width, r * grid.cell_height,
                        grid.cell_width, grid.cell_height,
                        f'fill="#d62728" fill-opacity="{_fmt(0.5 * level)}"',
                    )
                )

    if grid is not None:
        for c in range(1, grid.cols):
            x = _fmt(c * grid.cell_width * scale)
            parts.append(
                f'<line x1="{x}" y1="0" x2="{x}" y2="{_fmt(view_h)}" '
                'stroke="#ddd" stroke-width="0.5"/>'
            )
        for r in range(1, grid.rows):
            y = _fmt(view_h - r * grid.cell_height * scale)
            parts.append(
                f'<line x1="0" y1="{y}" x2="{_fmt(_VIEW_W)}" y2="{y}" '
                'stroke="#ddd" stroke-width="0.5"/>'
            )

    for b in nl.blockages:
        parts.append(rect(b.x, b.y, b.w, b.h, 'fill="#888" fill-opacity="0.8"',
                          title="blockage"))

    for node in sorted(nl.clusters, key=lambda n: n.id):
        pos = placement.positions.get(node.id)
        if pos is None:
            continue
        parts.append(
            rect(pos[0] - node.width / 2, pos[1] - node.height / 2,
                 node.width, node.height,
                 'fill="#2ca02c" fill-opacity="0.45" stroke="#1a701a" stroke-width="0.5"',
                 title=f"cluster {node.id}")
        )

    for node in sorted(nl.macros, key=lambda n: n.id):
        pos = placement.positions.get(node.id)
        if pos is None:
            continue
        parts.append(
            rect(pos[0] - node.width / 2, pos[1] - node.height / 2,
                 node.width, node.height,
                 'fill="#ffffff" stroke="#000" stroke-width="1"',
                 title=f"macro {node.id}")
        )

    for node in sorted(nl.ports, key=lambda n: n.id):
        sy = view_h - node.y * scale
        parts.append(
            f'<circle cx="{_fmt(node.x * scale)}" cy="{_fmt(sy)}" r="3" '
            f'fill="#1f77b4"><title>port {node.id}</title></circle>'
        )

    parts.append("</svg>")
    return "\n".join(parts)


def render_curve_svg(points: list[tuple[float, float]], title: str = "") -> str:
    """Minimal polyline plot for metric streams (batch index vs value)."""
    if not points:
        return '<svg xmlns="http://www.w3.org/2000/svg" width="640" height="360"/>'
    w, h, pad = 640.0, 360.0, 40.0
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    x0, x1 = min(xs), max(xs) or 1.0
    y0, y1 = min(ys), max(ys)
    if y1 - y0 < 1e-12:
        y0, y1 = y0 - 1.0, y1 + 1.0
    sx = lambda x: pad + (x - x0) / max(x1 - x0, 1e-12) * (w - 2 * pad)
    sy = lambda y: h - pad - (y - y0) / (y1 - y0) * (h - 2 * pad)
    pts = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in points)
    return "\n".join(
        [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h:.0f}">',
            f'<rect x="0" y="0" width="{w:.0f}" height="{h:.0f}" fill="#fff" stroke="#000"/>',
            f'<text x="{pad}" y="{pad / 2 + 5}" font-size="14">{title}</text>',
            f'<polyline points="{pts}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>',
            "</svg>",
        ]
    )

"""Deterministic SVG drawings of sewing patterns."""
from __future__ import annotations

import colorsys
import math
from pathlib import Path
from xml.sax.saxutils import escape

from .pattern import Pattern

MARGIN = 10.0
FREE_STROKE = "#222222"


def stitch_color(k: int) -> str:
    hue = (k * 0.618033988749895) % 1.0
    r, g, b = colorsys.hsv_to_rgb(hue, 0.75, 0.85)
    return "#{:02x}{:02x}{:02x}".format(round(r * 255), round(g * 255), round(b * 255))


def _f(x: float) -> str:
    s = f"{x:.3f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def pattern_svg(pattern: Pattern) -> str:
    colors = {}
    for k, s in enumerate(sorted(pattern.stitches, key=lambda s: s.key())):
        colors[s.a] = colors[s.b] = stitch_color(k)

    boxes = []
    for panel in pattern.panels:
        xs = [c for e in panel.edges for c in (e.start[0], e.control[0])]
        ys = [c for e in panel.edges for c in (e.start[1], e.control[1])]
        boxes.append((min(xs), min(ys), max(xs), max(ys)))
    n = len(pattern.panels)
    cols = max(1, math.ceil(math.sqrt(n)))
    rows = max(1, math.ceil(n / cols))
    cell_w = max((b[2] - b[0] for b in boxes), default=0.0) + 2 * MARGIN
    cell_h = max((b[3] - b[1] for b in boxes), default=0.0) + 3 * MARGIN

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(cols * cell_w)}" '
           f'height="{_f(rows * cell_h)}" viewBox="0 0 {_f(cols * cell_w)} {_f(rows * cell_h)}">']
    if pattern.caption:
        out.append(f"<title>{escape(pattern.caption)}</title>")
    for i, (panel, box) in enumerate(zip(pattern.panels, boxes)):
        ox = (i % cols) * cell_w + MARGIN - box[0]
        # SVG y grows downward; flip panel y so the drawing is upright
        top = (i // cols) * cell_h + 2 * MARGIN
        oy = top + box[3]

        def pt(p):
            return f"{_f(ox + p[0])} {_f(oy - p[1])}"

        out.append(f'<g class="panel" id="panel-{i}">')
        out.append(f'<text x="{_f((i % cols) * cell_w + MARGIN)}" y="{_f(top - MARGIN / 2)}" '
                   f'font-size="6" font-family="sans-serif">panel {i}</text>')
        m = len(panel.edges)
        for j, e in enumerate(panel.edges):
            end = panel.edges[(j + 1) % m].start
            color = colors.get((i, j), FREE_STROKE)
            out.append(f'<path class="edge" id="e-{i}-{j}" d="M {pt(e.start)} Q {pt(e.control)} '
                       f'{pt(end)}" fill="none" stroke="{color}" stroke-width="0.8"/>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_svg(pattern: Pattern, out: str | Path) -> None:
    Path(out).write_text(pattern_svg(pattern), encoding="utf-8")

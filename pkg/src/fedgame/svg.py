"""Self-contained static SVG line charts, no plotting dependency.

Data coordinates map to pixels by the affine transform
    x_px = MARGIN_LEFT + (x - x_min) / (x_max - x_min) * plot_width
    y_px = HEIGHT - MARGIN_BOTTOM - (y - y_min) / (y_max - y_min) * plot_height
with the data ranges taken directly from the plotted points (degenerate
ranges are widened by 0.5 on each side). Charts with no points still render
axes over the default [0, 1] ranges.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

WIDTH = 900
HEIGHT = 540
MARGIN_LEFT = 70
MARGIN_RIGHT = 170
MARGIN_TOP = 50
MARGIN_BOTTOM = 60
PLOT_W = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
PLOT_H = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM

COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"]


@dataclass
class Series:
    label: str
    points: list  # of (x, y)
    # optional per-point vertical ranges (x, y_low, y_high)
    bands: list = field(default_factory=list)


def _escape(text: str) -> str:
    return (text.replace("&", "&amp;").replace("<", "&lt;")
            .replace(">", "&gt;").replace('"', "&quot;"))


def _ranges(series):
    xs = [p[0] for s in series for p in s.points]
    ys = [p[1] for s in series for p in s.points]
    ys += [v for s in series for b in s.bands for v in (b[1], b[2])]
    x_min, x_max = (min(xs), max(xs)) if xs else (0.0, 1.0)
    y_min, y_max = (min(ys), max(ys)) if ys else (0.0, 1.0)
    if x_max == x_min:
        x_min, x_max = x_min - 0.5, x_max + 0.5
    if y_max == y_min:
        y_min, y_max = y_min - 0.5, y_max + 0.5
    return x_min, x_max, y_min, y_max


def data_to_pixel(x, y, x_min, x_max, y_min, y_max):
    px = MARGIN_LEFT + (x - x_min) / (x_max - x_min) * PLOT_W
    py = HEIGHT - MARGIN_BOTTOM - (y - y_min) / (y_max - y_min) * PLOT_H
    return px, py


def render_line_chart(series, title: str = "", x_label: str = "",
                      y_label: str = "") -> str:
    x_min, x_max, y_min, y_max = _ranges(series)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
           f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
           '<rect width="100%" height="100%" fill="#ffffff"/>',
           f'<text x="{WIDTH / 2:.1f}" y="28" text-anchor="middle" '
           f'font-size="18" font-family="sans-serif">{_escape(title)}</text>']
    bottom = HEIGHT - MARGIN_BOTTOM
    right = WIDTH - MARGIN_RIGHT
    ticks = 5
    for i in range(ticks + 1):
        yv = y_min + (y_max - y_min) * i / ticks
        _, py = data_to_pixel(x_min, yv, x_min, x_max, y_min, y_max)
        out.append(f'<line x1="{MARGIN_LEFT}" y1="{py:.2f}" x2="{right}" '
                   f'y2="{py:.2f}" stroke="#dddddd" stroke-width="1"/>')
        out.append(f'<text x="{MARGIN_LEFT - 8}" y="{py + 4:.2f}" '
                   f'text-anchor="end" font-size="11" '
                   f'font-family="sans-serif">{yv:.4g}</text>')
        xv = x_min + (x_max - x_min) * i / ticks
        px, _ = data_to_pixel(xv, y_min, x_min, x_max, y_min, y_max)
        out.append(f'<line x1="{px:.2f}" y1="{bottom}" x2="{px:.2f}" '
                   f'y2="{bottom + 5}" stroke="#000000" stroke-width="1"/>')
        out.append(f'<text x="{px:.2f}" y="{bottom + 18}" text-anchor="middle" '
                   f'font-size="11" font-family="sans-serif">{xv:.4g}</text>')
    out.append(f'<line x1="{MARGIN_LEFT}" y1="{bottom}" x2="{right}" '
               f'y2="{bottom}" stroke="#000000" stroke-width="1.5"/>')
    out.append(f'<line x1="{MARGIN_LEFT}" y1="{MARGIN_TOP}" x2="{MARGIN_LEFT}" '
               f'y2="{bottom}" stroke="#000000" stroke-width="1.5"/>')
    for idx, s in enumerate(series):
        color = COLORS[idx % len(COLORS)]
        for x, lo, hi in s.bands:
            x0, y0 = data_to_pixel(x, lo, x_min, x_max, y_min, y_max)
            _, y1 = data_to_pixel(x, hi, x_min, x_max, y_min, y_max)
            out.append(f'<line x1="{x0:.2f}" y1="{y0:.2f}" x2="{x0:.2f}" '
                       f'y2="{y1:.2f}" stroke="{color}" stroke-width="1" '
                       f'opacity="0.6"/>')
        if s.points:
            pts = " ".join(
                "{:.2f},{:.2f}".format(*data_to_pixel(x, y, x_min, x_max,
                                                      y_min, y_max))
                for x, y in s.points)
            out.append(f'<polyline fill="none" stroke="{color}" '
                       f'stroke-width="2" points="{pts}"/>')
        ly = MARGIN_TOP + 16 + idx * 20
        out.append(f'<line x1="{right + 12}" y1="{ly}" x2="{right + 34}" '
                   f'y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{right + 40}" y="{ly + 4}" font-size="12" '
                   f'font-family="sans-serif">{_escape(s.label)}</text>')
    out.append(f'<text x="{(MARGIN_LEFT + right) / 2:.1f}" y="{HEIGHT - 16}" '
               f'text-anchor="middle" font-size="13" '
               f'font-family="sans-serif">{_escape(x_label)}</text>')
    mid_y = (MARGIN_TOP + bottom) / 2
    out.append(f'<text x="20" y="{mid_y:.1f}" text-anchor="middle" '
               f'font-size="13" font-family="sans-serif" '
               f'transform="rotate(-90 20 {mid_y:.1f})">{_escape(y_label)}</text>')
    out.append("</svg>")
    return "\n".join(out)


def emit_svg(series, path, title: str = "", x_label: str = "",
             y_label: str = ""):
    Path(path).write_text(render_line_chart(series, title, x_label, y_label),
                          encoding="utf-8")

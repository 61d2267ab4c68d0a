"""Self-contained SVG 1.1 line plots drawn from CSV tables."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

__all__ = ["Series", "read_columns", "line_plot_svg", "plot_csv"]

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf")
WIDTH, HEIGHT = 720, 460
LEFT, RIGHT, TOP, BOTTOM = 78, 190, 40, 60


@dataclass(frozen=True)
class Series:
    label: str
    x: tuple
    y: tuple


def read_columns(path) -> dict[str, list[float]]:
    """Numeric columns of a CSV file; unparsable cells become NaN."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = {h: [] for h in header}
    for row in body:
        for h, cell in zip(header, row):
            try:
                cols[h].append(float(cell))
            except ValueError:
                cols[h].append(math.nan)
    return cols


def _nice_ticks(lo, hi, count=6):
    if not hi > lo:
        hi = lo + 1.0
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step - 1e-9) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 12))
        t += step
    return ticks


def _fmt(v):
    return f"{v:g}"


def line_plot_svg(series, title, xlabel, ylabel, logy=False, markers=False) -> str:
    """Render ``series`` as an SVG document string (no external references)."""
    pts = []
    for s in series:
        for x, y in zip(s.x, s.y):
            if math.isfinite(x) and math.isfinite(y) and (y > 0 or not logy):
                pts.append((x, y))
    if pts:
        xs, ys = zip(*pts)
        x0, x1 = min(xs), max(xs)
        y0, y1 = min(ys), max(ys)
    else:
        x0, x1, y0, y1 = 0.0, 1.0, (1.0 if logy else 0.0), (10.0 if logy else 1.0)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if logy:
        ly0, ly1 = math.floor(math.log10(y0)), math.ceil(math.log10(y1))
        if ly1 == ly0:
            ly1 += 1
        yspan = (float(ly0), float(ly1))
        yticks = [10.0**e for e in range(ly0, ly1 + 1)]
    else:
        pad = 0.05 * (y1 - y0) if y1 > y0 else 0.5
        y0, y1 = y0 - pad, y1 + pad
        yspan = (y0, y1)
        yticks = [t for t in _nice_ticks(y0, y1) if y0 <= t <= y1]
    xticks = [t for t in _nice_ticks(x0, x1) if x0 - 1e-12 <= t <= x1 + 1e-12]
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(v):
        return LEFT + (v - x0) / (x1 - x0) * pw

    def py(v):
        u = math.log10(v) if logy else v
        return TOP + (1.0 - (u - yspan[0]) / (yspan[1] - yspan[0])) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{LEFT + pw / 2:.1f}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
    ]
    for t in xticks:
        x = px(t)
        out.append(f'<line x1="{x:.2f}" y1="{TOP}" x2="{x:.2f}" y2="{TOP + ph}" stroke="#e0e0e0"/>')
        out.append(f'<text x="{x:.2f}" y="{TOP + ph + 16}" text-anchor="middle">{_fmt(t)}</text>')
    for t in yticks:
        y = py(t)
        label = f"1e{round(math.log10(t))}" if logy else _fmt(t)
        out.append(f'<line x1="{LEFT}" y1="{y:.2f}" x2="{LEFT + pw}" y2="{y:.2f}" stroke="#e0e0e0"/>')
        out.append(f'<text x="{LEFT - 6}" y="{y + 4:.2f}" text-anchor="end">{label}</text>')
    out.append(f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    out.append(f'<text x="{LEFT + pw / 2:.1f}" y="{HEIGHT - 18}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text transform="translate(18,{TOP + ph / 2:.1f}) rotate(-90)" '
               f'text-anchor="middle">{escape(ylabel)}</text>')
    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        segs, cur = [], []
        for x, y in zip(s.x, s.y):
            if math.isfinite(x) and math.isfinite(y) and (y > 0 or not logy):
                cur.append(f"{px(x):.2f},{py(y):.2f}")
            elif cur:
                segs.append(cur)
                cur = []
        if cur:
            segs.append(cur)
        for seg in segs:
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.6" points="{" ".join(seg)}"/>')
            if markers:
                for p in seg:
                    cx, cy = p.split(",")
                    out.append(f'<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>')
        ly = TOP + 14 + 18 * i
        lx = LEFT + pw + 12
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 28}" y="{ly}">{escape(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plot_csv(csv_path, svg_path, x_col, y_cols, title, xlabel, ylabel, labels=None,
             logy=False, markers=False) -> None:
    """Plot columns of a CSV file, so the figure carries nothing the table lacks."""
    cols = read_columns(csv_path)
    labels = labels or y_cols
    series = [Series(lab, tuple(cols[x_col]), tuple(cols[c])) for c, lab in zip(y_cols, labels)]
    svg = line_plot_svg(series, title, xlabel, ylabel, logy=logy, markers=markers)
    with open(svg_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(svg)

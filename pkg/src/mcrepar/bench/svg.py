"""Tiny static SVG charts.  For humans only; tests read the CSVs."""

from __future__ import annotations

import math
from html import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
W, H, PAD = 640, 400, 60


def _scale(lo, hi, a, b, log):
    if log:
        lo, hi = math.log10(lo), math.log10(hi)
    span = (hi - lo) or 1.0

    def f(v):
        v = math.log10(v) if log else v
        return a + (v - lo) / span * (b - a)

    return f


def _frame(title, xlabel, ylabel):
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{PAD}" y1="{H - PAD}" x2="{W - PAD}" y2="{H - PAD}" stroke="black"/>',
        f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{H - PAD}" stroke="black"/>',
        f'<text x="{W / 2}" y="{H - 15}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="15" y="{H / 2}" text-anchor="middle" transform="rotate(-90 15 {H / 2})">{escape(ylabel)}</text>',
    ]


def line_chart(series: dict, title="", xlabel="", ylabel="", logx=False, logy=False) -> str:
    """``series`` maps a label to a list of (x, y) points."""
    pts = [(x, y) for s in series.values() for x, y in s if not (logy and y <= 0) and not (logx and x <= 0)]
    out = _frame(title, xlabel, ylabel)
    if pts:
        xs, ys = [p[0] for p in pts], [p[1] for p in pts]
        fx = _scale(min(xs), max(xs), PAD, W - PAD, logx)
        fy = _scale(min(ys), max(ys), H - PAD, PAD, logy)
        for i, (label, s) in enumerate(series.items()):
            color = PALETTE[i % len(PALETTE)]
            good = [(fx(x), fy(y)) for x, y in s if not (logy and y <= 0) and not (logx and x <= 0)]
            if good:
                path = " ".join(f"{x:.1f},{y:.1f}" for x, y in good)
                out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="2"/>')
                for x, y in good:
                    out.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="3" fill="{color}"/>')
            out.append(f'<text x="{W - PAD + 5}" y="{PAD + 15 * i}" fill="{color}">{escape(str(label))}</text>')
        out.append(f'<text x="{PAD}" y="{H - PAD + 15}">{min(xs):g}</text>')
        out.append(f'<text x="{W - PAD}" y="{H - PAD + 15}" text-anchor="end">{max(xs):g}</text>')
        out.append(f'<text x="{PAD - 5}" y="{H - PAD}" text-anchor="end">{min(ys):.3g}</text>')
        out.append(f'<text x="{PAD - 5}" y="{PAD + 5}" text-anchor="end">{max(ys):.3g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def bar_chart(groups: dict, title="", xlabel="", ylabel="") -> str:
    """``groups`` maps a series label to {category: value}; bars are grouped by category."""
    cats = []
    for g in groups.values():
        for c in g:
            if c not in cats:
                cats.append(c)
    vmax = max([v for g in groups.values() for v in g.values()] + [1e-12])
    out = _frame(title, xlabel, ylabel)
    n = max(len(groups), 1)
    slot = (W - 2 * PAD) / max(len(cats), 1)
    bw = slot * 0.8 / n
    for i, (label, g) in enumerate(groups.items()):
        color = PALETTE[i % len(PALETTE)]
        for j, c in enumerate(cats):
            if c not in g:
                continue
            h = (H - 2 * PAD) * g[c] / vmax
            x = PAD + j * slot + slot * 0.1 + i * bw
            out.append(f'<rect x="{x:.1f}" y="{H - PAD - h:.1f}" width="{bw:.1f}" height="{h:.1f}" fill="{color}"/>')
        out.append(f'<text x="{W - PAD + 5}" y="{PAD + 15 * i}" fill="{color}">{escape(str(label))}</text>')
    for j, c in enumerate(cats):
        out.append(f'<text x="{PAD + (j + 0.5) * slot:.1f}" y="{H - PAD + 15}" text-anchor="middle">{escape(str(c))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path, text: str):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)

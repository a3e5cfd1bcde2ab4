"""Plain-text tables, CSV dumps and minimal SVG plots."""

from __future__ import annotations

import csv
import os
from xml.sax.saxutils import escape

import numpy as np

REPORT_COLUMNS = ("level", "n", "accuracy", "lcc", "srcc", "mse")


def _fmt(v):
    if v is None:
        return "-"
    if isinstance(v, (float, np.floating)):
        return f"{v:.4f}"
    return str(v)


def format_table(rows: list[dict], columns) -> str:
    """Aligned text table."""
    cells = [[str(c) for c in columns]] + [[_fmt(r.get(c)) for c in columns] for r in rows]
    widths = [max(len(row[k]) for row in cells) for k in range(len(columns))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def format_reports(reports) -> str:
    return format_table([r.as_dict() for r in reports], REPORT_COLUMNS)


def write_csv(path: str | os.PathLike, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def write_reports_csv(path, reports) -> None:
    rows = []
    for r in reports:
        d = r.as_dict()
        rows.append(["" if d[c] is None else d[c] for c in REPORT_COLUMNS])
    write_csv(path, REPORT_COLUMNS, rows)


def _axis_range(values, lo=None, hi=None):
    vals = np.asarray(values, dtype=np.float64)
    vmin = float(vals.min()) if lo is None else lo
    vmax = float(vals.max()) if hi is None else hi
    if vmax <= vmin:
        vmin, vmax = vmin - 0.5, vmax + 0.5
    return vmin, vmax


def scatter_svg(x, y, title="", xlabel="human", ylabel="predicted", limits=None,
                size=360) -> str:
    """Scatter plot with a unit-slope reference line."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    lo, hi = limits if limits is not None else _axis_range(np.concatenate([x, y]))
    pad = 40

    def px(v):
        return pad + (v - lo) / (hi - lo) * (size - 2 * pad)

    def py(v):
        return size - pad - (v - lo) / (hi - lo) * (size - 2 * pad)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
             f'viewBox="0 0 {size} {size}">',
             f'<rect width="{size}" height="{size}" fill="white"/>',
             f'<line x1="{pad}" y1="{size - pad}" x2="{size - pad}" y2="{size - pad}" stroke="black"/>',
             f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{size - pad}" stroke="black"/>',
             f'<line x1="{px(lo):.1f}" y1="{py(lo):.1f}" x2="{px(hi):.1f}" y2="{py(hi):.1f}" '
             f'stroke="gray" stroke-dasharray="4,3"/>']
    for v in np.linspace(lo, hi, 5):
        parts.append(f'<text x="{px(v):.1f}" y="{size - pad + 14}" font-size="10" '
                     f'text-anchor="middle">{v:.2g}</text>')
        parts.append(f'<text x="{pad - 4}" y="{py(v) + 3:.1f}" font-size="10" '
                     f'text-anchor="end">{v:.2g}</text>')
    for a, b in zip(x, y):
        parts.append(f'<circle cx="{px(a):.1f}" cy="{py(b):.1f}" r="2.5" fill="steelblue" '
                     f'fill-opacity="0.7"/>')
    parts.append(f'<text x="{size / 2}" y="{size - 6}" font-size="11" '
                 f'text-anchor="middle">{escape(xlabel)}</text>')
    parts.append(f'<text x="12" y="{size / 2}" font-size="11" text-anchor="middle" '
                 f'transform="rotate(-90 12 {size / 2})">{escape(ylabel)}</text>')
    parts.append(f'<text x="{size / 2}" y="16" font-size="12" '
                 f'text-anchor="middle">{escape(title)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def histogram_svg(counts, edges, title="", xlabel="", width=400, height=260) -> str:
    counts = np.asarray(counts)
    edges = np.asarray(edges, dtype=np.float64)
    pad = 36
    top = max(int(counts.max()), 1)
    bar_w = (width - 2 * pad) / len(counts)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" '
             f'stroke="black"/>']
    for k, c in enumerate(counts):
        h = c / top * (height - 2 * pad)
        parts.append(f'<rect x="{pad + k * bar_w:.1f}" y="{height - pad - h:.1f}" '
                     f'width="{bar_w - 1:.1f}" height="{h:.1f}" fill="steelblue"/>')
    for k in range(0, len(edges), max(1, len(edges) // 8)):
        parts.append(f'<text x="{pad + k * bar_w:.1f}" y="{height - pad + 14}" font-size="10" '
                     f'text-anchor="middle">{edges[k]:g}</text>')
    parts.append(f'<text x="{width / 2}" y="16" font-size="12" '
                 f'text-anchor="middle">{escape(title)}</text>')
    parts.append(f'<text x="{width / 2}" y="{height - 6}" font-size="11" '
                 f'text-anchor="middle">{escape(xlabel)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def line_svg(series: list, title="", xlabel="frame", ylabel="score", width=480, height=260) -> str:
    """Overlay of several sequences, e.g. frame-score traces."""
    pad = 40
    all_vals = np.concatenate([np.asarray(s, dtype=np.float64) for s in series])
    lo, hi = _axis_range(all_vals)
    n_max = max(len(s) for s in series)
    colours = ["steelblue", "darkorange", "seagreen", "crimson", "purple", "gray"]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
             f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>']
    for k, s in enumerate(series):
        s = np.asarray(s, dtype=np.float64)
        xs = pad + np.arange(len(s)) / max(n_max - 1, 1) * (width - 2 * pad)
        ys = height - pad - (s - lo) / (hi - lo) * (height - 2 * pad)
        pts = " ".join(f"{a:.1f},{b:.1f}" for a, b in zip(xs, ys))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{colours[k % len(colours)]}"/>')
    parts.append(f'<text x="{pad - 4}" y="{pad + 3}" font-size="10" text-anchor="end">{hi:.2g}</text>')
    parts.append(f'<text x="{pad - 4}" y="{height - pad + 3}" font-size="10" '
                 f'text-anchor="end">{lo:.2g}</text>')
    parts.append(f'<text x="{width / 2}" y="16" font-size="12" '
                 f'text-anchor="middle">{escape(title)}</text>')
    parts.append(f'<text x="{width / 2}" y="{height - 6}" font-size="11" '
                 f'text-anchor="middle">{escape(xlabel)}</text>')
    parts.append(f'<text x="12" y="{height / 2}" font-size="11" text-anchor="middle" '
                 f'transform="rotate(-90 12 {height / 2})">{escape(ylabel)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_text(path, text):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)

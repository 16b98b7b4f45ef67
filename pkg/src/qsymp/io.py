"""CSV and SVG output.

Floats are written with 17 significant digits (enough to round-trip a
double), rows end in a bare newline, so identical runs give identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
from pathlib import Path

import numpy as np


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if v is None:
        return ""
    return str(v)


def write_csv(path, header, rows) -> str:
    """Write rows and return the sha256 of the file bytes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return file_digest(path)


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_svg_lines(path, series, title="", xlabel="", ylabel="", width=640, height=400, markers=()):
    """Minimal line plot: ``series`` is a list of (x, y, label); ``markers`` a list of (x, y, colour)."""
    pad = 50
    xs = np.concatenate([np.asarray(s[0], float) for s in series] + [np.array([m[0] for m in markers], float)])
    ys = np.concatenate([np.asarray(s[1], float) for s in series] + [np.array([m[1] for m in markers], float)])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    x1 = x1 if x1 > x0 else x0 + 1
    y1 = y1 if y1 > y0 else y0 + 1
    sx = lambda x: pad + (x - x0) / (x1 - x0) * (width - 2 * pad)
    sy = lambda y: height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)
    colours = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<text x="{width / 2}" y="{height - 10}" text-anchor="middle" font-size="12">{xlabel}</text>',
        f'<text x="12" y="{height / 2}" font-size="12" transform="rotate(-90 12 {height / 2})">{ylabel}</text>',
        f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" fill="none" stroke="black"/>',
        f'<text x="{pad}" y="{height - pad + 15}" font-size="10">{x0:.4g}</text>',
        f'<text x="{width - pad}" y="{height - pad + 15}" font-size="10" text-anchor="end">{x1:.4g}</text>',
        f'<text x="{pad - 4}" y="{height - pad}" font-size="10" text-anchor="end">{y0:.4g}</text>',
        f'<text x="{pad - 4}" y="{pad + 8}" font-size="10" text-anchor="end">{y1:.4g}</text>',
    ]
    for i, (x, y, label) in enumerate(series):
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, y))
        col = colours[i % len(colours)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{col}" stroke-width="1.5"/>')
        parts.append(f'<text x="{width - pad - 4}" y="{pad + 14 + 14 * i}" font-size="11" '
                     f'text-anchor="end" fill="{col}">{label}</text>')
    for x, y, col in markers:
        parts.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" fill="{col}"/>')
    parts.append("</svg>\n")
    Path(path).write_text("\n".join(parts))

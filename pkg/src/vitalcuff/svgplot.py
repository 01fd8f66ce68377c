"""Tiny dependency-free SVG renderer for line/scatter diagnostics.

Good enough to eyeball the pipeline stages; anything fancier should be
re-rendered from the CSV data these plots accompany.
"""

from __future__ import annotations

import math

import numpy as np

_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 60, 15, 30, 45


def _ticks(lo: float, hi: float, n: int = 5):
    if not math.isfinite(lo) or not math.isfinite(hi) or lo == hi:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min(s * mag for s in (1, 2, 5, 10) if s * mag >= raw)
    first = math.ceil(lo / step) * step
    out = []
    v = first
    while v <= hi + 1e-12 * abs(hi):
        out.append(round(v, 12))
        v += step
    return out


def plot_svg(
    lines=(),
    points=(),
    hlines=(),
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    width: int = 720,
    height: int = 360,
) -> str:
    """Render polyline series, scatter series and horizontal rules to SVG.

    ``lines`` and ``points`` are sequences of (xs, ys, color); ``hlines``
    of (y, color, label).
    """
    xs_all, ys_all = [], []
    for xs, ys, _ in list(lines) + list(points):
        xs_all.append(np.asarray(xs, dtype=float))
        ys_all.append(np.asarray(ys, dtype=float))
    ys_all.extend(np.array([y]) for y, _, _ in hlines)
    if not xs_all:
        xs_all = [np.array([0.0, 1.0])]
    if not ys_all:
        ys_all = [np.array([0.0, 1.0])]
    x_lo = float(min(a.min() for a in xs_all))
    x_hi = float(max(a.max() for a in xs_all))
    y_lo = float(min(a.min() for a in ys_all))
    y_hi = float(max(a.max() for a in ys_all))
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    y_pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - y_pad, y_hi + y_pad

    plot_w = width - _MARGIN_L - _MARGIN_R
    plot_h = height - _MARGIN_T - _MARGIN_B

    def sx(x):
        return _MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y):
        return _MARGIN_T + (y_hi - y) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="11">',
        f'<rect x="{_MARGIN_L}" y="{_MARGIN_T}" width="{plot_w}" height="{plot_h}" '
        'fill="white" stroke="#444"/>',
    ]
    if title:
        parts.append(
            f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">{title}</text>'
        )
    for tx in _ticks(x_lo, x_hi):
        parts.append(
            f'<line x1="{sx(tx):.1f}" y1="{_MARGIN_T + plot_h}" x2="{sx(tx):.1f}" '
            f'y2="{_MARGIN_T + plot_h + 4}" stroke="#444"/>'
        )
        parts.append(
            f'<text x="{sx(tx):.1f}" y="{_MARGIN_T + plot_h + 16}" '
            f'text-anchor="middle">{tx:g}</text>'
        )
    for ty in _ticks(y_lo, y_hi):
        parts.append(
            f'<line x1="{_MARGIN_L - 4}" y1="{sy(ty):.1f}" x2="{_MARGIN_L}" '
            f'y2="{sy(ty):.1f}" stroke="#444"/>'
        )
        parts.append(
            f'<text x="{_MARGIN_L - 7}" y="{sy(ty) + 3.5:.1f}" text-anchor="end">{ty:g}</text>'
        )
    if xlabel:
        parts.append(
            f'<text x="{_MARGIN_L + plot_w / 2:.1f}" y="{height - 8}" '
            f'text-anchor="middle">{xlabel}</text>'
        )
    if ylabel:
        parts.append(
            f'<text x="14" y="{_MARGIN_T + plot_h / 2:.1f}" text-anchor="middle" '
            f'transform="rotate(-90 14 {_MARGIN_T + plot_h / 2:.1f})">{ylabel}</text>'
        )
    for y, color, label in hlines:
        parts.append(
            f'<line x1="{_MARGIN_L}" y1="{sy(y):.1f}" x2="{_MARGIN_L + plot_w}" '
            f'y2="{sy(y):.1f}" stroke="{color}" stroke-dasharray="6,4"/>'
        )
        if label:
            parts.append(
                f'<text x="{_MARGIN_L + plot_w - 4}" y="{sy(y) - 4:.1f}" '
                f'text-anchor="end" fill="{color}">{label}</text>'
            )
    for xs, ys, color in lines:
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        coords = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}"/>')
    for xs, ys, color in points:
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        for x, y in zip(xs, ys):
            parts.append(f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="2.5" fill="{color}"/>')
    parts.append("</svg>")
    return "\n".join(parts)

"""Minimal self-contained SVG scatter plots (actual vs predicted)."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np


def scatter_svg(actual, predicted, title: str = "", xlabel: str = "actual", ylabel: str = "predicted",
                size: int = 420, max_points: int = 5000) -> str:
    actual = np.asarray(actual, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if len(actual) > max_points:
        idx = np.linspace(0, len(actual) - 1, max_points).astype(int)
        actual, predicted = actual[idx], predicted[idx]
    lo = float(min(actual.min(), predicted.min()))
    hi = float(max(actual.max(), predicted.max()))
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 50

    def px(v):
        return pad + (v - lo) / (hi - lo) * (size - 2 * pad)

    def py(v):
        return size - pad - (v - lo) / (hi - lo) * (size - 2 * pad)

    dots = "".join(
        f'<circle cx="{px(a):.2f}" cy="{py(p):.2f}" r="1.6"/>' for a, p in zip(actual, predicted)
    )
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}" font-family="sans-serif" font-size="12">'
        f'<rect width="{size}" height="{size}" fill="white"/>'
        f'<rect x="{pad}" y="{pad}" width="{size - 2 * pad}" height="{size - 2 * pad}" fill="none" stroke="black"/>'
        f'<line x1="{px(lo):.2f}" y1="{py(lo):.2f}" x2="{px(hi):.2f}" y2="{py(hi):.2f}" stroke="red" stroke-dasharray="4 3"/>'
        f'<g fill="steelblue" fill-opacity="0.5">{dots}</g>'
        f'<text x="{size / 2}" y="{pad / 2}" text-anchor="middle">{escape(title)}</text>'
        f'<text x="{size / 2}" y="{size - 12}" text-anchor="middle">{escape(xlabel)}</text>'
        f'<text x="14" y="{size / 2}" text-anchor="middle" transform="rotate(-90 14 {size / 2})">{escape(ylabel)}</text>'
        f'<text x="{pad}" y="{size - pad + 16}">{lo:.4g}</text>'
        f'<text x="{size - pad}" y="{size - pad + 16}" text-anchor="end">{hi:.4g}</text>'
        "</svg>\n"
    )

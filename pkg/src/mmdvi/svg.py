"""Minimal hand-rolled SVG line charts.

Just enough for diagnostic plots of a sweep (axes, ticks, one polyline per
series, a legend): no plotting dependency, deterministic output string.
"""

from __future__ import annotations

import math

PALETTE = ("#1f6fb2", "#d1495b", "#3a7d44", "#8e6fb8", "#c88a2e", "#4f9da6")

_MARGIN_LEFT = 64.0
_MARGIN_RIGHT = 18.0
_MARGIN_TOP = 36.0
_MARGIN_BOTTOM = 48.0


def _bounds(values) -> tuple[float, float]:
    finite = [v for v in values if math.isfinite(v)]
    if not finite:
        return 0.0, 1.0
    lo, hi = min(finite), max(finite)
    if lo == hi:
        return lo - 1.0, hi + 1.0
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def line_chart(
    series: dict[str, tuple],
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    width: int = 640,
    height: int = 440,
) -> str:
    """Render ``{label: (xs, ys)}`` as an SVG document string.

    Series are drawn in dict order with a fixed palette; non-finite points are
    dropped from their polyline.
    """
    if not series:
        raise ValueError("need at least one series")
    all_x = [float(x) for xs, _ in series.values() for x in xs]
    all_y = [float(y) for _, ys in series.values() for y in ys]
    x_lo, x_hi = _bounds(all_x)
    y_lo, y_hi = _bounds(all_y)
    px_lo, px_hi = _MARGIN_LEFT, width - _MARGIN_RIGHT
    py_lo, py_hi = height - _MARGIN_BOTTOM, _MARGIN_TOP  # y axis points up

    def to_px(x: float) -> float:
        return px_lo + (x - x_lo) / (x_hi - x_lo) * (px_hi - px_lo)

    def to_py(y: float) -> float:
        return py_lo + (y - y_lo) / (y_hi - y_lo) * (py_hi - py_lo)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" '
            f'font-family="sans-serif" font-size="14">{_esc(title)}</text>'
        )
    # axes
    parts.append(
        f'<line x1="{px_lo:.1f}" y1="{py_lo:.1f}" x2="{px_hi:.1f}" y2="{py_lo:.1f}" '
        f'stroke="black" stroke-width="1"/>'
    )
    parts.append(
        f'<line x1="{px_lo:.1f}" y1="{py_lo:.1f}" x2="{px_lo:.1f}" y2="{py_hi:.1f}" '
        f'stroke="black" stroke-width="1"/>'
    )
    # ticks and grid
    for i in range(5):
        fx = x_lo + (x_hi - x_lo) * i / 4
        px = to_px(fx)
        parts.append(
            f'<line x1="{px:.1f}" y1="{py_lo:.1f}" x2="{px:.1f}" y2="{py_lo + 5:.1f}" '
            f'stroke="black" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{px:.1f}" y="{py_lo + 18:.1f}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{fx:.3g}</text>'
        )
        fy = y_lo + (y_hi - y_lo) * i / 4
        py = to_py(fy)
        parts.append(
            f'<line x1="{px_lo - 5:.1f}" y1="{py:.1f}" x2="{px_lo:.1f}" y2="{py:.1f}" '
            f'stroke="black" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{px_lo - 8:.1f}" y="{py + 4:.1f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{fy:.3g}</text>'
        )
    if xlabel:
        parts.append(
            f'<text x="{(px_lo + px_hi) / 2:.1f}" y="{height - 10}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12">{_esc(xlabel)}</text>'
        )
    if ylabel:
        cy = (py_lo + py_hi) / 2
        parts.append(
            f'<text x="16" y="{cy:.1f}" text-anchor="middle" font-family="sans-serif" '
            f'font-size="12" transform="rotate(-90 16 {cy:.1f})">{_esc(ylabel)}</text>'
        )
    # polylines
    for idx, (label, (xs, ys)) in enumerate(series.items()):
        color = PALETTE[idx % len(PALETTE)]
        pts = " ".join(
            f"{to_px(float(x)):.2f},{to_py(float(y)):.2f}"
            for x, y in zip(xs, ys)
            if math.isfinite(float(x)) and math.isfinite(float(y))
        )
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.8"/>'
        )
    # legend, top right inside the plot area
    for idx, label in enumerate(series):
        color = PALETTE[idx % len(PALETTE)]
        ly = _MARGIN_TOP + 14 + 16 * idx
        parts.append(
            f'<line x1="{px_hi - 110:.1f}" y1="{ly:.1f}" x2="{px_hi - 90:.1f}" y2="{ly:.1f}" '
            f'stroke="{color}" stroke-width="1.8"/>'
        )
        parts.append(
            f'<text x="{px_hi - 84:.1f}" y="{ly + 4:.1f}" font-family="sans-serif" '
            f'font-size="11">{_esc(label)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"

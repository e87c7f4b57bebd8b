"""Dependency-free SVG charts: series with quantile bands, histograms.

Output is deterministic (fixed precision, no generated ids) so files can be
compared structurally in tests.
"""

from __future__ import annotations

import numpy as np

__all__ = ["band_chart", "histogram_chart"]

_MARGIN_LEFT = 60.0
_MARGIN_RIGHT = 15.0
_MARGIN_TOP = 30.0
_MARGIN_BOTTOM = 40.0

_LINE_COLORS = ("#1f6fb2", "#b23a1f", "#3a9b35", "#8a4fb2", "#b2861f", "#1fb2a4")


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _fmt_tick(v: float) -> str:
    return f"{v:.4g}"


class _Frame:
    """Affine map from data coordinates to the SVG plot box."""

    def __init__(self, xlim, ylim, width, height):
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        if self.x1 <= self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 <= self.y0:
            self.y1 = self.y0 + 1.0
        self.width = width
        self.height = height
        self.box_w = width - _MARGIN_LEFT - _MARGIN_RIGHT
        self.box_h = height - _MARGIN_TOP - _MARGIN_BOTTOM

    def px(self, x: float) -> float:
        return _MARGIN_LEFT + (x - self.x0) / (self.x1 - self.x0) * self.box_w

    def py(self, y: float) -> float:
        return _MARGIN_TOP + (self.y1 - y) / (self.y1 - self.y0) * self.box_h

    def points(self, xs, ys) -> str:
        return " ".join(f"{_fmt(self.px(x))},{_fmt(self.py(y))}" for x, y in zip(xs, ys))

    def axes(self, title: str) -> list[str]:
        parts = [
            f'<rect x="{_fmt(_MARGIN_LEFT)}" y="{_fmt(_MARGIN_TOP)}" '
            f'width="{_fmt(self.box_w)}" height="{_fmt(self.box_h)}" '
            'fill="none" stroke="#333333" stroke-width="1"/>'
        ]
        if title:
            parts.append(
                f'<text x="{_fmt(self.width / 2)}" y="20" text-anchor="middle" '
                f'font-family="sans-serif" font-size="13">{title}</text>'
            )
        for frac in (0.0, 0.5, 1.0):
            xv = self.x0 + frac * (self.x1 - self.x0)
            yv = self.y0 + frac * (self.y1 - self.y0)
            parts.append(
                f'<text x="{_fmt(self.px(xv))}" y="{_fmt(self.height - 20)}" text-anchor="middle" '
                f'font-family="sans-serif" font-size="11">{_fmt_tick(xv)}</text>'
            )
            parts.append(
                f'<text x="{_fmt(_MARGIN_LEFT - 6)}" y="{_fmt(self.py(yv) + 4)}" text-anchor="end" '
                f'font-family="sans-serif" font-size="11">{_fmt_tick(yv)}</text>'
            )
        return parts


def _document(width: int, height: int, body: list[str]) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">'
    )
    return "\n".join([head, *body, "</svg>"]) + "\n"


def band_chart(t, quantiles: dict[float, "np.ndarray"], series=None,
               *, width: int = 720, height: int = 360, title: str = "") -> str:
    """Quantile curves over time; the outermost tau pair is shaded as a band.

    ``quantiles`` maps tau levels to value sequences aligned with ``t``.
    """
    t = np.asarray(t, dtype=float)
    if t.size == 0 or not quantiles:
        raise ValueError("band chart needs a nonempty time axis and at least one quantile column")
    curves = {float(tau): np.asarray(v, dtype=float) for tau, v in quantiles.items()}
    for tau, v in curves.items():
        if v.shape != t.shape:
            raise ValueError(f"quantile column for tau={tau} must match the time axis length")
    stacked = [v for v in curves.values()]
    if series is not None:
        series = np.asarray(series, dtype=float)
        if series.shape != t.shape:
            raise ValueError("series must match the time axis length")
        stacked.append(series)
    all_y = np.concatenate(stacked)
    frame = _Frame((t.min(), t.max()), (all_y.min(), all_y.max()), width, height)

    body = frame.axes(title)
    taus = sorted(curves)
    if len(taus) >= 2:
        lo, hi = curves[taus[0]], curves[taus[-1]]
        ring = frame.points(t, lo) + " " + frame.points(t[::-1], hi[::-1])
        body.append(f'<polygon points="{ring}" fill="#9ecbe8" fill-opacity="0.45" stroke="none"/>')
    for ci, tau in enumerate(taus):
        color = _LINE_COLORS[ci % len(_LINE_COLORS)]
        body.append(
            f'<polyline points="{frame.points(t, curves[tau])}" fill="none" '
            f'stroke="{color}" stroke-width="1.2"/>'
        )
        body.append(
            f'<text x="{_fmt(width - _MARGIN_RIGHT - 4)}" y="{_fmt(_MARGIN_TOP + 14 + 14 * ci)}" '
            f'text-anchor="end" font-family="sans-serif" font-size="11" fill="{color}">'
            f"q_{_fmt_tick(tau)}</text>"
        )
    if series is not None:
        body.append(
            f'<polyline points="{frame.points(t, series)}" fill="none" '
            'stroke="#222222" stroke-width="0.8"/>'
        )
    return _document(width, height, body)


def histogram_chart(values, *, bins: int = 20, width: int = 720, height: int = 360,
                    title: str = "") -> str:
    """Fixed-bin histogram of a value sample."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("histogram needs a nonempty sample")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    counts, edges = np.histogram(values, bins=bins)
    frame = _Frame((edges[0], edges[-1]), (0.0, max(counts.max(), 1)), width, height)
    body = frame.axes(title)
    for i, c in enumerate(counts):
        if c == 0:
            continue
        x_left = frame.px(edges[i])
        x_right = frame.px(edges[i + 1])
        y_top = frame.py(float(c))
        y_base = frame.py(0.0)
        body.append(
            f'<rect x="{_fmt(x_left)}" y="{_fmt(y_top)}" width="{_fmt(x_right - x_left)}" '
            f'height="{_fmt(y_base - y_top)}" fill="#1f6fb2" fill-opacity="0.8" '
            'stroke="#ffffff" stroke-width="0.5"/>'
        )
    return _document(width, height, body)

"""Hand-emitted SVG training-dynamics charts (no plotting dependency).

Two fixed 900x360 panels side by side: test Top-1 vs epoch and training
loss vs epoch.  Thin grey lines are individual seeds, the blue line is
their mean, the light-blue polygon is the +/-1 sample-std band.  Output is
a deterministic function of the input records.

Palette: band #9ecae1 (45% opacity), mean #1f77b4, seeds #b0b0b0,
axes/text #333333.
"""

from __future__ import annotations

import numpy as np

from .containers import atomic_write_text
from .errors import ParameterError

PANEL_W, PANEL_H = 900, 360
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 62, 18, 34, 46


def x_pixel(epoch: float, n_epochs: int, panel: int) -> float:
    x0 = panel * PANEL_W + MARGIN_L
    width = PANEL_W - MARGIN_L - MARGIN_R
    if n_epochs <= 1:
        return x0 + width / 2.0
    return x0 + (epoch / (n_epochs - 1)) * width


def y_pixel(value: float, vmin: float, vmax: float) -> float:
    height = PANEL_H - MARGIN_T - MARGIN_B
    if vmax == vmin:
        return MARGIN_T + height / 2.0
    return MARGIN_T + (1.0 - (value - vmin) / (vmax - vmin)) * height


def _fmt(x: float) -> str:
    return f"{x:.3f}"


def _polyline(points, stroke, width, opacity="1"):
    pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in points)
    return (f'<polyline fill="none" stroke="{stroke}" stroke-width="{width}" '
            f'stroke-opacity="{opacity}" points="{pts}"/>')


def _panel(series: np.ndarray, panel: int, title: str) -> list[str]:
    """series: [n_seeds, n_epochs] float."""
    n_seeds, n_epochs = series.shape
    mean = series.mean(axis=0)
    std = series.std(axis=0, ddof=1) if n_seeds > 1 else np.zeros(n_epochs)
    lo, hi = mean - std, mean + std
    vmin = float(min(series.min(), lo.min()))
    vmax = float(max(series.max(), hi.max()))

    x0, x1 = x_pixel(0, n_epochs, panel), x_pixel(n_epochs - 1, n_epochs, panel)
    y0, y1 = y_pixel(vmin, vmin, vmax), y_pixel(vmax, vmin, vmax)
    parts = [
        f'<rect x="{panel * PANEL_W}" y="0" width="{PANEL_W}" height="{PANEL_H}" fill="#ffffff"/>',
        f'<line x1="{_fmt(x0)}" y1="{_fmt(y0)}" x2="{_fmt(x1)}" y2="{_fmt(y0)}" stroke="#333333"/>',
        f'<line x1="{_fmt(x0)}" y1="{_fmt(y0)}" x2="{_fmt(x0)}" y2="{_fmt(y1)}" stroke="#333333"/>',
        f'<text x="{_fmt(panel * PANEL_W + PANEL_W / 2)}" y="22" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14" fill="#333333">{title}</text>',
        f'<text x="{_fmt(x0 - 8)}" y="{_fmt(y0 + 4)}" text-anchor="end" '
        f'font-family="sans-serif" font-size="11" fill="#333333">{_fmt(vmin)}</text>',
        f'<text x="{_fmt(x0 - 8)}" y="{_fmt(y1 + 4)}" text-anchor="end" '
        f'font-family="sans-serif" font-size="11" fill="#333333">{_fmt(vmax)}</text>',
        f'<text x="{_fmt(x0)}" y="{_fmt(PANEL_H - 14)}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="11" fill="#333333">0</text>',
        f'<text x="{_fmt(x1)}" y="{_fmt(PANEL_H - 14)}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="11" fill="#333333">{n_epochs - 1}</text>',
    ]
    xs = [x_pixel(e, n_epochs, panel) for e in range(n_epochs)]
    if n_seeds > 1:
        upper = [(x, y_pixel(h, vmin, vmax)) for x, h in zip(xs, hi)]
        lower = [(x, y_pixel(l, vmin, vmax)) for x, l in zip(reversed(xs), reversed(lo))]
        pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in upper + lower)
        parts.append(f'<polygon fill="#9ecae1" fill-opacity="0.45" stroke="none" '
                     f'class="band" points="{pts}"/>')
    for s in range(n_seeds):
        parts.append(_polyline(
            [(x, y_pixel(val, vmin, vmax)) for x, val in zip(xs, series[s])],
            "#b0b0b0", 1, opacity="0.9"))
    parts.append(_polyline(
        [(x, y_pixel(val, vmin, vmax)) for x, val in zip(xs, mean)], "#1f77b4", 2))
    return parts


def render_curves(records) -> str:
    """SVG text for a list of run records (shared epoch count required)."""
    if not records:
        raise ParameterError("no records to plot")
    counts = {len(r.epochs) for r in records}
    if len(counts) != 1 or 0 in counts:
        raise ParameterError(f"records must share a non-zero epoch count, got {sorted(counts)}")
    for r in records:
        if any(e.top1 is None for e in r.epochs):
            raise ParameterError("records lack test accuracy; cannot plot Top-1")
    top1 = np.array([[e.top1 for e in r.epochs] for r in records], dtype=np.float64)
    loss = np.array([[e.train_loss for e in r.epochs] for r in records], dtype=np.float64)
    body = _panel(top1, 0, "Top-1 test accuracy vs epoch")
    body += _panel(loss, 1, "Training loss vs epoch")
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{2 * PANEL_W}" '
            f'height="{PANEL_H}" viewBox="0 0 {2 * PANEL_W} {PANEL_H}">\n'
            + "\n".join(body) + "\n</svg>\n")


def emit_curves(records, path) -> str:
    svg = render_curves(records)
    atomic_write_text(path, svg)
    return svg

"""Static SVG line charts, written without any plotting dependency so that
identical inputs always produce identical bytes."""

from __future__ import annotations

import numpy as np

# Fixed palette, one entry per loss in a 12-way comparison.
PALETTE = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#ad494a",
]

_W, _H = 880, 520
_LEFT, _RIGHT, _TOP, _BOTTOM = 70, 200, 40, 55


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _tick_label(v: float) -> str:
    return f"{v:.4g}"


def render_curves(series: list[tuple[str, np.ndarray, np.ndarray]], *,
                  title: str = "", x_label: str = "iteration",
                  y_label: str = "value") -> str:
    """One polyline per (label, xs, ys) triple, with axes and a legend."""
    if not series:
        raise ValueError("no series to plot")
    for label, xs, ys in series:
        if len(xs) == 0 or len(xs) != len(ys):
            raise ValueError(f"series {label!r} is empty or ragged")
    all_x = np.concatenate([np.asarray(xs, dtype=np.float64) for _, xs, _ in series])
    all_y = np.concatenate([np.asarray(ys, dtype=np.float64) for _, _, ys in series])
    x_lo, x_hi = float(all_x.min()), float(all_x.max())
    y_lo, y_hi = float(all_y.min()), float(all_y.max())
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    plot_w = _W - _LEFT - _RIGHT
    plot_h = _H - _TOP - _BOTTOM

    def sx(v):
        return _LEFT + (v - x_lo) / (x_hi - x_lo) * plot_w

    def sy(v):
        return _TOP + plot_h - (v - y_lo) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="monospace" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<rect x="{_LEFT}" y="{_TOP}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="#333333"/>',
    ]
    if title:
        parts.append(f'<text x="{_LEFT + plot_w / 2:.0f}" y="24" '
                     f'text-anchor="middle" font-size="14">{title}</text>')
    for i in range(5):
        frac = i / 4.0
        xv = x_lo + frac * (x_hi - x_lo)
        yv = y_lo + frac * (y_hi - y_lo)
        xpix, ypix = sx(xv), sy(yv)
        parts.append(f'<line x1="{_fmt(xpix)}" y1="{_TOP + plot_h}" '
                     f'x2="{_fmt(xpix)}" y2="{_TOP + plot_h + 5}" stroke="#333333"/>')
        parts.append(f'<text x="{_fmt(xpix)}" y="{_TOP + plot_h + 20}" '
                     f'text-anchor="middle">{_tick_label(xv)}</text>')
        parts.append(f'<line x1="{_LEFT - 5}" y1="{_fmt(ypix)}" '
                     f'x2="{_LEFT}" y2="{_fmt(ypix)}" stroke="#333333"/>')
        parts.append(f'<text x="{_LEFT - 8}" y="{_fmt(ypix + 4)}" '
                     f'text-anchor="end">{_tick_label(yv)}</text>')
    parts.append(f'<text x="{_LEFT + plot_w / 2:.0f}" y="{_H - 12}" '
                 f'text-anchor="middle">{x_label}</text>')
    parts.append(f'<text x="18" y="{_TOP + plot_h / 2:.0f}" text-anchor="middle" '
                 f'transform="rotate(-90 18 {_TOP + plot_h / 2:.0f})">{y_label}</text>')
    for i, (label, xs, ys) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{_fmt(sx(float(x)))},{_fmt(sy(float(y)))}"
                       for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     f'stroke-width="1.5"/>')
        ly = _TOP + 10 + 18 * i
        lx = _W - _RIGHT + 14
        parts.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 22}" y2="{ly}" '
                     f'stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{lx + 28}" y="{ly + 4}">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_svg(path, svg_text: str) -> None:
    with open(path, "w", newline="\n") as f:
        f.write(svg_text)

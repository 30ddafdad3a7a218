"""Minimal deterministic SVG line plots and heatmaps."""

from __future__ import annotations

import numpy as np

W, H, PAD = 640, 420, 60
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b")


def _fmt(v):
    return f"{v:.2f}"


def _frame(xlim, ylim, xlabel, ylabel, title):
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}">',
           f'<rect x="{PAD}" y="{PAD // 2}" width="{W - 1.5 * PAD:.0f}" height="{H - 1.5 * PAD:.0f}" '
           'fill="none" stroke="black"/>',
           f'<text x="{W / 2:.0f}" y="{H - 10}" text-anchor="middle" font-size="13">{xlabel}</text>',
           f'<text x="15" y="{H / 2:.0f}" text-anchor="middle" font-size="13" '
           f'transform="rotate(-90 15 {H / 2:.0f})">{ylabel}</text>',
           f'<text x="{W / 2:.0f}" y="18" text-anchor="middle" font-size="14">{title}</text>']
    for k in range(5):
        fx = xlim[0] + (xlim[1] - xlim[0]) * k / 4
        fy = ylim[0] + (ylim[1] - ylim[0]) * k / 4
        px, py = _map(fx, fy, xlim, ylim)
        out.append(f'<text x="{_fmt(px)}" y="{H - PAD + 18}" text-anchor="middle" '
                   f'font-size="11">{fx:.4g}</text>')
        out.append(f'<text x="{PAD - 5}" y="{_fmt(py + 4)}" text-anchor="end" '
                   f'font-size="11">{fy:.4g}</text>')
    return out


def _map(x, y, xlim, ylim):
    sx = (W - 1.5 * PAD) / ((xlim[1] - xlim[0]) or 1.0)
    sy = (H - 1.5 * PAD) / ((ylim[1] - ylim[0]) or 1.0)
    return PAD + (x - xlim[0]) * sx, H - PAD - (y - ylim[0]) * sy


def _limits(values):
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return (0.0, 1.0)
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi


def line_plot(path, series: dict, xlabel="", ylabel="", title=""):
    """``series`` maps a legend name to (x, y) arrays."""
    xs = np.concatenate([np.asarray(x, float) for x, _ in series.values()])
    ys = np.concatenate([np.asarray(y, float) for _, y in series.values()])
    xlim, ylim = _limits(xs), _limits(ys)
    out = _frame(xlim, ylim, xlabel, ylabel, title)
    for k, (name, (x, y)) in enumerate(series.items()):
        color = COLORS[k % len(COLORS)]
        pts = [_map(a, b, xlim, ylim) for a, b in zip(x, y) if np.isfinite(b)]
        coords = " ".join(f"{_fmt(px)},{_fmt(py)}" for px, py in pts)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        out.append(f'<text x="{W - PAD - 5}" y="{PAD + 14 * k}" text-anchor="end" font-size="11" '
                   f'fill="{color}">{name}</text>')
    out.append("</svg>\n")
    with open(path, "w") as fh:
        fh.write("\n".join(out))


def heatmap(path, x, y, Z, xlabel="", ylabel="", title=""):
    """Color map of ``Z[i, j]`` at (x[j], y[i]) on a blue-white-red scale."""
    x, y, Z = np.asarray(x, float), np.asarray(y, float), np.asarray(Z, float)
    xlim, ylim = _limits(x), _limits(y)
    out = _frame(xlim, ylim, xlabel, ylabel, title)
    finite = Z[np.isfinite(Z)]
    scale = float(np.max(np.abs(finite))) if finite.size else 1.0
    scale = scale or 1.0
    dx = (xlim[1] - xlim[0]) / max(len(x) - 1, 1)
    dy = (ylim[1] - ylim[0]) / max(len(y) - 1, 1)
    for i, yv in enumerate(y):
        for j, xv in enumerate(x):
            v = Z[i, j]
            if not np.isfinite(v):
                color = "#808080"
            else:
                t = max(-1.0, min(1.0, v / scale))
                r, g, b = (255, int(255 * (1 - t)), int(255 * (1 - t))) if t >= 0 else \
                    (int(255 * (1 + t)), int(255 * (1 + t)), 255)
                color = f"#{r:02x}{g:02x}{b:02x}"
            x0, y0 = _map(xv - dx / 2, yv + dy / 2, xlim, ylim)
            x1, y1 = _map(xv + dx / 2, yv - dy / 2, xlim, ylim)
            out.append(f'<rect x="{_fmt(x0)}" y="{_fmt(y0)}" width="{_fmt(x1 - x0)}" '
                       f'height="{_fmt(y1 - y0)}" fill="{color}"/>')
    out.append("</svg>\n")
    with open(path, "w") as fh:
        fh.write("\n".join(out))

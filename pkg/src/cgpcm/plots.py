"""Minimal static SVG line plots for the CLI's optional ``--svg`` output."""

from __future__ import annotations

from pathlib import Path

import numpy as np

_W, _H, _PAD = 640, 360, 48
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def _scale(v, lo, hi, a, b):
    span = hi - lo if hi > lo else 1.0
    return a + (v - lo) / span * (b - a)


def line_plot(path, series, title="", band=None, xlabel="", ylabel=""):
    """Write an SVG with one polyline per ``(label, x, y)`` in ``series``.

    ``band`` is an optional ``(x, lower, upper)`` drawn as a shaded polygon.
    """
    xs = [np.asarray(x, dtype=float) for _, x, _ in series]
    ys = [np.asarray(y, dtype=float) for _, _, y in series]
    if band is not None:
        xs.append(np.asarray(band[0], dtype=float))
        ys += [np.asarray(band[1], dtype=float), np.asarray(band[2], dtype=float)]
    allx = np.concatenate([x[np.isfinite(x)] for x in xs])
    ally = np.concatenate([y[np.isfinite(y)] for y in ys])
    x0, x1 = float(allx.min()), float(allx.max())
    y0, y1 = float(ally.min()), float(ally.max())

    def pts(x, y):
        ok = np.isfinite(x) & np.isfinite(y)
        px = _scale(x[ok], x0, x1, _PAD, _W - _PAD / 2)
        py = _scale(y[ok], y0, y1, _H - _PAD, _PAD / 2)
        return " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" font-family="sans-serif" font-size="11">',
           '<rect width="100%" height="100%" fill="white"/>']
    if band is not None:
        bx, lo, hi = (np.asarray(v, dtype=float) for v in band)
        poly = pts(np.concatenate([bx, bx[::-1]]), np.concatenate([hi, lo[::-1]]))
        out.append(f'<polygon points="{poly}" fill="#1f77b4" fill-opacity="0.2" stroke="none"/>')
    for k, (label, x, y) in enumerate(series):
        c = _COLORS[k % len(_COLORS)]
        out.append(f'<polyline points="{pts(np.asarray(x, float), np.asarray(y, float))}" fill="none" stroke="{c}" stroke-width="1.5"/>')
        out.append(f'<text x="{_W - _PAD - 100}" y="{_PAD / 2 + 14 * (k + 1)}" fill="{c}">{label}</text>')
    out.append(f'<line x1="{_PAD}" y1="{_H - _PAD}" x2="{_W - _PAD / 2}" y2="{_H - _PAD}" stroke="black"/>')
    out.append(f'<line x1="{_PAD}" y1="{_PAD / 2}" x2="{_PAD}" y2="{_H - _PAD}" stroke="black"/>')
    out.append(f'<text x="{_PAD}" y="{_H - _PAD + 14}">{x0:.3g}</text>')
    out.append(f'<text x="{_W - _PAD}" y="{_H - _PAD + 14}">{x1:.3g}</text>')
    out.append(f'<text x="4" y="{_H - _PAD}">{y0:.3g}</text>')
    out.append(f'<text x="4" y="{_PAD / 2 + 4}">{y1:.3g}</text>')
    out.append(f'<text x="{_W / 2}" y="{_H - 12}" text-anchor="middle">{xlabel}</text>')
    out.append(f'<text x="{_W / 2}" y="16" text-anchor="middle" font-size="13">{title}</text>')
    if ylabel:
        out.append(f'<text x="12" y="{_H / 2}" transform="rotate(-90 12 {_H / 2})" text-anchor="middle">{ylabel}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")

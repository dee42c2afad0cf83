"""Dependency-free SVG plots with deterministic output."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 480, 320
MARGIN = 48
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
           "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]


def _fmt(v):
    return f"{v:.2f}"


class Canvas:
    """Axes box mapping data coordinates into a fixed pixel frame."""

    def __init__(self, xlim, ylim, title="", xlabel="", ylabel=""):
        self.xlim = _pad(xlim)
        self.ylim = _pad(ylim)
        self.parts = []
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel

    def px(self, x):
        lo, hi = self.xlim
        return MARGIN + (np.asarray(x, dtype=float) - lo) / (hi - lo) * (WIDTH - 2 * MARGIN)

    def py(self, y):
        lo, hi = self.ylim
        return HEIGHT - MARGIN - (np.asarray(y, dtype=float) - lo) / (hi - lo) * (HEIGHT - 2 * MARGIN)

    def polyline(self, xs, ys, color):
        if len(xs) == 0:
            return
        pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(self.px(xs), self.py(ys)))
        self.parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')

    def points(self, xs, ys, color, r=2.0, opacity=0.7):
        for a, b in zip(self.px(xs), self.py(ys)):
            self.parts.append(f'<circle cx="{_fmt(a)}" cy="{_fmt(b)}" r="{r}" fill="{color}" '
                              f'fill-opacity="{opacity}"/>')

    def rect(self, x0, x1, y0, y1, color):
        X0, X1 = self.px([x0, x1])
        Y0, Y1 = self.py([y1, y0])
        self.parts.append(f'<rect x="{_fmt(X0)}" y="{_fmt(Y0)}" width="{_fmt(X1 - X0)}" '
                          f'height="{_fmt(Y1 - Y0)}" fill="{color}"/>')

    def legend(self, entries):
        for i, (label, color) in enumerate(entries):
            y = MARGIN + 14 * i
            self.parts.append(f'<rect x="{WIDTH - MARGIN - 110}" y="{y - 8}" width="10" height="10" '
                              f'fill="{color}"/>')
            self.parts.append(f'<text x="{WIDTH - MARGIN - 96}" y="{y + 1}" font-size="10">'
                              f'{escape(str(label))}</text>')

    def render(self):
        x0, x1 = MARGIN, WIDTH - MARGIN
        y0, y1 = HEIGHT - MARGIN, MARGIN
        axes = [
            f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
            f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
            f'<text x="{x0}" y="{y0 + 14}" font-size="10">{self.xlim[0]:.3g}</text>',
            f'<text x="{x1}" y="{y0 + 14}" font-size="10" text-anchor="end">{self.xlim[1]:.3g}</text>',
            f'<text x="{x0 - 4}" y="{y0}" font-size="10" text-anchor="end">{self.ylim[0]:.3g}</text>',
            f'<text x="{x0 - 4}" y="{y1 + 8}" font-size="10" text-anchor="end">{self.ylim[1]:.3g}</text>',
            f'<text x="{WIDTH / 2}" y="{MARGIN / 2}" font-size="13" text-anchor="middle">{escape(self.title)}</text>',
            f'<text x="{WIDTH / 2}" y="{HEIGHT - 10}" font-size="11" text-anchor="middle">{escape(self.xlabel)}</text>',
            f'<text x="12" y="{HEIGHT / 2}" font-size="11" text-anchor="middle" '
            f'transform="rotate(-90 12 {HEIGHT / 2})">{escape(self.ylabel)}</text>',
        ]
        body = "\n".join(axes + self.parts)
        return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
                f'viewBox="0 0 {WIDTH} {HEIGHT}">\n<rect width="100%" height="100%" fill="white"/>\n'
                f"{body}\n</svg>\n")


def _pad(lim):
    lo, hi = (float(v) for v in lim)
    if not (np.isfinite(lo) and np.isfinite(hi)):
        return 0.0, 1.0
    if hi - lo < 1e-12:
        return lo - 0.5, hi + 0.5
    return lo, hi


def _limits(arrays, default=(0.0, 1.0)):
    vals = [np.asarray(a, dtype=float) for a in arrays if len(a)]
    if not vals:
        return default
    allv = np.concatenate(vals)
    return float(allv.min()), float(allv.max())


def line_plot(series, title="", xlabel="", ylabel=""):
    """``series`` is a list of ``(label, xs, ys)``; empty input gives bare axes."""
    c = Canvas(_limits([s[1] for s in series]), _limits([s[2] for s in series]), title, xlabel, ylabel)
    for i, (label, xs, ys) in enumerate(series):
        c.polyline(xs, ys, PALETTE[i % len(PALETTE)])
    if series:
        c.legend([(s[0], PALETTE[i % len(PALETTE)]) for i, s in enumerate(series)])
    return c.render()


def histogram_plot(edges, counts, title="", xlabel="", color=PALETTE[0]):
    """Bars whose pixel heights are proportional to ``counts``."""
    edges = np.asarray(edges, dtype=float)
    counts = np.asarray(counts, dtype=float)
    ymax = counts.max() if len(counts) else 1.0
    c = Canvas(_limits([edges]), (0.0, max(ymax, 1.0)), title, xlabel, "count")
    for lo, hi, n in zip(edges[:-1], edges[1:], counts):
        c.rect(lo, hi, 0.0, n, color)
    return c.render()


def scatter_plot(groups, title="", xlabel="x1", ylabel="x2"):
    """``groups`` is a list of ``(label, xy, color)``; a color may be a per-point list."""
    c = Canvas(_limits([g[1][:, 0] for g in groups if len(g[1])]),
               _limits([g[1][:, 1] for g in groups if len(g[1])]), title, xlabel, ylabel)
    legend = []
    for label, xy, color in groups:
        if isinstance(color, str):
            c.points(xy[:, 0], xy[:, 1], color)
            legend.append((label, color))
        else:
            for (a, b), col in zip(xy, color):
                c.points([a], [b], col)
    if legend:
        c.legend(legend)
    return c.render()


def value_colors(values):
    """Map values onto a blue-to-red ramp (low to high)."""
    v = np.asarray(values, dtype=float)
    if len(v) == 0:
        return []
    lo, hi = v.min(), v.max()
    t = np.zeros_like(v) if hi - lo < 1e-12 else (v - lo) / (hi - lo)
    return [f"#{int(255 * a):02x}30{int(255 * (1 - a)):02x}" for a in t]

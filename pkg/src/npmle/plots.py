"""Minimal deterministic SVG 1.1 charts: polylines, error bars, sized markers.

Coordinates are printed with fixed precision so identical inputs give
identical bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"]
W, H = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 20, 40, 55


@dataclass
class Series:
    label: str
    x: np.ndarray
    y: np.ndarray
    yerr: np.ndarray | None = None
    sizes: np.ndarray | None = None  # scatter marker radii; None means polyline
    color: str | None = None


@dataclass
class Figure:
    title: str
    xlabel: str = ""
    ylabel: str = ""
    logx: bool = False
    logy: bool = False
    series: list = field(default_factory=list)
    hlines: list = field(default_factory=list)

    def add(self, label, x, y, yerr=None, sizes=None, color=None):
        self.series.append(Series(label, np.asarray(x, float), np.asarray(y, float),
                                  None if yerr is None else np.asarray(yerr, float),
                                  None if sizes is None else np.asarray(sizes, float), color))
        return self

    def _tx(self, v):
        return np.log10(v) if self.logx else v

    def _ty(self, v):
        return np.log10(v) if self.logy else v

    def _ranges(self):
        xs, ys = [], []
        for s in self.series:
            ok = np.isfinite(s.x) & np.isfinite(s.y)
            if self.logx:
                ok &= s.x > 0
            if self.logy:
                ok &= s.y > 0
            xs.append(self._tx(s.x[ok]))
            lo, hi = s.y[ok], s.y[ok]
            if s.yerr is not None:
                lo, hi = lo - s.yerr[ok], hi + s.yerr[ok]
                if self.logy:
                    lo = np.where(lo > 0, lo, s.y[ok])
            ys += [self._ty(lo), self._ty(hi)]
        for h in self.hlines:
            ys.append(np.array([self._ty(h)]))
        x = np.concatenate(xs) if xs else np.array([0.0, 1.0])
        y = np.concatenate(ys) if ys else np.array([0.0, 1.0])
        x0, x1 = (float(x.min()), float(x.max())) if x.size else (0.0, 1.0)
        y0, y1 = (float(y.min()), float(y.max())) if y.size else (0.0, 1.0)
        if x1 == x0:
            x0, x1 = x0 - 0.5, x1 + 0.5
        if y1 == y0:
            y0, y1 = y0 - 0.5, y1 + 0.5
        pad = 0.05 * (y1 - y0)
        return x0, x1, y0 - pad, y1 + pad

    def render(self) -> str:
        x0, x1, y0, y1 = self._ranges()
        pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM

        def px(v):
            return LEFT + (self._tx(v) - x0) / (x1 - x0) * pw

        def py(v):
            return TOP + ph - (self._ty(v) - y0) / (y1 - y0) * ph

        out = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" '
            f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">',
            f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
            f'<text x="{W / 2:.1f}" y="22" text-anchor="middle" font-size="14">'
            f"{escape(self.title)}</text>",
            f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
        ]
        for frac in np.linspace(0, 1, 6):
            xv, yv = x0 + frac * (x1 - x0), y0 + frac * (y1 - y0)
            gx, gy = LEFT + frac * pw, TOP + ph - frac * ph
            xl = f"{10 ** xv:.3g}" if self.logx else f"{xv:.3g}"
            yl = f"{10 ** yv:.3g}" if self.logy else f"{yv:.3g}"
            out.append(f'<line x1="{gx:.2f}" y1="{TOP + ph}" x2="{gx:.2f}" y2="{TOP + ph + 5}" '
                       f'stroke="black"/>')
            out.append(f'<text x="{gx:.2f}" y="{TOP + ph + 18}" text-anchor="middle">{xl}</text>')
            out.append(f'<line x1="{LEFT - 5}" y1="{gy:.2f}" x2="{LEFT}" y2="{gy:.2f}" '
                       f'stroke="black"/>')
            out.append(f'<text x="{LEFT - 8}" y="{gy + 4:.2f}" text-anchor="end">{yl}</text>')
        out.append(f'<text x="{LEFT + pw / 2:.1f}" y="{H - 12}" text-anchor="middle">'
                   f"{escape(self.xlabel)}</text>")
        out.append(f'<text x="16" y="{TOP + ph / 2:.1f}" text-anchor="middle" '
                   f'transform="rotate(-90 16 {TOP + ph / 2:.1f})">{escape(self.ylabel)}</text>')
        out.append(f'<clipPath id="plot"><rect x="{LEFT}" y="{TOP}" width="{pw}" '
                   f'height="{ph}"/></clipPath>')
        out.append('<g clip-path="url(#plot)">')
        for h in self.hlines:
            out.append(f'<line x1="{LEFT}" y1="{py(h):.2f}" x2="{LEFT + pw}" y2="{py(h):.2f}" '
                       f'stroke="#2ca02c" stroke-dasharray="4 3"/>')
        for i, s in enumerate(self.series):
            color = s.color or PALETTE[i % len(PALETTE)]
            ok = np.isfinite(s.x) & np.isfinite(s.y)
            if self.logx:
                ok &= s.x > 0
            if self.logy:
                ok &= s.y > 0
            xs, ys = s.x[ok], s.y[ok]
            if s.sizes is not None:
                for xv, yv, r in zip(xs, ys, s.sizes[ok]):
                    out.append(f'<circle cx="{px(xv):.2f}" cy="{py(yv):.2f}" r="{r:.2f}" '
                               f'fill="{color}" fill-opacity="0.6"/>')
                continue
            pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(xs, ys))
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                       f'points="{pts}"/>')
            if s.yerr is not None:
                for xv, yv, e in zip(xs, ys, s.yerr[ok]):
                    lo = yv - e
                    if self.logy and lo <= 0:
                        lo = yv
                    out.append(f'<line x1="{px(xv):.2f}" y1="{py(lo):.2f}" x2="{px(xv):.2f}" '
                               f'y2="{py(yv + e):.2f}" stroke="{color}"/>')
        out.append("</g>")
        for i, s in enumerate(self.series):
            color = s.color or PALETTE[i % len(PALETTE)]
            ly = TOP + 14 + 16 * i
            out.append(f'<rect x="{W - RIGHT - 150}" y="{ly - 9}" width="10" height="10" '
                       f'fill="{color}"/>')
            out.append(f'<text x="{W - RIGHT - 135}" y="{ly}">{escape(s.label)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.render(), encoding="utf-8")
        return path


def marker_sizes(weights, max_radius=8.0, min_radius=0.6):
    w = np.asarray(weights, float)
    top = w.max() if w.size and w.max() > 0 else 1.0
    return np.maximum(min_radius, max_radius * np.sqrt(w / top))


def finite_or_nan(v):
    return v if v is not None and math.isfinite(v) else math.nan

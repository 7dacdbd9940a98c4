"""Minimal SVG line charts: polylines, markers, axes and labels."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

COLORS = {"F": "#1b7837", "C": "#b2182b", "U": "#2166ac", "line": "#222222", "fit1": "#999999",
          "fit2": "#e08214"}
# significance markers, most lenient first
MARKERS = ((0.10, "circle", "#3182bd"), (0.05, "square", "#31a354"), (0.01, "diamond", "#756bb1"))


def _n(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".")


class Chart:
    def __init__(self, width=900, height=360, margin=(30, 20, 40, 60), title=""):
        self.w, self.h = width, height
        self.top, self.right, self.bottom, self.left = margin
        self.parts: list[str] = []
        self.title = title
        self.xlim = (0.0, 1.0)
        self.ylim = (0.0, 1.0)

    def limits(self, x, y, pad=0.05):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        y = y[np.isfinite(y)]
        x0, x1 = (float(x.min()), float(x.max())) if x.size else (0.0, 1.0)
        y0, y1 = (float(y.min()), float(y.max())) if y.size else (0.0, 1.0)
        if x1 == x0:
            x1 = x0 + 1
        if y1 == y0:
            y0, y1 = y0 - 0.5, y1 + 0.5
        span = y1 - y0
        self.xlim, self.ylim = (x0, x1), (y0 - pad * span, y1 + pad * span)
        return self

    def px(self, x):
        x0, x1 = self.xlim
        return self.left + (x - x0) / (x1 - x0) * (self.w - self.left - self.right)

    def py(self, y):
        y0, y1 = self.ylim
        return self.h - self.bottom - (y - y0) / (y1 - y0) * (self.h - self.top - self.bottom)

    def line(self, x, y, color="#222", width=1.2, dash=None):
        # NaNs split the line into separate segments
        seg = []
        for a, b in zip(x, y):
            if b is None or not math.isfinite(b):
                self._poly(seg, color, width, dash)
                seg = []
            else:
                seg.append(f"{_n(self.px(a))},{_n(self.py(b))}")
        self._poly(seg, color, width, dash)

    def _poly(self, pts, color, width, dash):
        if len(pts) < 2:
            return
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="{width}"{extra} '
                          f'points="{" ".join(pts)}"/>')

    def marker(self, x, y, shape="circle", color="#000", size=4.0):
        cx, cy = self.px(x), self.py(y)
        if shape == "circle":
            self.parts.append(f'<circle cx="{_n(cx)}" cy="{_n(cy)}" r="{_n(size)}" '
                              f'fill="none" stroke="{color}" class="marker"/>')
        elif shape == "square":
            self.parts.append(f'<rect x="{_n(cx - size)}" y="{_n(cy - size)}" width="{_n(2 * size)}" '
                              f'height="{_n(2 * size)}" fill="none" stroke="{color}" class="marker"/>')
        else:
            pts = f"{_n(cx)},{_n(cy - size)} {_n(cx + size)},{_n(cy)} {_n(cx)},{_n(cy + size)} {_n(cx - size)},{_n(cy)}"
            self.parts.append(f'<polygon points="{pts}" fill="none" stroke="{color}" class="marker"/>')

    def text(self, x, y, s, size=11, anchor="start", color="#222", data_coords=True):
        if data_coords:
            x, y = self.px(x), self.py(y)
        self.parts.append(f'<text x="{_n(x)}" y="{_n(y)}" font-size="{size}" '
                          f'text-anchor="{anchor}" fill="{color}">{escape(str(s))}</text>')

    def axes(self, xticks=(), yticks=(), xlabel="", ylabel=""):
        x0, y0 = self.left, self.h - self.bottom
        x1, y1 = self.w - self.right, self.top
        self.parts.append(f'<rect x="{x0}" y="{y1}" width="{x1 - x0}" height="{y0 - y1}" '
                          f'fill="none" stroke="#888"/>')
        for v, lab in xticks:
            self.text(self.px(v), y0 + 15, lab, 10, "middle", data_coords=False)
        for v in yticks:
            self.text(x0 - 6, self.py(v) + 4, _n(v), 10, "end", data_coords=False)
        if xlabel:
            self.text((x0 + x1) / 2, self.h - 6, xlabel, 11, "middle", data_coords=False)
        if ylabel:
            self.parts.append(f'<text x="14" y="{_n((y0 + y1) / 2)}" font-size="11" '
                              f'text-anchor="middle" transform="rotate(-90 14 {_n((y0 + y1) / 2)})">'
                              f'{escape(ylabel)}</text>')
        if self.title:
            self.text(x0, y1 - 10, self.title, 13, data_coords=False)

    def render(self, comment: str | None = None) -> str:
        head = ['<?xml version="1.0" encoding="UTF-8"?>']
        if comment:
            head.append(f"<!-- {escape(comment)} -->")
        head.append(f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.w}" height="{self.h}" '
                    f'viewBox="0 0 {self.w} {self.h}">')
        head.append('<rect width="100%" height="100%" fill="white"/>')
        return "\n".join(head + self.parts + ["</svg>"]) + "\n"


def month_ticks(dates):
    """First-of-month ticks as (index, 'Mon') pairs."""
    return [(i, d.strftime("%b")) for i, d in enumerate(dates) if d.day == 1]


def nice_ticks(lo, hi, n=5):
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    return [round(start + k * step, 10) for k in range(int((hi - start) / step) + 1)]


def stack(charts, comment=None) -> str:
    """Stack several charts vertically into one SVG."""
    w = max(c.w for c in charts)
    h = sum(c.h for c in charts)
    out = ['<?xml version="1.0" encoding="UTF-8"?>']
    if comment:
        out.append(f"<!-- {escape(comment)} -->")
    out.append(f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">')
    out.append('<rect width="100%" height="100%" fill="white"/>')
    y = 0
    for c in charts:
        out.append(f'<g transform="translate(0,{y})">')
        out.extend(c.parts)
        out.append("</g>")
        y += c.h
    out.append("</svg>")
    return "\n".join(out) + "\n"

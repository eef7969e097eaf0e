"""Minimal dependency-free SVG emitters for region maps and energy curves.

All geometry is hand-written rects/paths; colors are fixed so region maps
read uniformly: existence = green, coercive = orange, non-existence =
blue, critical boundaries = grey, unknown = white.
"""

from __future__ import annotations

import math

from .mesh import FOUR_PI
from .regions import (LABEL_COERCIVE, LABEL_CRITICAL, LABEL_EXISTENCE,
                      LABEL_NONEXISTENCE, RegionScan)

COLORS = {
    LABEL_EXISTENCE: "#2ca02c",       # green
    LABEL_COERCIVE: "#ff7f0e",        # orange
    LABEL_NONEXISTENCE: "#1f77b4",    # blue
    LABEL_CRITICAL: "#9e9e9e",        # grey
}
_BACKGROUND = "#ffffff"


def _fmt(v: float) -> str:
    return f"{v:.2f}"


class _Canvas:
    def __init__(self, width, height, margin):
        self.width, self.height, self.margin = width, height, margin
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
            f'height="{height}" viewBox="0 0 {width} {height}">',
            f'<rect width="{width}" height="{height}" fill="{_BACKGROUND}"/>',
        ]

    def rect(self, x, y, w, h, fill):
        self.parts.append(
            f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(w)}" '
            f'height="{_fmt(h)}" fill="{fill}"/>')

    def path(self, points, stroke, width=1.2, dash=None):
        if len(points) < 2:
            return
        d = "M " + " L ".join(f"{_fmt(x)} {_fmt(y)}" for x, y in points)
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<path d="{d}" fill="none" stroke="{stroke}" '
            f'stroke-width="{width}"{dash_attr}/>')

    def text(self, x, y, s, size=12, anchor="middle"):
        self.parts.append(
            f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-size="{size}" '
            f'font-family="sans-serif" text-anchor="{anchor}">{s}</text>')

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _threshold_lines(alpha_pairs, rho_max):
    """Vertical/horizontal threshold positions rho_i = 4 pi (1 + a_im)."""
    vals = ([], [])
    for a1, a2 in alpha_pairs:
        for i, a in enumerate((a1, a2)):
            v = FOUR_PI * (1.0 + a)
            if 0.0 < v < rho_max[i]:
                vals[i].append(v)
    return vals


def _conic_points(alpha_pairs, rho_max, kind_disk, n=400):
    """Sampled zero sets of the quadratic non-existence boundaries."""
    curves = []
    if kind_disk and len(alpha_pairs) == 1:
        a1, a2 = alpha_pairs[0]
        # rho1^2 - rho1 rho2 + rho2^2 = 4 pi (1+a1) rho1 + 4 pi (1+a2) rho2,
        # solved for rho2 at each rho1.
        for branch in (-1.0, 1.0):
            pts = []
            for k in range(n + 1):
                r1 = rho_max[0] * k / n
                b = -(r1 + FOUR_PI * (1.0 + a2))
                c = r1 * r1 - FOUR_PI * (1.0 + a1) * r1
                disc = b * b - 4.0 * c
                if disc < 0:
                    if pts:
                        curves.append(pts)
                        pts = []
                    continue
                r2 = (-b + branch * math.sqrt(disc)) / 2.0
                if 0.0 <= r2 <= rho_max[1]:
                    pts.append((r1, r2))
                elif pts:
                    curves.append(pts)
                    pts = []
            if pts:
                curves.append(pts)
    elif not kind_disk and len(alpha_pairs) == 2:
        (a11, a21), (a12, a22) = alpha_pairs
        quads = [
            (1.0, -1.0, 1.0, -FOUR_PI * (1 + a11), -FOUR_PI * (1 + a21)),
            (1.0, -1.0, 1.0, -FOUR_PI * (1 + a12), -FOUR_PI * (1 + a22)),
            (1.0, 0.0, -1.0, -FOUR_PI * (1 + a11), FOUR_PI * (1 + a22)),
            (1.0, 0.0, -1.0, -FOUR_PI * (1 + a12), FOUR_PI * (1 + a21)),
        ]
        for c20, c11, c02, c10, c01 in quads:
            pts = []
            for k in range(n + 1):
                r1 = rho_max[0] * k / n
                # c02 r2^2 + (c11 r1 + c01) r2 + (c20 r1^2 + c10 r1) = 0
                A, B, C = c02, c11 * r1 + c01, c20 * r1 * r1 + c10 * r1
                roots = []
                if abs(A) > 1e-300:
                    disc = B * B - 4 * A * C
                    if disc >= 0:
                        roots = [(-B + s * math.sqrt(disc)) / (2 * A)
                                 for s in (-1.0, 1.0)]
                elif abs(B) > 1e-300:
                    roots = [-C / B]
                hit = [r for r in roots if 0.0 <= r <= rho_max[1]]
                if hit:
                    pts.append((r1, min(hit)))
                elif pts:
                    curves.append(pts)
                    pts = []
            if pts:
                curves.append(pts)
    return curves


def region_svg(scan: RegionScan, width: int = 640) -> str:
    """Colored raster of a region scan with boundary curves overdrawn."""
    n1, n2 = scan.labels.shape
    rho_max = (float(scan.rho1[-1] + scan.rho1[0]),
               float(scan.rho2[-1] + scan.rho2[0]))
    margin = 50
    plot = width - 2 * margin
    cv = _Canvas(width, width, margin)

    def to_xy(r1, r2):
        return (margin + plot * r1 / rho_max[0],
                margin + plot * (1.0 - r2 / rho_max[1]))

    cw, ch = plot / n1, plot / n2
    for i in range(n1):
        for j in range(n2):
            color = COLORS.get(scan.labels[i, j])
            if color is None:
                continue
            x, y = to_xy(scan.rho1[i] - rho_max[0] / (2 * n1),
                         scan.rho2[j] + rho_max[1] / (2 * n2))
            cv.rect(x, y, cw + 0.5, ch + 0.5, color)

    from .mesh import SurfaceKind
    kind_disk = scan.kind is SurfaceKind.UnitDisk
    v_lines, h_lines = _threshold_lines(scan.alpha_pairs, rho_max)
    for v in v_lines:
        cv.path([to_xy(v, 0.0), to_xy(v, rho_max[1])], "#000000", 0.8, "4 3")
    for v in h_lines:
        cv.path([to_xy(0.0, v), to_xy(rho_max[0], v)], "#000000", 0.8, "4 3")
    for curve in _conic_points(scan.alpha_pairs, rho_max, kind_disk):
        cv.path([to_xy(a, b) for a, b in curve], "#000000", 1.4)

    cv.path([to_xy(0, 0), to_xy(rho_max[0], 0)], "#000000", 1.0)
    cv.path([to_xy(0, 0), to_xy(0, rho_max[1])], "#000000", 1.0)
    for frac in (0.0, 0.5, 1.0):
        cv.text(to_xy(frac * rho_max[0], 0)[0], width - margin + 20,
                f"{frac * rho_max[0] / FOUR_PI:.2g}")
        cv.text(margin - 22, to_xy(0, frac * rho_max[1])[1] + 4,
                f"{frac * rho_max[1] / FOUR_PI:.2g}")
    cv.text(width / 2, width - margin + 38, "rho_1 / 4 pi")
    cv.text(margin - 35, margin - 14, "rho_2 / 4 pi", anchor="start")
    return cv.render()


def curves_svg(x_values, series, x_label="log2 lambda",
               y_label="J", width: int = 640, height: int = 420) -> str:
    """Polyline chart of named series over shared abscissae."""
    if not series:
        raise ValueError("no series to plot")
    margin = 55
    xs = list(x_values)
    all_y = [y for ys in series.values() for y in ys]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(all_y), max(all_y)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pw, ph = width - 2 * margin, height - 2 * margin
    cv = _Canvas(width, height, margin)

    def to_xy(x, y):
        return (margin + pw * (x - x_lo) / (x_hi - x_lo),
                margin + ph * (1.0 - (y - y_lo) / (y_hi - y_lo)))

    palette = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
               "#8c564b", "#e377c2", "#7f7f7f"]
    cv.path([to_xy(x_lo, y_lo), to_xy(x_hi, y_lo)], "#000000", 1.0)
    cv.path([to_xy(x_lo, y_lo), to_xy(x_lo, y_hi)], "#000000", 1.0)
    for k, (name, ys) in enumerate(sorted(series.items())):
        color = palette[k % len(palette)]
        cv.path([to_xy(x, y) for x, y in zip(xs, ys)], color, 1.6)
        cv.text(width - margin + 4, margin + 16 * (k + 1), name, 11, "end")
        cv.path([(width - margin - 60, margin + 16 * (k + 1) - 4),
                 (width - margin - 40, margin + 16 * (k + 1) - 4)], color, 3)
    for v, label in ((x_lo, f"{x_lo:.3g}"), (x_hi, f"{x_hi:.3g}")):
        cv.text(to_xy(v, y_lo)[0], height - margin + 18, label)
    for v in (y_lo, y_hi):
        cv.text(margin - 8, to_xy(x_lo, v)[1] + 4, f"{v:.4g}", anchor="end")
    cv.text(width / 2, height - margin + 36, x_label)
    cv.text(margin, margin - 12, y_label, anchor="start")
    return cv.render()

"""Bundled vector icon glyphs.

Each glyph is a list of polygons in the unit square; every glyph is normalized
so its outline touches all four sides, which keeps rasterized icons tight
against their boxes.
"""
from __future__ import annotations

import math


def _regular(n, phase=-math.pi / 2, r=1.0):
    return [(r * math.cos(phase + 2 * math.pi * k / n), r * math.sin(phase + 2 * math.pi * k / n)) for k in range(n)]


def _star(n, inner):
    pts = []
    for k in range(2 * n):
        r = 1.0 if k % 2 == 0 else inner
        a = -math.pi / 2 + math.pi * k / n
        pts.append((r * math.cos(a), r * math.sin(a)))
    return pts


def _circle(cx, cy, r, n=24):
    return [(cx + r * math.cos(2 * math.pi * k / n), cy + r * math.sin(2 * math.pi * k / n)) for k in range(n)]


def _heart(n=40):
    pts = []
    for k in range(n):
        t = 2 * math.pi * k / n
        pts.append((16 * math.sin(t) ** 3, -(13 * math.cos(t) - 5 * math.cos(2 * t) - 2 * math.cos(3 * t) - math.cos(4 * t))))
    return pts


_RAW = {
    "star": [_star(5, 0.45)],
    "star6": [_star(6, 0.55)],
    "heart": [_heart()],
    "circle": [_circle(0, 0, 1, 32)],
    "ring": [_circle(0, 0, 1, 32)[:17] + _circle(0, 0, 0.55, 32)[16::-1],
             _circle(0, 0, 1, 32)[16:] + [_circle(0, 0, 1, 32)[0]] + [_circle(0, 0, 0.55, 32)[0]] + _circle(0, 0, 0.55, 32)[:15:-1]],
    "triangle": [[(0, 0), (1, 1), (-1, 1)]],
    "square": [[(0, 0), (1, 0), (1, 1), (0, 1)]],
    "diamond": [[(0, -1), (1, 0), (0, 1), (-1, 0)]],
    "pentagon": [_regular(5)],
    "hexagon": [_regular(6, 0)],
    "octagon": [_regular(8, math.pi / 8)],
    "plus": [[(0.35, 0), (0.65, 0), (0.65, 0.35), (1, 0.35), (1, 0.65), (0.65, 0.65), (0.65, 1),
              (0.35, 1), (0.35, 0.65), (0, 0.65), (0, 0.35), (0.35, 0.35)]],
    "cross": [[(0.15, 0), (0.5, 0.35), (0.85, 0), (1, 0.15), (0.65, 0.5), (1, 0.85), (0.85, 1),
               (0.5, 0.65), (0.15, 1), (0, 0.85), (0.35, 0.5), (0, 0.15)]],
    "arrow_up": [[(0.5, 0), (1, 0.5), (0.68, 0.5), (0.68, 1), (0.32, 1), (0.32, 0.5), (0, 0.5)]],
    "arrow_down": [[(0.32, 0), (0.68, 0), (0.68, 0.5), (1, 0.5), (0.5, 1), (0, 0.5), (0.32, 0.5)]],
    "arrow_right": [[(0, 0.32), (0.5, 0.32), (0.5, 0), (1, 0.5), (0.5, 1), (0.5, 0.68), (0, 0.68)]],
    "arrow_left": [[(0.5, 0), (0.5, 0.32), (1, 0.32), (1, 0.68), (0.5, 0.68), (0.5, 1), (0, 0.5)]],
    "house": [[(0.5, 0), (1, 0.45), (0.85, 0.45), (0.85, 1), (0.15, 1), (0.15, 0.45), (0, 0.45)]],
    "flag": [[(0, 0), (0.15, 0), (0.15, 0.05), (1, 0.05), (0.8, 0.3), (1, 0.55), (0.15, 0.55), (0.15, 1), (0, 1)]],
    "bolt": [[(0.55, 0), (0.1, 0.58), (0.45, 0.58), (0.3, 1), (0.9, 0.38), (0.55, 0.38), (0.75, 0)]],
    "drop": [[(0.5, 0)] + [(0.5 + 0.5 * math.cos(a), 0.62 + 0.38 * math.sin(a))
                           for a in [math.pi * (-0.15 + 1.3 * k / 20) for k in range(21)]]],
    "bell": [[(0.5, 0), (0.62, 0.08), (0.8, 0.3), (0.85, 0.65), (1, 0.8), (0, 0.8), (0.15, 0.65), (0.2, 0.3), (0.38, 0.08)],
             [(0.38, 0.85), (0.62, 0.85), (0.5, 1)]],
    "pause": [[(0, 0), (0.35, 0), (0.35, 1), (0, 1)], [(0.65, 0), (1, 0), (1, 1), (0.65, 1)]],
    "check": [[(0, 0.55), (0.15, 0.4), (0.38, 0.63), (0.85, 0), (1, 0.15), (0.38, 1)]],
    "crescent": [_circle(0, 0, 1, 32)[8:25] + [(0.1 + 0.75 * math.cos(a), 0.75 * math.sin(a))
                                              for a in [math.pi * (1.5 - k / 16) for k in range(17)]]],
}


def _normalize(polys):
    xs = [x for p in polys for x, _ in p]
    ys = [y for p in polys for _, y in p]
    x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
    return tuple(
        tuple(((x - x0) / (x1 - x0), (y - y0) / (y1 - y0)) for x, y in p) for p in polys
    )


GLYPHS: dict[str, tuple] = {name: _normalize(polys) for name, polys in _RAW.items()}
GLYPH_NAMES = tuple(sorted(GLYPHS))


def glyph_polygons(name: str, x: float, y: float, w: float, h: float):
    """Polygons of glyph ``name`` scaled into the box at (x, y) of size w x h."""
    try:
        polys = GLYPHS[name]
    except KeyError:
        raise KeyError(f"unknown glyph {name!r}") from None
    return [tuple((x + px * w, y + py * h) for px, py in poly) for poly in polys]

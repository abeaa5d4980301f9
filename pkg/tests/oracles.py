"""Brute-force reference computations used by the tests.

Nothing here imports the code paths it checks.
"""
from itertools import product

import numpy as np


def box_pixels(top, left, width, height):
    return {(x, y) for x in range(left, left + width) for y in range(top, top + height)}


def pixel_iou(a, b):
    pa, pb = box_pixels(*a), box_pixels(*b)
    return len(pa & pb) / len(pa | pb)


def hull_of(pixels):
    xs = [p[0] for p in pixels]
    ys = [p[1] for p in pixels]
    return (min(ys), min(xs), max(xs) - min(xs) + 1, max(ys) - min(ys) + 1)


def brute_min_cut(n, source, sink, edges):
    """Minimum s-t cut capacity by enumerating every bipartition of inner nodes."""
    inner = [v for v in range(n) if v not in (source, sink)]
    best = float("inf")
    for bits in product((0, 1), repeat=len(inner)):
        side = {source}
        side.update(v for v, b in zip(inner, bits) if b)
        cap = sum(c for u, v, c in edges if u in side and v not in side)
        best = min(best, cap)
    return best


def brute_distance_within(mask, radius):
    """Pixels whose Euclidean distance to the nearest set pixel of ``mask`` is <= radius."""
    h, w = mask.shape
    pts = np.argwhere(mask)
    out = np.zeros_like(mask)
    for y in range(h):
        for x in range(w):
            if pts.size and (((pts - (y, x)) ** 2).sum(axis=1).min() <= radius * radius):
                out[y, x] = True
    return out


def brute_erode(mask, radius):
    """Pixels whose Euclidean disk of ``radius`` lies entirely inside ``mask`` (outside counts as empty)."""
    h, w = mask.shape
    out = np.zeros_like(mask)
    offs = [(dy, dx) for dy in range(-radius, radius + 1) for dx in range(-radius, radius + 1)
            if dy * dy + dx * dx <= radius * radius]
    for y in range(h):
        for x in range(w):
            ok = True
            for dy, dx in offs:
                yy, xx = y + dy, x + dx
                if not (0 <= yy < h and 0 <= xx < w and mask[yy, xx]):
                    ok = False
                    break
            out[y, x] = ok
    return out


def brute_ap(pred_scores_tp, n_gt):
    """101-point interpolated AP from a ranked TP/FP sequence, by direct enumeration.

    ``pred_scores_tp`` is a list of (score, is_tp) already in evaluation order.
    For every recall level r the precision used is the best precision over all
    ranking prefixes whose recall reaches r.
    """
    points = []
    tp = 0
    for k, (_, is_tp) in enumerate(pred_scores_tp, start=1):
        tp += bool(is_tp)
        points.append((tp / n_gt, tp / k))
    total = 0.0
    for step in range(101):
        r = step / 100
        candidates = [p for rec, p in points if rec >= r - 1e-12]
        total += max(candidates) if candidates else 0.0
    return total / 101

"""Time scales and row geometry shared by the generator and the renderer."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Layout, Orientation, Scale
from .errors import DomainError

FACETS = 2
ROTATE_DEG = 60.0
_TOL = 1e-9


def _check_domain(t, domain):
    lo, hi = domain
    span = max(1.0, abs(hi - lo))
    if t < lo - _TOL * span or t > hi + _TOL * span:
        raise DomainError(f"time {t} outside domain [{lo}, {hi}]")


def scale_position(t, scale, domain, range_px: float, times: Sequence[float] = ()) -> float:
    """Pixel offset of ``t`` along an axis of length ``range_px``.

    ``domain`` is (t0, t1) for the continuous scales.  For Sequential, ``t`` is
    an index and ``domain`` is (0, n - 1).  SequentialInterim needs the full
    ``times`` sequence and takes ``t`` as an index into it.
    """
    scale = Scale(scale)
    lo, hi = domain
    if scale in (Scale.CHRONOLOGICAL, Scale.RELATIVE):
        _check_domain(t, domain)
        return 0.0 if hi == lo else range_px * (t - lo) / (hi - lo)
    if scale is Scale.LOGARITHMIC:
        _check_domain(t, domain)
        den = math.log(hi - lo + 1.0)
        return 0.0 if den == 0 else range_px * math.log(t - lo + 1.0) / den
    if scale is Scale.SEQUENTIAL:
        if int(t) != t or not lo <= t <= hi:
            raise DomainError(f"index {t} outside [{lo}, {hi}]")
        return 0.0 if hi == lo else range_px * (t - lo) / (hi - lo)
    i = int(t)
    if i != t or not 0 <= i < len(times):
        raise DomainError(f"index {t} outside [0, {len(times) - 1}]")
    return range_px * float(scale_fractions(times, scale)[i])


def scale_fractions(times: Sequence[float], scale) -> np.ndarray:
    """Fractional positions in [0, 1] of every event on one track."""
    scale = Scale(scale)
    t = np.asarray(times, dtype=float)
    n = t.size
    if n == 0:
        return t
    if n == 1:
        return np.zeros(1)
    if np.any(np.diff(t) <= 0) and scale not in (Scale.SEQUENTIAL,):
        raise DomainError("times must be strictly increasing")
    if scale in (Scale.CHRONOLOGICAL, Scale.RELATIVE):
        return (t - t[0]) / (t[-1] - t[0])
    if scale is Scale.LOGARITHMIC:
        v = np.log(t - t[0] + 1.0)
        return v / v[-1]
    seq = np.arange(n) / (n - 1)
    if scale is Scale.SEQUENTIAL:
        return seq
    # equal share per gap plus a share proportional to the gap's duration
    d = np.diff(t)
    gaps = 0.5 / (n - 1) + 0.5 * d / d.sum()
    return np.concatenate([[0.0], np.cumsum(gaps)]) / gaps.sum()


def format_time(t: float, scale) -> str:
    scale = Scale(scale)
    if scale is Scale.RELATIVE:
        return f"+{t:g}"
    if float(t).is_integer():
        return str(int(t))
    return f"{t:g}"


# -- rows ---------------------------------------------------------------------


def row_count(layout, n_events: int, n_segments: int = 2) -> int:
    layout = Layout(layout)
    if layout is Layout.UNIFIED:
        return 1
    if layout is Layout.FACETED:
        return min(FACETS, n_events)
    segs = min(n_segments, n_events)
    if layout is Layout.SEGMENTED:
        return segs
    return sum(min(FACETS, len(g)) for g in np.array_split(np.arange(n_events), segs))


def assign_rows(n_events: int, layout, n_rows: int):
    """Per event (row, group) where fractions are computed within each group.

    Unified and Faceted events share one group (a global time domain);
    segmented layouts give every segment its own domain.  Faceted rows take
    events round-robin.
    """
    layout = Layout(layout)
    n_rows = max(1, n_rows)
    if layout is Layout.UNIFIED:
        return [(0, 0)] * n_events
    if layout is Layout.FACETED:
        return [(i % n_rows, 0) for i in range(n_events)]
    if layout is Layout.SEGMENTED:
        out = []
        for s, grp in enumerate(np.array_split(np.arange(n_events), min(n_rows, n_events))):
            out += [(s, s)] * len(grp)
        return out
    segs = max(1, n_rows // FACETS)
    out = []
    for s, grp in enumerate(np.array_split(np.arange(n_events), min(segs, n_events))):
        out += [(FACETS * s + j % FACETS, s) for j in range(len(grp))]
    return out


@dataclass(frozen=True)
class RowFrame:
    """A straight track from ``start`` (fraction 0) to ``end`` (fraction 1)."""

    start: tuple[float, float]
    end: tuple[float, float]

    def at(self, u: float) -> tuple[int, int]:
        x = self.start[0] + u * (self.end[0] - self.start[0])
        y = self.start[1] + u * (self.end[1] - self.start[1])
        return int(round(x)), int(round(y))


def anchor_positions(times, scale, layout, frames: Sequence[RowFrame]) -> list[tuple[int, int]]:
    """Anchor centers for every event given the track frame of each row."""
    rows = assign_rows(len(times), layout, len(frames))
    times = list(times)
    groups: dict[int, list[int]] = {}
    for i, (_, g) in enumerate(rows):
        groups.setdefault(g, []).append(i)
    out = [None] * len(times)
    for idx in groups.values():
        u = scale_fractions([times[i] for i in idx], scale)
        for i, ui in zip(idx, u):
            out[i] = frames[rows[i][0]].at(float(ui))
    return out


# -- orientation helpers ------------------------------------------------------------


def axis_vector(orientation) -> tuple[float, float]:
    return (0.0, 1.0) if Orientation(orientation) is Orientation.VERTICAL else (1.0, 0.0)


def needs_rotation(tangent, orientation) -> bool:
    """True when the local path tangent is more than 60 degrees off the orientation axis."""
    tx, ty = tangent
    n = math.hypot(tx, ty)
    if n == 0:
        return False
    ax, ay = axis_vector(orientation)
    cos = abs(tx * ax + ty * ay) / n
    return cos < math.cos(math.radians(ROTATE_DEG)) - 1e-12


def rotate_offset(dx: float, dy: float) -> tuple[float, float]:
    """Quarter turn mapping 'above' to 'left' and 'below' to 'right'."""
    return dy, -dx


def principal_orientation(points, band_deg: float = 30.0):
    """Horizontal / Vertical / Other from the principal axis of 2-D points."""
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    d = p - p.mean(axis=0)
    cov = d.T @ d
    if not np.any(cov):
        return Orientation.OTHER
    vals, vecs = np.linalg.eigh(cov)
    vx, vy = vecs[:, -1]
    ang = math.degrees(math.atan2(abs(vy), abs(vx)))
    if ang <= band_deg + 1e-9:
        return Orientation.HORIZONTAL
    if ang >= 90.0 - band_deg - 1e-9:
        return Orientation.VERTICAL
    return Orientation.OTHER

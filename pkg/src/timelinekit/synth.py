"""Labeled synthetic timelines.

A :class:`TimelineSpec` fixes the design-space point, the style and the
canvas; :func:`generate` lays out a list of events, writes the SVG scene,
rasterizes it and derives exact per-element annotations from pixel ownership.
"""
from __future__ import annotations

import logging
import json
import math
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image as PILImage

from .core import (
    VIABLE_COMBINATIONS,
    AnnotatedTimeline,
    BBox,
    Element,
    ElementCategory,
    EventDatum,
    GlobalInfo,
    Layout,
    Orientation,
    PixelMask,
    Representation,
    Scale,
    rle_decode,
    rle_encode,
)
from .errors import InfeasibleConstraint, LayoutOverflow, SchemaError
from .glyphs import GLYPH_NAMES, glyph_polygons
from .layout import (
    FACETS,
    RowFrame,
    anchor_positions,
    assign_rows,
    format_time,
    needs_rotation,
    principal_orientation,
    row_count,
    scale_fractions,
)
from .scene import Ellipse, Polygon, Polyline, Rect, Scene, Text, rasterize, text_ink

log = logging.getLogger(__name__)

C = ElementCategory
MAX_EVENTS = 19
MAX_CANVAS = 2400
MARGIN = 16
MARK_SHAPES = ("rect", "circle", "diamond", "capsule")
ANNOTATION_SHAPES = ("rect", "circle", "diamond", "triangle")
PATHS = ("zigzag", "scurve", "staircase")

WORDS = (
    "Apollo", "Beacon", "Cobalt", "Delta", "Ember", "Falcon", "Garnet", "Harbor",
    "Indigo", "Juniper", "Kepler", "Lumen", "Meadow", "Nimbus", "Onyx", "Pioneer",
    "Quartz", "Raven", "Summit", "Tundra", "Umbra", "Vertex", "Willow", "Zephyr",
    "Atlas", "Boreal", "Canyon", "Dynamo", "Echo", "Fjord", "Glacier", "Horizon",
)


@dataclass(frozen=True)
class AnnotationSchema:
    has_event_text: bool = True
    has_annotation_text: bool = True
    has_annotation_icon: bool = False
    has_annotation_mark: bool = False
    has_main_body: bool = True


@dataclass(frozen=True)
class StyleParams:
    mark_shape: str = "circle"
    mark_fills: tuple = ((52, 101, 164),)
    mark_size: int = 14
    font_size: int = 12
    event_font_size: int = 12
    text_color: tuple = (0, 0, 0)
    background: tuple = (255, 255, 255)
    axis_color: tuple = (120, 120, 120)
    axis_width: int = 3
    annotation_shape: str = "rect"
    annotation_fill: tuple = (200, 80, 40)
    annotation_size: int = 8
    icon_size: int = 16
    icon_color: tuple = (40, 140, 60)
    gap: int = 5
    schema: AnnotationSchema = field(default_factory=AnnotationSchema)
    path: Optional[str] = None  # arbitrary representations only


@dataclass(frozen=True)
class TimelineSpec:
    n_events: int
    global_info: GlobalInfo
    style: StyleParams
    canvas: tuple[int, int]
    n_segments: int = 2

    def __post_init__(self):
        if not 2 <= self.n_events <= MAX_EVENTS:
            raise ValueError(f"n_events must be in [2, {MAX_EVENTS}]")

    def to_json(self) -> dict:
        out = asdict(self)
        out["global_info"] = self.global_info.to_json()
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "TimelineSpec":
        st = dict(obj["style"])
        st["schema"] = AnnotationSchema(**st["schema"])
        for k in ("mark_fills",):
            st[k] = tuple(tuple(c) for c in st[k])
        for k in ("text_color", "background", "axis_color", "annotation_fill", "icon_color"):
            st[k] = tuple(st[k])
        return cls(obj["n_events"], GlobalInfo.from_json(obj["global_info"]), StyleParams(**st),
                   tuple(obj["canvas"]), obj.get("n_segments", 2))


# -- sampling -------------------------------------------------------------------


def _luma(c) -> float:
    r, g, b = c
    return 0.299 * r + 0.587 * g + 0.114 * b


def _contrasting(rng, bg, min_gap=90.0):
    for _ in range(200):
        c = tuple(int(v) for v in rng.integers(0, 256, 3))
        if abs(_luma(c) - _luma(bg)) >= min_gap:
            return c
    return (0, 0, 0) if _luma(bg) > 127 else (255, 255, 255)


def _choose(rng, options, key, constraints):
    if key in constraints and constraints[key] is not None:
        return constraints[key]
    return options[int(rng.integers(len(options)))]


def _enum(kind, value, key):
    try:
        return kind(value)
    except ValueError:
        raise InfeasibleConstraint(f"{key}: {value!r} is not a valid value") from None


def sample_spec(seed: int, constraints: Optional[dict] = None) -> TimelineSpec:
    """Draw a random viable spec; ``constraints`` pins any subset of fields."""
    cons = dict(constraints or {})
    rng = np.random.default_rng(seed)
    want = {}
    for key, kind in (("representation", Representation), ("scale", Scale),
                      ("layout", Layout), ("orientation", Orientation)):
        if cons.get(key) is not None:
            want[key] = _enum(kind, cons[key], key)
    combos = sorted(
        (c for c in VIABLE_COMBINATIONS
         if all(want.get(k) in (None, v) for k, v in zip(("representation", "scale", "layout"), c))),
        key=lambda c: tuple(v.value for v in c),
    )
    if not combos:
        raise InfeasibleConstraint(f"no viable combination satisfies {cons}")
    reps = sorted({c[0] for c in combos}, key=lambda r: r.value)
    if len(reps) == 2:
        rep = Representation.ARBITRARY if rng.random() < 0.2 else Representation.LINEAR
    else:
        rep = reps[0]
    combos = [c for c in combos if c[0] is rep]
    scales = sorted({c[1] for c in combos}, key=lambda s: s.value)
    scale = scales[int(rng.integers(len(scales)))]
    layouts = sorted({c[2] for c in combos if c[1] is scale}, key=lambda v: v.value)
    layout = layouts[int(rng.integers(len(layouts)))]

    orient = want.get("orientation")
    path = None
    if rep is Representation.LINEAR:
        if orient is Orientation.OTHER:
            raise InfeasibleConstraint("linear timelines are drawn horizontally or vertically")
        if orient is None:
            orient = Orientation.VERTICAL if rng.random() < 0.3 else Orientation.HORIZONTAL
    else:
        if orient is None:
            path = PATHS[int(rng.integers(3))]
            orient = Orientation.OTHER if path == "staircase" else (
                Orientation.VERTICAL if rng.random() < 0.25 else Orientation.HORIZONTAL)
        else:
            path = "staircase" if orient is Orientation.OTHER else PATHS[int(rng.integers(2))]

    if rep is Representation.ARBITRARY:
        lo, hi = 3, 9
    elif layout is Layout.FACETED_SEGMENTED:
        lo, hi = 4, MAX_EVENTS
    elif orient is Orientation.VERTICAL and layout is Layout.UNIFIED:
        lo, hi = 2, 12
    else:
        lo, hi = 2, MAX_EVENTS
    n = int(cons["n_events"]) if cons.get("n_events") is not None else int(rng.integers(lo, hi + 1))
    if not 2 <= n <= MAX_EVENTS:
        raise InfeasibleConstraint(f"n_events {n} outside [2, {MAX_EVENTS}]")
    if layout is Layout.FACETED_SEGMENTED and n < 4:
        raise InfeasibleConstraint("faceted segments need at least 4 events")

    dark = rng.random() < 0.2
    bg = tuple(int(v) for v in (rng.integers(15, 45, 3) if dark else rng.integers(238, 256, 3)))
    n_fills = int(rng.integers(1, 4))
    fills = tuple(_contrasting(rng, bg) for _ in range(n_fills))
    text = tuple(int(v) for v in (rng.integers(215, 256, 3) if dark else rng.integers(0, 50, 3)))
    schema = AnnotationSchema(
        has_event_text=bool(rng.random() < 0.85),
        has_annotation_text=bool(rng.random() < 0.8),
        has_annotation_icon=bool(rng.random() < 0.4),
        has_annotation_mark=bool(rng.random() < 0.4),
        has_main_body=bool(rng.random() < 0.85) or rep is Representation.ARBITRARY,
    )
    style = StyleParams(
        mark_shape=_choose(rng, MARK_SHAPES, "mark_shape", cons),
        mark_fills=fills,
        mark_size=int(rng.integers(5, 11)) * 2,
        font_size=int(rng.integers(10, 15)),
        event_font_size=int(rng.integers(10, 15)),
        text_color=text,
        background=bg,
        axis_color=_contrasting(rng, bg, 60),
        axis_width=int(rng.integers(2, 5)),
        annotation_shape=_choose(rng, ANNOTATION_SHAPES, "annotation_shape", cons),
        annotation_fill=_contrasting(rng, bg),
        annotation_size=int(rng.integers(3, 6)) * 2,
        icon_size=int(rng.integers(7, 11)) * 2,
        icon_color=_contrasting(rng, bg),
        gap=int(rng.integers(4, 8)),
        schema=schema,
        path=path,
    )
    gi = GlobalInfo(rep, scale, layout, orient)
    spec = TimelineSpec(n, gi, style, (1, 1))
    return replace(spec, canvas=_canvas_for(spec))


@lru_cache(maxsize=64)
def _max_word_width(size: int) -> int:
    return max(text_ink(w, size)[2] for w in WORDS)


def _extents(style: StyleParams, orientation) -> tuple[int, int, int]:
    """(along, before, after) extents of one event's members around its anchor.

    ``along`` is the widest member along the axis; ``before``/``after`` reach
    across it (up/down for horizontal, left/right for vertical).
    """
    sch = style.schema
    word = _max_word_width(style.font_size)
    year = text_ink("+8888", style.event_font_size)
    mark_w = _mark_width(style)
    cap = text_ink("Hg", style.font_size)[3]
    if Orientation(orientation) is Orientation.VERTICAL:
        before = mark_w // 2
        after = mark_w // 2
        if sch.has_annotation_mark:
            before += style.gap + style.annotation_size
        if sch.has_annotation_icon:
            before += style.gap + style.icon_size
        if sch.has_annotation_text:
            before += style.gap + word
        if sch.has_event_text:
            after += style.gap + year[2]
        along = max(style.mark_size, style.icon_size * sch.has_annotation_icon, cap)
        return along, before, after
    before = after = style.mark_size // 2
    if sch.has_annotation_mark:
        before += style.gap + style.annotation_size
    if sch.has_annotation_icon:
        before += style.gap + style.icon_size
    if sch.has_annotation_text:
        before += style.gap + cap
    if sch.has_event_text:
        after += style.gap + year[3]
    along = max(mark_w, word * sch.has_annotation_text, year[2] * sch.has_event_text,
                style.icon_size * sch.has_annotation_icon)
    return along, before, after


def _canvas_for(spec: TimelineSpec) -> tuple[int, int]:
    gi, st = spec.global_info, spec.style
    along, before, after = _extents(st, gi.orientation)
    if gi.representation is Representation.ARBITRARY:
        slot = max(along, before + after) + 16
        long_side = max(560, spec.n_events * slot + 2 * MARGIN + 2 * slot)
        short_side = max(420, 3 * (before + after) + 2 * MARGIN)
        if st.path == "staircase":
            side = max(long_side, short_side)
            return side, side
        if gi.orientation is Orientation.VERTICAL:
            return short_side, long_side
        return long_side, short_side
    rows = row_count(gi.layout, spec.n_events, spec.n_segments)
    per_row = max(len(g) for g in _row_members(spec.n_events, gi.layout, rows))
    spacing = along + 12
    track = max(200, int(math.ceil(1.6 * spacing * max(per_row - 1, 1))))
    long_side = track + along + 2 * MARGIN
    pitch = before + after + 24
    short_side = rows * pitch - 24 + 2 * MARGIN
    if gi.orientation is Orientation.VERTICAL:
        return short_side, long_side
    return long_side, short_side


def _row_members(n, layout, rows):
    groups: dict[int, list[int]] = {}
    for i, (r, _) in enumerate(assign_rows(n, layout, rows)):
        groups.setdefault(r, []).append(i)
    return list(groups.values())


def sample_data(spec: TimelineSpec, seed: int) -> list[EventDatum]:
    """Event data that fits ``spec``'s canvas; times strictly increase."""
    rng = np.random.default_rng(seed)
    n = spec.n_events
    gi = spec.global_info
    labels = [WORDS[int(i)] for i in rng.integers(len(WORDS), size=n)]
    icons = ([GLYPH_NAMES[int(i)] for i in rng.integers(len(GLYPH_NAMES), size=n)]
             if spec.style.schema.has_annotation_icon else [None] * n)
    along = _extents(spec.style, gi.orientation)[0] + 8
    track = track_length(spec)
    ratio = 3.0
    times = None
    for attempt in range(8):
        cand = _sample_times(rng, n, gi.scale, ratio if attempt < 7 else 1.0)
        if _min_spacing(cand, spec, track) >= along:
            times = cand
            break
        ratio = 1.0 + (ratio - 1.0) / 2
    if times is None:
        times = cand
    return [EventDatum(float(t), lab, ic) for t, lab, ic in zip(times, labels, icons)]


def _sample_times(rng, n, scale, ratio):
    scale = Scale(scale)
    if scale is Scale.LOGARITHMIC:
        span = float(rng.integers(200, 5000))
        w = rng.uniform(1.0, ratio, n - 1)
        u = np.concatenate([[0.0], np.cumsum(w)]) / w.sum()
        t = np.rint(np.exp(u * math.log(span + 1)) - 1)
        for i in range(1, n):
            t[i] = max(t[i], t[i - 1] + 1)
        return t.tolist()
    unit = int(rng.integers(1, 6))
    start = 0 if scale is Scale.RELATIVE else int(rng.integers(1800, 1990))
    gaps = np.maximum(1, np.rint(unit * rng.uniform(1.0, ratio, n - 1))).astype(int)
    return (start + np.concatenate([[0], np.cumsum(gaps)])).astype(float).tolist()


def track_length(spec):
    gi = spec.global_info
    along = _extents(spec.style, gi.orientation)[0]
    w, h = spec.canvas
    long_side = h if gi.orientation is Orientation.VERTICAL else w
    return long_side - 2 * MARGIN - along


def _min_spacing(times, spec, track):
    gi = spec.global_info
    if gi.representation is Representation.ARBITRARY:
        return math.inf
    rows = row_count(gi.layout, spec.n_events, spec.n_segments)
    frames = [RowFrame((0.0, 0.0), (float(track), 0.0)) for _ in range(rows)]
    pos = anchor_positions(times, gi.scale, gi.layout, frames)
    best = math.inf
    for members in _row_members(len(times), gi.layout, rows):
        xs = sorted(pos[i][0] for i in members)
        if len(xs) > 1:
            best = min(best, min(b - a for a, b in zip(xs, xs[1:])))
    return best


# -- layout of one event ------------------------------------------------------------


def _mark_width(style: StyleParams) -> int:
    s = style.mark_size
    return 2 * round(0.75 * s) if style.mark_shape == "capsule" else s


def mark_shape(kind: str, x: float, y: float, w: float, h: float, fill):
    cx, cy = x + w / 2, y + h / 2
    if kind == "rect":
        return Rect(x, y, w, h, fill)
    if kind == "circle":
        return Ellipse(cx, cy, w / 2, h / 2, fill)
    if kind == "diamond":
        return Polygon(((cx, y), (x + w, cy), (cx, y + h), (x, cy)), fill)
    if kind == "capsule":
        return Rect(x, y, w, h, fill, rx=h / 2)
    if kind == "triangle":
        return Polygon(((cx, y), (x + w, y + h), (x, y + h)), fill)
    raise ValueError(f"unknown mark shape {kind!r}")


@dataclass
class _Member:
    category: ElementCategory
    box: tuple[int, int, int, int]  # x, y, w, h (nominal)
    shapes: list


def _event_members(ax, ay, datum, idx, style, scale, rotated) -> list[_Member]:
    """Members of one event around anchor center (ax, ay).

    Unrotated, annotations stack above the mark (mark, icon, then text) and
    the event text sits below.  Rotated, 'above' becomes 'left' and 'below'
    becomes 'right'.
    """
    sch, gap = style.schema, style.gap
    mw, mh = _mark_width(style), style.mark_size
    fill = style.mark_fills[idx % len(style.mark_fills)]
    out = [_Member(C.EVENT_MARK, (ax - mw // 2, ay - mh // 2, mw, mh),
                   [mark_shape(style.mark_shape, ax - mw // 2, ay - mh // 2, mw, mh, fill)])]
    if not rotated:
        cursor = ay - mh // 2
        if sch.has_annotation_mark:
            a = style.annotation_size
            cursor -= gap + a
            out.append(_Member(C.ANNOTATION_MARK, (ax - a // 2, cursor, a, a),
                               [mark_shape(style.annotation_shape, ax - a // 2, cursor, a, a, style.annotation_fill)]))
        if sch.has_annotation_icon and datum.icon_id:
            i = style.icon_size
            cursor -= gap + i
            out.append(_Member(C.ANNOTATION_ICON, (ax - i // 2, cursor, i, i),
                               [Polygon(p, style.icon_color) for p in glyph_polygons(datum.icon_id, ax - i // 2, cursor, i, i)]))
        if sch.has_annotation_text:
            dx, dy, w, h = text_ink(datum.label, style.font_size)
            desc = text_ink("g", style.font_size)
            base = cursor - gap - (desc[1] + desc[3])
            out.append(_Member(C.ANNOTATION_TEXT, (ax - w // 2, base + dy, w, h),
                               [Text(ax - w // 2 - dx, base, datum.label, style.font_size, style.text_color)]))
        if sch.has_event_text:
            label = format_time(datum.time, scale)
            dx, dy, w, h = text_ink(label, style.event_font_size)
            top = ay + mh // 2 + gap
            out.append(_Member(C.EVENT_TEXT, (ax - w // 2, top, w, h),
                               [Text(ax - w // 2 - dx, top - dy, label, style.event_font_size, style.text_color)]))
        return out
    cursor = ax - mw // 2
    if sch.has_annotation_mark:
        a = style.annotation_size
        cursor -= gap + a
        out.append(_Member(C.ANNOTATION_MARK, (cursor, ay - a // 2, a, a),
                           [mark_shape(style.annotation_shape, cursor, ay - a // 2, a, a, style.annotation_fill)]))
    if sch.has_annotation_icon and datum.icon_id:
        i = style.icon_size
        cursor -= gap + i
        out.append(_Member(C.ANNOTATION_ICON, (cursor, ay - i // 2, i, i),
                           [Polygon(p, style.icon_color) for p in glyph_polygons(datum.icon_id, cursor, ay - i // 2, i, i)]))
    if sch.has_annotation_text:
        dx, dy, w, h = text_ink(datum.label, style.font_size)
        cap = text_ink("H", style.font_size)
        base = ay - cap[3] // 2 - cap[1]
        left = cursor - gap - w
        out.append(_Member(C.ANNOTATION_TEXT, (left, base + dy, w, h),
                           [Text(left - dx, base, datum.label, style.font_size, style.text_color)]))
    if sch.has_event_text:
        label = format_time(datum.time, scale)
        dx, dy, w, h = text_ink(label, style.event_font_size)
        left, top = ax + mw // 2 + gap, ay - h // 2
        out.append(_Member(C.EVENT_TEXT, (left, top, w, h),
                           [Text(left - dx, top - dy, label, style.event_font_size, style.text_color)]))
    return out


# -- paths for arbitrary representations ---------------------------------------------


def _path_points(kind, w, h, rng, vertical):
    if vertical:
        pts = _path_points(kind, h, w, rng, False)
        return [(y, x) for x, y in pts]
    m = MARGIN + 40
    if kind == "zigzag":
        k = int(rng.integers(2, 5))
        xs = np.linspace(m, w - m, k + 1) + np.concatenate([[0], rng.uniform(-0.08, 0.08, k - 1) * (w - 2 * m) / k, [0]])
        amp = rng.uniform(0.12, 0.32) * h
        ys = [h / 2 + (amp if j % 2 else -amp) + rng.uniform(-0.05, 0.05) * h for j in range(k + 1)]
        return [(float(x), float(y)) for x, y in zip(xs, ys)]
    if kind == "scurve":
        f = rng.uniform(0.6, 1.4)
        phase = rng.uniform(0, 2 * math.pi)
        amp = rng.uniform(0.12, 0.3) * h
        xs = np.linspace(m, w - m, 64)
        ys = h / 2 + amp * np.sin(2 * math.pi * f * (xs - m) / (w - 2 * m) + phase)
        return [(float(x), float(y)) for x, y in zip(xs, ys)]
    k = int(rng.integers(3, 5))
    step = (min(w, h) - 2 * m) / k
    pts = [(m, m)]
    x, y = float(m), float(m)
    for _ in range(k):
        x += step * rng.uniform(0.9, 1.1)
        pts.append((x, y))
        y += step * rng.uniform(0.9, 1.1)
        pts.append((x, y))
    return pts


def _along_path(pts, n):
    """Points at equal arc-length spacing with the local tangent at each."""
    p = np.asarray(pts, float)
    seg = np.diff(p, axis=0)
    lens = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(lens)])
    out = []
    for s in np.linspace(0.0, cum[-1], n):
        j = min(int(np.searchsorted(cum, s, side="right")) - 1, len(lens) - 1)
        t = (s - cum[j]) / lens[j] if lens[j] else 0.0
        xy = p[j] + t * seg[j]
        out.append(((int(round(xy[0])), int(round(xy[1]))), tuple(seg[j])))
    return out


# -- generation -----------------------------------------------------------------------


def _linear_frames(spec: TimelineSpec):
    gi, st = spec.global_info, spec.style
    along, before, after = _extents(st, gi.orientation)
    rows = row_count(gi.layout, spec.n_events, spec.n_segments)
    start = MARGIN + along // 2
    end = start + track_length(spec)
    pitch = before + after + 24
    frames = []
    for r in range(rows):
        cross = MARGIN + before + r * pitch
        if gi.orientation is Orientation.VERTICAL:
            frames.append(RowFrame((float(cross), float(start)), (float(cross), float(end))))
        else:
            frames.append(RowFrame((float(start), float(cross)), (float(end), float(cross))))
    return frames


def _overlapping(boxes) -> bool:
    if len(boxes) < 2:
        return False
    b = np.asarray(boxes, float)
    x0, y0, x1, y1 = b[:, 0], b[:, 1], b[:, 0] + b[:, 2], b[:, 1] + b[:, 3]
    ix = np.minimum(x1[:, None], x1[None]) - np.maximum(x0[:, None], x0[None])
    iy = np.minimum(y1[:, None], y1[None]) - np.maximum(y0[:, None], y0[None])
    hit = (ix > 0) & (iy > 0)
    np.fill_diagonal(hit, False)
    return bool(hit.any())


def _inside_canvas(boxes, w, h) -> bool:
    return all(x >= 1 and y >= 1 and x + bw <= w - 1 and y + bh <= h - 1 for x, y, bw, bh in boxes)


def build_scene(spec: TimelineSpec, data: Sequence[EventDatum], seed: int = 0):
    """Lay out ``data`` and return (scene, event member element ids)."""
    gi, st = spec.global_info, spec.style
    w, h = spec.canvas
    if len(data) != spec.n_events:
        raise ValueError(f"expected {spec.n_events} events, got {len(data)}")
    times = [d.time for d in data]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("event times must be strictly increasing")
    rng = np.random.default_rng(seed)

    if gi.representation is Representation.ARBITRARY:
        for _ in range(30):
            path = _path_points(st.path, w, h, rng, gi.orientation is Orientation.VERTICAL)
            placed = _along_path(path, len(data))
            members = [
                _event_members(ax, ay, d, i, st, gi.scale, needs_rotation(tan, gi.orientation))
                for i, (d, ((ax, ay), tan)) in enumerate(zip(data, placed))
            ]
            boxes = [m.box for ev in members for m in ev]
            if not _overlapping(boxes) and _inside_canvas(boxes, w, h):
                break
        else:
            raise LayoutOverflow("could not place events along the path without overlap")
        bodies = [Polyline(tuple(path), st.axis_color, float(st.axis_width))] if st.schema.has_main_body else []
    else:
        frames = _linear_frames(spec)
        anchors = anchor_positions(times, gi.scale, gi.layout, frames)
        rotated = gi.orientation is Orientation.VERTICAL
        members = [_event_members(ax, ay, d, i, st, gi.scale, rotated)
                   for i, (d, (ax, ay)) in enumerate(zip(data, anchors))]
        boxes = [m.box for ev in members for m in ev]
        if _overlapping(boxes):
            raise LayoutOverflow("event members overlap; canvas too small for this data")
        if not _inside_canvas(boxes, w, h):
            raise LayoutOverflow("event members exceed the canvas")
        bodies = []
        if st.schema.has_main_body:
            ext = _mark_width(st) // 2 + 8
            t = st.axis_width
            for fr in frames:
                (x0, y0), (x1, y1) = fr.start, fr.end
                if gi.orientation is Orientation.VERTICAL:
                    bodies.append(Rect(int(x0) - t // 2, int(y0) - ext, t, int(y1 - y0) + 2 * ext, st.axis_color))
                else:
                    bodies.append(Rect(int(x0) - ext, int(y0) - t // 2, int(x1 - x0) + 2 * ext, t, st.axis_color))

    scene = Scene(w, h, tuple(st.background))
    eid = 0
    for body in bodies:
        scene.add(body, eid, C.MAIN_BODY.value)
        eid += 1
    order = (C.ANNOTATION_MARK, C.EVENT_MARK, C.ANNOTATION_ICON, C.EVENT_TEXT, C.ANNOTATION_TEXT)
    events = []
    for i, ev in enumerate(members):
        ids = []
        for m in sorted(ev, key=lambda m: order.index(m.category)):
            for shape in m.shapes:
                scene.add(shape, eid, m.category.value, i)
            ids.append(eid)
            eid += 1
        events.append(ids)
    return scene, events


def timeline_from_scene(scene: Scene, global_info: GlobalInfo, data=(), svg: Optional[str] = None,
                        drop_hidden: bool = False) -> AnnotatedTimeline:
    """Rasterize (the SVG of) a scene and read exact annotations off pixel ownership.

    An element that owns no pixel raises LayoutOverflow, or is left out of
    the annotations when ``drop_hidden`` is set.
    """
    svg = svg if svg is not None else scene.to_svg()
    parsed = Scene.from_svg(svg)
    raster = rasterize(parsed)
    cats: dict[int, str] = {}
    colors: dict[int, tuple] = {}
    groups: dict[int, int] = {}
    for item in parsed.items:
        if item.element is None:
            continue
        cats.setdefault(item.element, item.category)
        s = item.shape
        colors.setdefault(item.element, getattr(s, "fill", None) or getattr(s, "stroke", None))
        if item.event is not None:
            groups[item.element] = item.event
    remap, elements = {}, []
    for e in sorted(cats):
        region = raster.element_region(e)
        if region is None:
            if not drop_hidden:
                raise LayoutOverflow(f"element {e} is fully hidden")
            log.warning("element %d (%s) is hidden or off the canvas; not annotated", e, cats[e])
            groups.pop(e, None)
            continue
        top, left, m = region
        remap[e] = len(elements)
        elements.append(Element(ElementCategory(cats[e]), BBox(top, left, m.shape[1], m.shape[0]),
                                PixelMask(m), tuple(colors[e]) if colors[e] else None))
    n_events = max(groups.values(), default=-1) + 1
    events = [[] for _ in range(n_events)]
    for e, k in sorted(groups.items()):
        events[k].append(remap[e])
    return AnnotatedTimeline(raster.image, global_info, elements, events, list(data), tuple(parsed.background))


def generate(spec: TimelineSpec, data: Sequence[EventDatum], seed: int = 0) -> AnnotatedTimeline:
    scene, _ = build_scene(spec, data, seed)
    tl = timeline_from_scene(scene, spec.global_info, data)
    if spec.global_info.representation is Representation.ARBITRARY:
        centers = [tl.elements[i].bbox.center for g in tl.events for i in g
                   if tl.elements[i].category is C.EVENT_MARK]
        tl.global_info = replace(tl.global_info, orientation=principal_orientation(centers))
    return tl


def generate_svg(spec: TimelineSpec, data: Sequence[EventDatum], seed: int = 0) -> str:
    return build_scene(spec, data, seed)[0].to_svg()


def sample_timeline(seed: int, constraints: Optional[dict] = None, attempts: int = 20):
    """Sample a spec and fitting data, retrying on layout overflow.  Returns (spec, data, timeline)."""
    last = None
    for k in range(attempts):
        sub = int(np.random.SeedSequence([seed, k]).generate_state(1)[0])
        spec = sample_spec(sub, constraints)
        data = sample_data(spec, sub)
        try:
            return spec, data, generate(spec, data, sub)
        except LayoutOverflow as exc:
            last = exc
    raise LayoutOverflow(f"no layout found after {attempts} attempts: {last}")


def generate_corpus(n: int, seed: int = 0, constraints: Optional[dict] = None):
    for i in range(n):
        yield sample_timeline(int(np.random.SeedSequence([seed, 1_000_003, i]).generate_state(1)[0]), constraints)


# -- sidecar files --------------------------------------------------------------------


def timeline_to_json(tl: AnnotatedTimeline, image_ref: Optional[str] = None) -> dict:
    out = {
        "global": tl.global_info.to_json(),
        "elements": [
            {"category": el.category.value, "bbox": el.bbox.as_list(), "mask_rle": rle_encode(el.mask),
             **({"color": list(el.color)} if el.color is not None else {})}
            for el in tl.elements
        ],
        "events": [list(g) for g in tl.events],
        "data": [d.to_json() for d in tl.data],
        "background": list(tl.background),
    }
    if image_ref is not None:
        out = {"image": image_ref, **out}
    return out


def timeline_from_json(obj: dict, image: np.ndarray) -> AnnotatedTimeline:
    try:
        gi = GlobalInfo.from_json(obj["global"])
        elements = []
        for k, e in enumerate(obj["elements"]):
            box = BBox.from_list(e["bbox"])
            mask = rle_decode(e["mask_rle"], box.width, box.height)
            elements.append(Element(ElementCategory(e["category"]), box, mask,
                                    tuple(e["color"]) if e.get("color") is not None else None))
        data = [EventDatum.from_json(d) for d in obj.get("data", [])]
        return AnnotatedTimeline(image, gi, elements, [list(g) for g in obj["events"]], data,
                                 tuple(obj.get("background", (255, 255, 255))))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed annotation document: {exc}") from exc


def save_timeline(tl: AnnotatedTimeline, png_path) -> Path:
    """Write the bitmap and its sidecar JSON (same stem); returns the JSON path."""
    png_path = Path(png_path)
    png_path.parent.mkdir(parents=True, exist_ok=True)
    PILImage.fromarray(tl.image).save(png_path)
    js = png_path.with_suffix(".json")
    js.write_text(json.dumps(timeline_to_json(tl, png_path.name), indent=1) + "\n")
    return js


def load_timeline(json_path) -> AnnotatedTimeline:
    json_path = Path(json_path)
    obj = json.loads(json_path.read_text())
    image = np.asarray(PILImage.open(json_path.parent / obj["image"]).convert("RGB")).copy()
    return timeline_from_json(obj, image)

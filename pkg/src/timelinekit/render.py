"""Render new timelines from a template document and event data."""
from __future__ import annotations

import logging
import math
from functools import lru_cache
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .core import (
    AnnotatedTimeline,
    BBox,
    ElementCategory,
    EventDatum,
    Orientation,
    Representation,
    Scale,
)
from .errors import InsufficientSlots, TemplateIncomplete
from .glyphs import GLYPHS, glyph_polygons
from .layout import (
    RowFrame,
    anchor_positions,
    axis_vector,
    format_time,
    needs_rotation,
    rotate_offset,
    row_count,
    scale_position,  # noqa: F401  (part of the rendering API)
)
from .scene import Bitmap, Polygon, Polyline, Scene, Text, coverage, rasterize, text_ink, text_mask
from .synth import _along_path, timeline_from_scene
from .template import (
    ReusableElement,
    SlotMember,
    TemplateDoc,
    TextRole,
    UpdatableElement,
    estimate_size,
    row_groups,
)

log = logging.getLogger(__name__)
C = ElementCategory

SIZE_SNAP = 2  # font sizes tried on either side of the template's estimate
MIN_SHRINK = 0.6  # overflowing text shrinks to this share of its size before ellipsizing
ELLIPSIS = "…"
Z_ORDER = (C.ANNOTATION_MARK, C.EVENT_MARK, C.ANNOTATION_ICON, C.EVENT_TEXT, C.ANNOTATION_TEXT)


@dataclass(frozen=True)
class RenderOptions:
    canvas: Optional[tuple[int, int]] = None
    scale: Optional[Scale] = None
    representation_source: Optional[TemplateDoc] = None
    allow_loop: bool = True
    # set by transfer_representation: explicit anchor centers and path tangents
    anchors: Optional[tuple[tuple[int, int], ...]] = None
    tangents: Optional[tuple[tuple[float, float], ...]] = None


@dataclass
class RenderJob:
    template: TemplateDoc
    data: list[EventDatum]
    options: RenderOptions = field(default_factory=RenderOptions)

    def __post_init__(self):
        self.data = list(self.data)
        if not self.data:
            raise ValueError("a render job needs at least one event")


@dataclass
class RenderResult:
    svg: str
    image: np.ndarray
    timeline: AnnotatedTimeline
    anchors: list[tuple[int, int]]
    mark_index: list[Optional[int]]  # distinct event mark used per event


# -- template analysis ------------------------------------------------------------------


def _same_patch(a: ReusableElement, b: ReusableElement, tol: float = 6.0) -> bool:
    if a.patch.shape != b.patch.shape:
        return False
    ma, mb = a.mask.bits, b.mask.bits
    if (ma ^ mb).sum() > 0.05 * max(ma.sum(), 1):
        return False
    both = ma & mb
    diff = np.abs(a.patch[..., :3].astype(int) - b.patch[..., :3].astype(int))[both]
    return diff.size == 0 or float(diff.mean()) <= tol


def distinct_patches(doc: TemplateDoc, category: ElementCategory) -> list[int]:
    """Reusable indices of visually distinct elements of a category, in slot order."""
    seen: list[int] = []
    for slot in doc.event_slots:
        for m in slot.members:
            if m.kind != "reusable" or doc.reusable[m.index].category is not category:
                continue
            if not any(_same_patch(doc.reusable[m.index], doc.reusable[j]) for j in seen):
                seen.append(m.index)
    return seen


def _center(b: BBox) -> tuple[float, float]:
    return b.left + b.width / 2, b.top + b.height / 2


def _member_keys(doc: TemplateDoc, slot) -> list[tuple]:
    """(category, ordinal) per member, ordinals by distance from the anchor."""
    ac = _center(slot.anchor)
    cats: dict = {}
    for j, m in enumerate(slot.members):
        cats.setdefault(doc.element(m).category, []).append(j)
    keys = [None] * len(slot.members)
    for cat, js in cats.items():
        def dist(j):
            c = _center(doc.element(slot.members[j]).bbox)
            return math.hypot(c[0] - ac[0], c[1] - ac[1]), j

        for k, j in enumerate(sorted(js, key=dist)):
            keys[j] = (cat, k)
    return keys


@dataclass
class _Role:
    key: tuple
    offset: tuple[float, float]  # member center minus anchor center
    size: tuple[int, int]
    example: SlotMember
    font_size: Optional[int] = None
    max_width: int = 0


def canonical_roles(doc: TemplateDoc) -> list[_Role]:
    """Members present in more than half of the slots, with median geometry."""
    samples: dict = {}
    for slot in doc.event_slots:
        ac = _center(slot.anchor)
        for key, m in zip(_member_keys(doc, slot), slot.members):
            samples.setdefault(key, []).append((ac, m))
    n = len(doc.event_slots)
    roles = []
    for key, items in samples.items():
        if 2 * len(items) <= n:
            continue
        els = [doc.element(m) for _, m in items]
        offs = [(_center(e.bbox)[0] - ac[0], _center(e.bbox)[1] - ac[1]) for (ac, _), e in zip(items, els)]
        fonts = [e.font.size for e in els if isinstance(e, UpdatableElement) and e.font is not None]
        roles.append(_Role(
            key,
            tuple(float(v) for v in np.median(offs, axis=0)),
            (int(np.median([e.bbox.width for e in els])), int(np.median([e.bbox.height for e in els]))),
            items[0][1],
            int(round(float(np.median(fonts)))) if fonts else None,
            max(e.bbox.width for e in els),
        ))
    order = {c: i for i, c in enumerate(Z_ORDER)}
    roles.sort(key=lambda r: (order.get(r.key[0], -1), r.key[1]))
    return roles


def _max_widths(doc: TemplateDoc) -> dict:
    out: dict = {}
    for slot in doc.event_slots:
        for key, m in zip(_member_keys(doc, slot), slot.members):
            out[key] = max(out.get(key, 0), doc.element(m).bbox.width)
    return out


# -- anchors ----------------------------------------------------------------------------------


def _along_cross(p, orientation):
    return (p[1], p[0]) if orientation is Orientation.VERTICAL else (p[0], p[1])


def _from_along_cross(a, c, orientation):
    return (c, a) if orientation is Orientation.VERTICAL else (a, c)


def track_frames(doc: TemplateDoc, n_events: int) -> list[RowFrame]:
    """Row frames of a linear template, extended by its row pitch when more rows are needed."""
    gi = doc.global_info
    o = gi.orientation
    centers = [_center(s.anchor) for s in doc.event_slots]
    ac = [_along_cross(c, o) for c in centers]
    rows = row_groups([c for _, c in ac])
    crosses = []
    for r in range(max(rows) + 1):
        crosses.append(float(np.median([c for (_, c), rr in zip(ac, rows) if rr == r])))
    start = min(a for a, _ in ac)
    end = max(a for a, _ in ac)
    if end == start:
        end = start + 1.0
    need = row_count(gi.layout, n_events)
    pitch = float(np.median(np.diff(crosses))) if len(crosses) > 1 else 3.0 * max(doc.event_slots[0].anchor.height, 8)
    while len(crosses) < need:
        crosses.append(crosses[-1] + pitch)
    return [RowFrame(_from_along_cross(start, c, o), _from_along_cross(end, c, o)) for c in crosses[: max(need, 1)]]


def _path_tangents(points) -> list[tuple[float, float]]:
    p = np.asarray(points, float)
    if len(p) < 2:
        return [(1.0, 0.0)] * len(p)
    out = []
    for i in range(len(p)):
        a, b = p[max(i - 1, 0)], p[min(i + 1, len(p) - 1)]
        out.append((float(b[0] - a[0]), float(b[1] - a[1])))
    return out


def _path_positions(points, n):
    """First n points of a path, or n points resampled along it by arc length."""
    if n <= len(points):
        pts = [tuple(int(round(v)) for v in p) for p in points[:n]]
        return pts, _path_tangents(points)[:n]
    if len(points) < 2:
        raise InsufficientSlots("cannot extend a path with fewer than two anchors")
    placed = _along_path(points, n)
    return [p for p, _ in placed], [tuple(map(float, t)) for _, t in placed]


def event_anchors(job: RenderJob):
    """Anchor centers and tangents for every event of the job."""
    doc, o = job.template, job.template.global_info.orientation
    if job.options.anchors is not None:
        return list(job.options.anchors), list(job.options.tangents or [axis_vector(o)] * len(job.data))
    n = len(job.data)
    if doc.global_info.representation is Representation.ARBITRARY:
        pts = [_center(s.anchor) for s in doc.event_slots]
        return _path_positions(pts, n)
    scale = job.options.scale or doc.global_info.scale
    frames = track_frames(doc, n)
    pos = anchor_positions([d.time for d in job.data], scale, doc.global_info.layout, frames)
    return pos, [axis_vector(o)] * n


# -- text ---------------------------------------------------------------------------------------


def fit_text(label: str, base_size: int, target: BBox, max_width: Optional[int]):
    """(text, size) for a slot: snap the size to the slot, then shrink and ellipsize on overflow.

    Candidate sizes are scored by the size the template estimator would read
    off the rendered label, so its bias cancels against the template's own
    estimate; box width and distance from ``base_size`` break ties.
    """
    cands = []
    for s in range(max(4, base_size - SIZE_SNAP), base_size + SIZE_SNAP + 1):
        ink, mask = text_ink(label, s), text_mask(label, s)
        if ink is None:
            continue
        cands.append((abs(estimate_size(mask) - base_size), abs(ink[2] - target.width), abs(s - base_size), s))
    size = min(cands)[3] if cands else base_size
    if max_width is None:
        return label, size
    floor = min(size, max(4, int(math.ceil(MIN_SHRINK * base_size))))
    s = size
    while s > floor and (text_ink(label, s) or (0, 0, 0, 0))[2] > max_width:
        s -= 1
    if (text_ink(label, s) or (0, 0, 0, 0))[2] <= max_width:
        return label, s
    text = label
    while len(text) > 1 and (text_ink(text + ELLIPSIS, s) or (0, 0, 0, 0))[2] > max_width:
        text = text[:-1]
    return text.rstrip() + ELLIPSIS, s


def _text_for(el: UpdatableElement, datum: EventDatum, scale) -> Optional[str]:
    if el.category is C.EVENT_TEXT:
        return format_time(datum.time, scale)
    if el.role is TextRole.BODY:
        return None  # event data carries one annotation string; it goes to the title
    return datum.label


# -- bitmaps ------------------------------------------------------------------------------------


def fill_gaps(patch: np.ndarray, axis: int) -> np.ndarray:
    """Fill transparent runs between opaque pixels along ``axis`` with the nearest opaque color."""
    out = patch.copy()
    p = np.moveaxis(out, axis, 1)  # lines run along dimension 1
    for line in p:
        opaque = np.flatnonzero(line[:, 3] > 0)
        if opaque.size < 2:
            continue
        lo, hi = opaque[0], opaque[-1]
        idx = np.arange(lo, hi + 1)
        pos = np.searchsorted(opaque, idx)
        left = opaque[np.clip(pos - 1, 0, opaque.size - 1)]
        right = opaque[np.clip(pos, 0, opaque.size - 1)]
        near = np.where(np.abs(idx - left) <= np.abs(right - idx), left, right)
        line[lo : hi + 1] = line[near]
    return out


def stretch(patch: np.ndarray, length: int, keep_before: int, keep_after: int, axis: int) -> np.ndarray:
    """Resize along ``axis`` to ``length`` keeping both ends verbatim (nearest neighbour in between)."""
    n = patch.shape[axis]
    if length == n:
        return patch
    keep_before = max(0, min(keep_before, n))
    keep_after = max(0, min(keep_after, n - keep_before))
    mid_src = n - keep_before - keep_after
    mid_dst = max(length - keep_before - keep_after, 0)
    idx = list(range(min(keep_before, length)))
    if mid_dst:
        scale = (mid_src - 1) / max(mid_dst - 1, 1) if mid_src > 0 else 0.0
        idx += [keep_before + int(round(k * scale)) if mid_src > 0 else max(keep_before - 1, 0) for k in range(mid_dst)]
    idx += list(range(n - keep_after, n))[: max(0, length - len(idx))]
    return np.take(patch, np.asarray(idx[:length], int), axis=axis)


def _body_shapes(doc: TemplateDoc, frames: Sequence[RowFrame], tpl_frames: Sequence[RowFrame]) -> list[Bitmap]:
    o = doc.global_info.orientation
    axis = 0 if o is Orientation.VERTICAL else 1
    bodies = doc.main_bodies()
    out = []
    for r, fr in enumerate(frames):
        tf = tpl_frames[min(r, len(tpl_frames) - 1)]
        if not bodies:
            break
        body = min(bodies, key=lambda b: abs(_along_cross(_center(b.bbox), o)[1] - _along_cross(tf.start, o)[1]))
        # measure the body against the row it sits on, which need not be row r
        own_cross = _along_cross(_center(body.bbox), o)[1]
        tf = min(tpl_frames, key=lambda f: abs(_along_cross(f.start, o)[1] - own_cross))
        t_start, t_cross = _along_cross(tf.start, o)
        t_end = _along_cross(tf.end, o)[0]
        b0, c0 = _along_cross((body.bbox.left, body.bbox.top), o)
        length0 = body.bbox.height if axis == 0 else body.bbox.width
        before = int(round(t_start - b0))
        after = int(round(b0 + length0 - t_end))
        n_start, n_cross = _along_cross(fr.start, o)
        n_end = _along_cross(fr.end, o)[0]
        new_len = int(round(n_end - n_start)) + before + after
        patch = stretch(fill_gaps(body.patch, axis), max(new_len, 1), before, after, axis)
        a0 = int(round(n_start)) - before
        c = c0 + int(round(n_cross - t_cross))
        x, y = _from_along_cross(a0, c, o)
        out.append(Bitmap(int(x), int(y), patch))
    return out


def _body_polyline(doc: TemplateDoc, points) -> Optional[Polyline]:
    bodies = doc.main_bodies()
    if not bodies or len(points) < 2:
        return None
    b = bodies[0]
    px = b.patch[b.mask.bits][:, :3]
    color = tuple(int(v) for v in np.median(px, axis=0))
    # thickness: the typical opaque run across the body
    runs = b.mask.bits.sum(axis=0 if doc.global_info.orientation is not Orientation.VERTICAL else 1)
    width = float(max(1, int(np.median(runs[runs > 0])))) if runs.any() else 2.0
    return Polyline(tuple((float(x), float(y)) for x, y in points), color, width)


# -- rendering --------------------------------------------------------------------------------


def _box_at(cx: float, cy: float, w: int, h: int) -> BBox:
    return BBox(int(math.floor(cy - h / 2 + 0.5)), int(math.floor(cx - w / 2 + 0.5)), w, h)


@dataclass
class _Placed:
    category: ElementCategory
    shapes: list


def _place_reusable(el: ReusableElement, box: BBox) -> list:
    # center the patch on the requested box when sizes differ
    x = box.left + (box.width - el.bbox.width) // 2
    y = box.top + (box.height - el.bbox.height) // 2
    return [Bitmap(int(x), int(y), el.patch)]


def _place_text(el: UpdatableElement, role_font: Optional[int], box: BBox, datum, scale, max_width) -> list:
    label = _text_for(el, datum, scale)
    if not label:
        return []
    size = el.font.size if el.font is not None else role_font or max(4, int(round(box.height / 0.72)))
    color = el.font.color if el.font is not None else (0, 0, 0)
    text, size = fit_text(label, size, box, max_width)
    ink = text_ink(text, size)
    if ink is None:
        return []
    dx, dy, w, h = ink
    left = box.left + (box.width - w) // 2
    top = box.top + (box.height - h) // 2
    return [_text_shape(left - dx, top - dy, text, size, color)]


def _text_shape(x, y, text, size, color):
    return Text(int(x), int(y), text, int(size), tuple(color))


@lru_cache(maxsize=4096)
def _glyph_ink(name: str, w: int, h: int) -> Optional[tuple[int, int, int, int]]:
    """Ink box (left, top, width, height) of a glyph drawn into the box (0, 0, w, h)."""
    cov = None
    for poly in glyph_polygons(name, 2, 2, w, h):
        r = coverage(Polygon(poly, (0, 0, 0)), w + 4, h + 4)
        if r is None:
            continue
        t, l, c = r
        full = np.zeros((h + 4, w + 4))
        full[t : t + c.shape[0], l : l + c.shape[1]] = c
        cov = full if cov is None else np.maximum(cov, full)
    if cov is None or not (cov >= 0.5).any():
        return None
    ys, xs = np.nonzero(cov >= 0.5)
    return int(xs.min()) - 2, int(ys.min()) - 2, int(xs.max() - xs.min() + 1), int(ys.max() - ys.min() + 1)


def icon_draw_box(name: str, ink: BBox) -> tuple[int, int, int, int]:
    """Drawing box (x, y, w, h) whose rasterized glyph ink best covers ``ink``."""
    best = None
    for w in range(ink.width, ink.width + 3):
        for h in range(ink.height, ink.height + 3):
            g = _glyph_ink(name, w, h)
            if g is None:
                continue
            key = (abs(g[2] - ink.width) + abs(g[3] - ink.height), w + h)
            if best is None or key < best[0]:
                best = (key, (ink.left - g[0], ink.top - g[1], w, h))
    return best[1] if best else (ink.left, ink.top, ink.width, ink.height)


def _place_icon(el: UpdatableElement, box: BBox, datum) -> list:
    if not datum.icon_id:
        return []
    if datum.icon_id not in GLYPHS:
        log.warning("unknown icon %r; slot left empty", datum.icon_id)
        return []
    color = el.color or (0, 0, 0)
    x, y, w, h = icon_draw_box(datum.icon_id, box)
    return [Polygon(p, color) for p in glyph_polygons(datum.icon_id, x, y, w, h)]


def render(job: RenderJob) -> RenderResult:
    """Lay the job's data out with the template's elements and rasterize it."""
    if job.options.representation_source is not None and job.options.anchors is None:
        job = transfer_representation(job, job.options.representation_source, job.options.allow_loop)
    doc = job.template
    if not doc.event_slots:
        raise TemplateIncomplete("template has no event slots")
    gi = doc.global_info
    o = gi.orientation
    scale = job.options.scale or gi.scale
    width, height = job.options.canvas or doc.canvas
    n = len(job.data)
    n_slots = len(doc.event_slots)
    transferred = job.options.anchors is not None
    if n > n_slots and not job.options.allow_loop and gi.representation is Representation.ARBITRARY and not transferred:
        raise InsufficientSlots(f"{n} events but only {n_slots} slots and looping is disabled")

    anchors, tangents = event_anchors(job)
    marks = distinct_patches(doc, C.EVENT_MARK)
    ann_marks = distinct_patches(doc, C.ANNOTATION_MARK)
    roles = canonical_roles(doc)
    widths = _max_widths(doc)

    scene = Scene(width, height, tuple(doc.background))
    eid = 0
    if transferred:
        line = _body_polyline(doc, anchors)
        if line is not None:
            scene.add(line, eid, C.MAIN_BODY.value)
            eid += 1
    elif gi.representation is Representation.LINEAR:
        for bmp in _body_shapes(doc, track_frames(doc, n), track_frames(doc, n_slots)):
            scene.add(bmp, eid, C.MAIN_BODY.value)
            eid += 1
    else:
        for body in doc.main_bodies():
            scene.add(Bitmap(body.bbox.left, body.bbox.top, body.patch), eid, C.MAIN_BODY.value)
            eid += 1

    mark_index: list[Optional[int]] = []
    for i, (datum, (ax, ay), tan) in enumerate(zip(job.data, anchors, tangents)):
        rotate = transferred and needs_rotation(tan, o)
        placed: list[_Placed] = []
        used_mark = None
        if i < n_slots and not rotate:
            slot = doc.event_slots[i]
            a = slot.anchor
            a_left, a_top = ax - a.width // 2, ay - a.height // 2
            items = []
            for key, m in zip(_member_keys(doc, slot), slot.members):
                el = doc.element(m)
                box = BBox(a_top + m.offset[1], a_left + m.offset[0], el.bbox.width, el.bbox.height)
                items.append((key, el, box, None))
        else:
            items = []
            for r in roles:
                dx, dy = rotate_offset(*r.offset) if rotate else r.offset
                el = doc.element(r.example)
                items.append((r.key, el, _box_at(ax + dx, ay + dy, *r.size), r.font_size))
        for key, el, box, role_font in items:
            cat = el.category
            if cat is C.EVENT_MARK and marks:
                k = i % len(marks)
                used_mark = k
                shapes = _place_reusable(doc.reusable[marks[k]], box)
            elif cat is C.ANNOTATION_MARK and ann_marks:
                shapes = _place_reusable(doc.reusable[ann_marks[i % len(ann_marks)]], box)
            elif isinstance(el, ReusableElement):
                shapes = _place_reusable(el, box)
            elif cat is C.ANNOTATION_ICON:
                shapes = _place_icon(el, box, datum)
            else:
                shapes = _place_text(el, role_font, box, datum, scale, widths.get(key))
            if shapes:
                placed.append(_Placed(cat, shapes))
        mark_index.append(used_mark)
        for p in sorted(placed, key=lambda p: Z_ORDER.index(p.category) if p.category in Z_ORDER else -1):
            for s in p.shapes:
                scene.add(s, eid, p.category.value, i)
            eid += 1

    svg = scene.to_svg()
    tl = timeline_from_scene(scene, gi, job.data, svg=svg, drop_hidden=True)
    return RenderResult(svg, tl.image, tl, [tuple(map(int, a)) for a in anchors], mark_index)


def transfer_representation(target: RenderJob, source: TemplateDoc, allow_loop: Optional[bool] = None) -> RenderJob:
    """Place the target's events at the source template's event positions.

    Positions are the source's slot anchors scaled to the target canvas; the
    first |data| slots are used.  With more events than slots, looping
    resamples the source path by arc length instead.
    """
    allow_loop = target.options.allow_loop if allow_loop is None else allow_loop
    if not source.event_slots:
        raise TemplateIncomplete("source template has no event slots")
    n, k = len(target.data), len(source.event_slots)
    if n > k and not allow_loop:
        raise InsufficientSlots(f"{n} events but the source has only {k} slots")
    tw, th = target.options.canvas or target.template.canvas
    sw, sh = source.canvas
    sx, sy = tw / sw, th / sh
    pts = [(_center(s.anchor)[0] * sx, _center(s.anchor)[1] * sy) for s in source.event_slots]
    pos, tan = _path_positions(pts, n)
    opts = replace(target.options, representation_source=None, anchors=tuple(pos), tangents=tuple(tan))
    return RenderJob(target.template, target.data, opts)


def recompose(doc: TemplateDoc, data: Sequence[EventDatum] = ()) -> np.ndarray:
    """Rebuild the source image from the template alone.

    Reusable and text patches go back where they were cut from; icon slots
    are drawn from ``data`` (slot i shows the icon of event i).
    """
    w, h = doc.canvas
    scene = Scene(w, h, tuple(doc.background))
    for el in doc.reusable:
        scene.add(Bitmap(el.bbox.left, el.bbox.top, el.patch))
    for k, slot in enumerate(doc.event_slots):
        datum = data[k] if k < len(data) else None
        for m in slot.members:
            el = doc.element(m)
            if m.kind != "updatable":
                continue
            if el.patch is not None:
                rgba = np.dstack([el.patch, np.full(el.patch.shape[:2], 255, np.uint8)])
                scene.add(Bitmap(el.bbox.left, el.bbox.top, rgba))
            elif el.category is C.ANNOTATION_ICON and datum is not None:
                for s in _place_icon(el, el.bbox, datum):
                    scene.add(s)
    return rasterize(scene).image

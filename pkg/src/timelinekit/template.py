"""Template documents: reusable patches, updatable slots and per-event geometry."""
from __future__ import annotations

import base64
import enum
import io
import json
import logging
import math
import subprocess
import tempfile
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from PIL import Image

from .core import (
    BBox,
    Detection,
    ElementCategory,
    GlobalInfo,
    Layout,
    Orientation,
    PixelMask,
    Representation,
    TEXT_CATEGORIES,
    rle_decode,
    rle_encode,
)
from .errors import MalformedRle, NoElements, NoEvents, NotTextLike, SchemaError
from .reconstruct import EventCluster, cluster_events
from .scene import text_ink
from .segment.grabcut import GrabCutParams, refine_mask

log = logging.getLogger(__name__)
C = ElementCategory

SCHEMA_VERSION = 1
MIN_CONTRAST = 24.0  # luminance gap below which a box holds no text
DENSE_ROW = 0.5  # rows with at least this share of a typical row's ink lie above the baseline
ROW_GAP = 8  # anchors further apart than this across the axis sit in different rows


class TextRole(str, enum.Enum):
    TITLE = "Title"
    BODY = "Body"


@dataclass(frozen=True)
class FontInfo:
    size: int
    color: tuple[int, int, int]
    family: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "size", int(self.size))
        object.__setattr__(self, "color", tuple(int(c) for c in self.color))
        if self.size < 4:
            raise ValueError(f"font size must be >= 4 px, got {self.size}")
        if len(self.color) != 3 or not all(0 <= c <= 255 for c in self.color):
            raise ValueError(f"color out of gamut: {self.color}")


def _same_array(a, b) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return a.shape == b.shape and a.dtype == b.dtype and bool(np.array_equal(a, b))


@dataclass(eq=False)
class ReusableElement:
    """A reusable element; ``patch`` is RGBA with alpha 255 exactly under ``mask``."""

    category: ElementCategory
    bbox: BBox
    mask: PixelMask
    patch: np.ndarray

    def __eq__(self, other):
        return (
            isinstance(other, ReusableElement)
            and (self.category, self.bbox, self.mask) == (other.category, other.bbox, other.mask)
            and _same_array(self.patch, other.patch)
        )


@dataclass(eq=False)
class UpdatableElement:
    category: ElementCategory
    bbox: BBox
    font: Optional[FontInfo] = None
    role: Optional[TextRole] = None
    color: Optional[tuple[int, int, int]] = None  # icons
    text: Optional[str] = None  # filled by an OCR hook
    patch: Optional[np.ndarray] = None  # RGB crop kept for later text recognition

    def __eq__(self, other):
        return (
            isinstance(other, UpdatableElement)
            and (self.category, self.bbox, self.font, self.role, self.color, self.text)
            == (other.category, other.bbox, other.font, other.role, other.color, other.text)
            and _same_array(self.patch, other.patch)
        )


@dataclass(frozen=True)
class SlotMember:
    kind: str  # "reusable" or "updatable"
    index: int
    offset: tuple[int, int]  # (dx, dy) of the member's top-left from the anchor's top-left


@dataclass(frozen=True)
class EventSlot:
    anchor: BBox
    members: tuple[SlotMember, ...]


@dataclass
class TemplateDoc:
    global_info: GlobalInfo
    canvas: tuple[int, int]
    background: tuple[int, int, int]
    reusable: list[ReusableElement]
    updatable: list[UpdatableElement]
    event_slots: list[EventSlot]
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        self.validate()

    def validate(self):
        for e in self.reusable:
            if not e.category.reusable:
                raise ValueError(f"{e.category.value} is not reusable")
        for e in self.updatable:
            if not e.category.updatable:
                raise ValueError(f"{e.category.value} is not updatable")
        for k, slot in enumerate(self.event_slots):
            for m in slot.members:
                pool = self.reusable if m.kind == "reusable" else self.updatable if m.kind == "updatable" else None
                if pool is None or not 0 <= m.index < len(pool):
                    raise ValueError(f"event slot {k} references a missing {m.kind} element {m.index}")
                if not all(math.isfinite(v) for v in m.offset):
                    raise ValueError(f"event slot {k} has a non-finite offset")

    def element(self, m: SlotMember):
        return (self.reusable if m.kind == "reusable" else self.updatable)[m.index]

    def main_bodies(self) -> list[ReusableElement]:
        return [e for e in self.reusable if e.category is C.MAIN_BODY]


# -- hooks ------------------------------------------------------------------------------


@dataclass
class Hooks:
    """External services: each takes an RGB text patch and returns a string or None."""

    font_family: Optional[Callable[[np.ndarray], Optional[str]]] = None
    ocr: Optional[Callable[[np.ndarray], Optional[str]]] = None


def command_hook(argv: Sequence[str], timeout: float = 30.0) -> Callable[[np.ndarray], Optional[str]]:
    """Wrap a command that takes a PNG path as its last argument and prints a result."""

    def run(patch: np.ndarray) -> Optional[str]:
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "patch.png"
            Image.fromarray(patch).save(path)
            try:
                out = subprocess.run([*argv, str(path)], capture_output=True, text=True, timeout=timeout, check=True)
            except (OSError, subprocess.SubprocessError) as exc:
                log.warning("hook %s failed: %s", argv[0], exc)
                return None
        return out.stdout.strip() or None

    return run


# -- text attributes ------------------------------------------------------------------------


@lru_cache(maxsize=1)
def cap_ratio() -> float:
    """Mean height of a capital and an ascender as a fraction of the font size."""
    return (text_ink("H", 200)[3] + text_ink("l", 200)[3]) / 400.0


def _luminance(rgb: np.ndarray) -> np.ndarray:
    return rgb[..., :3].astype(float) @ np.array([0.299, 0.587, 0.114])


def extract_font_attrs(image, bbox: BBox) -> FontInfo:
    """Font size and color read off the pixels of a text box.

    Luminance is split by 2-means.  The cluster that dominates a thin ring
    around the box is the background and the other is the ink; without a ring the
    minority cluster is the ink.  The color is the median of the ink pixels
    at nearly full contrast (edge pixels are blends).  The size is the span
    from the first ink row down to the baseline over the font's cap ratio.
    """
    img = np.asarray(image)[..., :3]
    crop = img[bbox.slices()]
    h, w = crop.shape[:2]
    if h == 0 or w == 0:
        raise NotTextLike("empty box")
    lum = _luminance(crop)
    lo, hi = float(lum.min()), float(lum.max())
    if hi - lo < MIN_CONTRAST:
        raise NotTextLike(f"luminance range {hi - lo:.1f} is too flat for text")
    c0, c1 = lo, hi
    for _ in range(100):
        t = (c0 + c1) / 2
        dark = lum <= t
        n0, n1 = float(lum[dark].mean()), float(lum[~dark].mean())
        if (n0, n1) == (c0, c1):
            break
        c0, c1 = n0, n1
    ring = _ring(img, bbox)
    if ring.size:
        # the background color dominates the pixels just outside the box
        ink = ~dark if np.mean(_luminance(ring) <= t) > 0.5 else dark
    else:
        ink = dark if dark.sum() <= (~dark).sum() else ~dark
    if ink.sum() < 2 or ink.all():
        raise NotTextLike("luminance clusters are degenerate")
    bg_lum = float(np.median(_luminance(ring))) if ring.size else float(np.median(lum[~ink]))
    contrast = np.abs(lum - bg_lum)
    core = ink & (contrast >= 0.9 * contrast[ink].max())
    color = tuple(int(round(v)) for v in np.median(crop[core].reshape(-1, 3), axis=0))
    return FontInfo(estimate_size(ink), color)


def estimate_size(ink: np.ndarray) -> int:
    """Font size from a boolean ink bitmap of one line of text."""
    return max(4, int(round(ink_ascent(ink) / cap_ratio())))


def ink_ascent(ink: np.ndarray) -> int:
    """Rows from the first ink row down to the baseline, inclusive.

    The baseline is the last row holding at least half the ink of a typical
    row, so sparse descenders drop out.
    """
    rows = ink.sum(axis=1)
    top = int(np.flatnonzero(rows)[0])
    base = int(np.flatnonzero(rows >= DENSE_ROW * np.median(rows[rows > 0]))[-1])
    return base - top + 1


def _ring(img: np.ndarray, bbox: BBox, width: int = 2) -> np.ndarray:
    h, w = img.shape[:2]
    outer = BBox.from_edges(bbox.top - width, bbox.left - width, bbox.bottom + width, bbox.right + width).clip(w, h)
    sel = np.ones((outer.height, outer.width), bool)
    y, x = bbox.top - outer.top, bbox.left - outer.left
    sel[y : y + bbox.height, x : x + bbox.width] = False
    return img[outer.slices()][sel]


def split_title_body(texts: Sequence[tuple[BBox, Optional[FontInfo]]]) -> list[TextRole]:
    """Largest font is the title; ties go to the first text in reading order."""
    if not texts:
        return []
    order = sorted(range(len(texts)), key=lambda i: (texts[i][0].top, texts[i][0].left, i))
    sizes = [f.size if f is not None else 0 for _, f in texts]
    best = max(order, key=lambda i: (sizes[i], -order.index(i)))
    return [TextRole.TITLE if i == best else TextRole.BODY for i in range(len(texts))]


# -- anchors and reading order ----------------------------------------------------------------


def _along_cross(point, orientation) -> tuple[float, float]:
    x, y = point
    return (y, x) if Orientation(orientation) is Orientation.VERTICAL else (x, y)


def row_groups(crosses: Sequence[float], gap: float = ROW_GAP) -> list[int]:
    """Row index of each value, rows numbered in increasing cross position."""
    order = sorted(range(len(crosses)), key=lambda i: crosses[i])
    rows = [0] * len(crosses)
    r = 0
    for prev, cur in zip(order, order[1:]):
        if crosses[cur] - crosses[prev] > gap:
            r += 1
        rows[cur] = r
    return rows


def reading_order(centers: Sequence[tuple[float, float]], gi: GlobalInfo) -> list[int]:
    """Indices of event anchors in data order for the template's layout."""
    n = len(centers)
    if n == 0:
        return []
    if gi.representation is Representation.ARBITRARY:
        p = np.asarray(centers, float)
        d = p - p.mean(axis=0)
        v = np.linalg.eigh(d.T @ d)[1][:, -1] if n > 1 else np.array([1.0, 0.0])
        # paths run left to right and/or top to bottom
        v = v if v[0] + v[1] > 0 else -v
        proj = d @ v
        return sorted(range(n), key=lambda i: (proj[i], i))
    ac = [_along_cross(c, gi.orientation) for c in centers]
    rows = row_groups([c for _, c in ac])
    if gi.layout is Layout.SEGMENTED:
        group = rows
    elif gi.layout is Layout.FACETED_SEGMENTED:
        group = [r // 2 for r in rows]
    else:
        group = [0] * n
    return sorted(range(n), key=lambda i: (group[i], ac[i][0], rows[i], i))


# -- extraction -------------------------------------------------------------------------------


def estimate_background(image) -> tuple[int, int, int]:
    """Most frequent color of the image."""
    flat = np.asarray(image)[..., :3].reshape(-1, 3)
    keys = (flat[:, 0].astype(np.int64) << 16) | (flat[:, 1].astype(np.int64) << 8) | flat[:, 2]
    vals, counts = np.unique(keys, return_counts=True)
    k = int(vals[np.argmax(counts)])
    return (k >> 16) & 255, (k >> 8) & 255, k & 255


def _mask_canvas(shape, dets: Sequence[Detection]) -> np.ndarray:
    canvas = np.zeros(shape, bool)
    for d in dets:
        if d.mask is not None:
            b = d.bbox.clip(shape[1], shape[0])
            if b is None:
                continue
            y, x = b.top - d.bbox.top, b.left - d.bbox.left
            canvas[b.slices()] |= d.mask.bits[y : y + b.height, x : x + b.width]
    return canvas


def _reusable(image, det: Detection, occluders: np.ndarray, refine: bool, params) -> ReusableElement:
    h, w = image.shape[:2]
    box = det.bbox.clip(w, h)
    mask = det.mask
    if mask is not None and box != det.bbox:
        y, x = box.top - det.bbox.top, box.left - det.bbox.left
        bits = mask.bits[y : y + box.height, x : x + box.width]
        mask = PixelMask(bits) if bits.any() else None
    if refine:
        mask = refine_mask(image, box, mask, params)
    bits = mask.bits.copy() if mask is not None else np.ones((box.height, box.width), bool)
    visible = bits & ~occluders[box.slices()]
    if visible.any():
        bits = visible
    patch = np.zeros((box.height, box.width, 4), np.uint8)
    patch[..., :3] = np.asarray(image)[box.slices()][..., :3]
    patch[..., 3] = np.where(bits, 255, 0)
    patch[~bits, :3] = 0
    return ReusableElement(det.category, box, PixelMask(bits), patch)


def _icon_color(image, det: Detection) -> Optional[tuple[int, int, int]]:
    crop = np.asarray(image)[det.bbox.slices()][..., :3]
    if det.mask is not None:
        px = crop[det.mask.bits]
    else:
        px = crop.reshape(-1, 3)
    if px.size == 0:
        return None
    lum = _luminance(px)
    ring = _ring(np.asarray(image)[..., :3], det.bbox)
    bg = float(np.median(_luminance(ring))) if ring.size else float(np.median(lum))
    c = np.abs(lum - bg)
    core = px[c >= 0.9 * c.max()] if c.max() > 0 else px
    return tuple(int(round(v)) for v in np.median(core, axis=0))


def _clusters(dets, gi) -> list[EventCluster]:
    try:
        clusters = cluster_events(dets, gi.orientation)
    except NoElements:
        raise NoEvents("no event clusters in the detections") from None
    if not clusters:
        raise NoEvents("no event clusters in the detections")
    for cl in clusters:
        if cl.anchor_box is None:
            boxes = [dets[m].bbox for m in cl.members]
            top = min(b.top for b in boxes)
            left = min(b.left for b in boxes)
            cl.anchor_box = BBox.from_edges(top, left, max(b.bottom for b in boxes), max(b.right for b in boxes))
    return clusters


def extract_template(
    image,
    global_info: GlobalInfo,
    dets: Sequence[Detection],
    *,
    refine: bool = True,
    params: Optional[GrabCutParams] = None,
    hooks: Optional[Hooks] = None,
) -> TemplateDoc:
    """Build the template document from an image and its repaired detections."""
    image = np.asarray(image)[..., :3]
    h, w = image.shape[:2]
    dets = list(dets)
    clusters = _clusters(dets, global_info)
    hooks = hooks or Hooks()

    texts = [d for d in dets if d.category in TEXT_CATEGORIES or d.category is C.ANNOTATION_ICON]
    overlays = _mask_canvas((h, w), texts)
    non_body = _mask_canvas((h, w), [d for d in dets if d.category is not C.MAIN_BODY])

    reusable: list[ReusableElement] = []
    for d in dets:
        if d.category is C.MAIN_BODY:
            reusable.append(_reusable(image, d, non_body, refine, params))

    updatable: list[UpdatableElement] = []
    slots: list[EventSlot] = []
    order = reading_order([cl.anchor_box.center for cl in clusters], global_info)
    for k in order:
        cl = clusters[k]
        a = cl.anchor_box
        members = []
        slot_texts = []
        for i in cl.indices:
            d = dets[i]
            if d.bbox.clip(w, h) is None:
                continue
            if d.category.reusable:
                el = _reusable(image, d, overlays, refine, params)
                reusable.append(el)
                members.append(SlotMember("reusable", len(reusable) - 1, (el.bbox.left - a.left, el.bbox.top - a.top)))
                continue
            box = d.bbox.clip(w, h)
            font = color = text = patch = None
            if d.category in TEXT_CATEGORIES:
                patch = image[box.slices()].copy()
                try:
                    font = extract_font_attrs(image, box)
                except NotTextLike:
                    log.debug("text box %s is not text-like", box)
                if font is not None and hooks.font_family is not None:
                    font = FontInfo(font.size, font.color, hooks.font_family(patch))
                if hooks.ocr is not None:
                    text = hooks.ocr(patch)
                if d.category is C.ANNOTATION_TEXT:
                    slot_texts.append(len(updatable))
            else:
                color = _icon_color(image, d)
            updatable.append(UpdatableElement(d.category, box, font, None, color, text, patch))
            members.append(SlotMember("updatable", len(updatable) - 1, (box.left - a.left, box.top - a.top)))
        roles = split_title_body([(updatable[j].bbox, updatable[j].font) for j in slot_texts])
        for j, role in zip(slot_texts, roles):
            updatable[j].role = role
        slots.append(EventSlot(a, tuple(members)))
    if not slots:
        raise NoEvents("no event clusters in the detections")
    return TemplateDoc(global_info, (w, h), estimate_background(image), reusable, updatable, slots)


# -- serialization ------------------------------------------------------------------------------


def _png_b64(arr: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _png_decode(text: str, mode: str, fld: str) -> np.ndarray:
    try:
        raw = base64.b64decode(text, validate=True)
        with Image.open(io.BytesIO(raw)) as im:
            if im.mode != mode:
                raise SchemaError(f"patch must be {mode}, got {im.mode}", field=fld)
            return np.asarray(im).copy()
    except SchemaError:
        raise
    except Exception as exc:
        raise SchemaError(f"bad embedded PNG: {exc}", field=fld) from None


def template_to_json(doc: TemplateDoc) -> dict:
    def font(f: FontInfo):
        out = {"size": f.size, "color": list(f.color)}
        if f.family is not None:
            out["family"] = f.family
        return out

    upd = []
    for e in doc.updatable:
        obj = {"category": e.category.value, "bbox": e.bbox.as_list()}
        if e.font is not None:
            obj["font"] = font(e.font)
        if e.role is not None:
            obj["role"] = e.role.value
        if e.color is not None:
            obj["color"] = list(e.color)
        if e.text is not None:
            obj["text"] = e.text
        if e.patch is not None:
            obj["patch_png"] = _png_b64(e.patch)
        upd.append(obj)
    return {
        "schema_version": doc.schema_version,
        "global": doc.global_info.to_json(),
        "canvas": list(doc.canvas),
        "background": list(doc.background),
        "reusable": [
            {"category": e.category.value, "bbox": e.bbox.as_list(), "mask_rle": rle_encode(e.mask),
             "patch_png": _png_b64(e.patch)}
            for e in doc.reusable
        ],
        "updatable": upd,
        "event_slots": [
            {"anchor": s.anchor.as_list(),
             "members": [{"kind": m.kind, "index": m.index, "offset": list(m.offset)} for m in s.members]}
            for s in doc.event_slots
        ],
    }


def serialize(doc: TemplateDoc) -> bytes:
    return (json.dumps(template_to_json(doc), indent=1) + "\n").encode("utf-8")


def _need(cond, msg, fld):
    if not cond:
        raise SchemaError(msg, field=fld)


def _ints(v, n, fld, lo=None, hi=None):
    _need(isinstance(v, list) and len(v) == n and all(isinstance(x, int) and not isinstance(x, bool) for x in v),
          f"expected {n} integers", fld)
    if lo is not None:
        _need(all(lo <= x <= hi for x in v), f"values must lie in [{lo}, {hi}]", fld)
    return v


def _bbox(v, fld) -> BBox:
    _ints(v, 4, fld)
    _need(v[2] >= 1 and v[3] >= 1, "bbox width and height must be >= 1", fld)
    return BBox.from_list(v)


def _category(v, fld):
    try:
        return ElementCategory(v)
    except ValueError:
        raise SchemaError(f"unknown category {v!r}", field=fld) from None


def template_from_json(obj) -> TemplateDoc:
    _need(isinstance(obj, dict), "template must be an object", None)
    _need(obj.get("schema_version") == SCHEMA_VERSION, f"unsupported schema_version {obj.get('schema_version')!r}",
          "schema_version")
    for key in ("global", "canvas", "background", "reusable", "updatable", "event_slots"):
        _need(key in obj, f"missing {key}", key)
    try:
        gi = GlobalInfo.from_json(obj["global"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad global info: {exc}", field="global") from None
    canvas = tuple(_ints(obj["canvas"], 2, "canvas", 1, 1 << 20))
    background = tuple(_ints(obj["background"], 3, "background", 0, 255))

    reusable = []
    _need(isinstance(obj["reusable"], list), "reusable must be a list", "reusable")
    for k, e in enumerate(obj["reusable"]):
        where = f"reusable[{k}]"
        _need(isinstance(e, dict), "element must be an object", where)
        for key in ("category", "bbox", "mask_rle", "patch_png"):
            _need(key in e, f"missing {key}", f"{where}.{key}")
        cat = _category(e["category"], f"{where}.category")
        _need(cat.reusable, f"{cat.value} is not reusable", f"{where}.category")
        box = _bbox(e["bbox"], f"{where}.bbox")
        try:
            mask = rle_decode(e["mask_rle"], box.width, box.height)
        except MalformedRle as exc:
            raise SchemaError(str(exc), field=f"{where}.mask_rle") from None
        patch = _png_decode(e["patch_png"], "RGBA", f"{where}.patch_png")
        _need(patch.shape[:2] == (box.height, box.width), "patch size differs from bbox", f"{where}.patch_png")
        reusable.append(ReusableElement(cat, box, mask, patch))

    updatable = []
    _need(isinstance(obj["updatable"], list), "updatable must be a list", "updatable")
    for k, e in enumerate(obj["updatable"]):
        where = f"updatable[{k}]"
        _need(isinstance(e, dict), "element must be an object", where)
        for key in ("category", "bbox"):
            _need(key in e, f"missing {key}", f"{where}.{key}")
        cat = _category(e["category"], f"{where}.category")
        _need(cat.updatable, f"{cat.value} is not updatable", f"{where}.category")
        box = _bbox(e["bbox"], f"{where}.bbox")
        font = None
        if e.get("font") is not None:
            f = e["font"]
            _need(isinstance(f, dict) and "size" in f and "color" in f, "font needs size and color", f"{where}.font")
            _need(isinstance(f["size"], int) and not isinstance(f["size"], bool) and f["size"] >= 4,
                  "font size must be an integer >= 4", f"{where}.font.size")
            color = _ints(f["color"], 3, f"{where}.font.color", 0, 255)
            family = f.get("family")
            _need(family is None or isinstance(family, str), "font family must be a string", f"{where}.font.family")
            font = FontInfo(f["size"], tuple(color), family)
        role = None
        if e.get("role") is not None:
            try:
                role = TextRole(e["role"])
            except ValueError:
                raise SchemaError(f"unknown role {e['role']!r}", field=f"{where}.role") from None
        color = tuple(_ints(e["color"], 3, f"{where}.color", 0, 255)) if e.get("color") is not None else None
        text = e.get("text")
        _need(text is None or isinstance(text, str), "text must be a string", f"{where}.text")
        patch = _png_decode(e["patch_png"], "RGB", f"{where}.patch_png") if e.get("patch_png") is not None else None
        updatable.append(UpdatableElement(cat, box, font, role, color, text, patch))

    slots = []
    _need(isinstance(obj["event_slots"], list), "event_slots must be a list", "event_slots")
    for k, s in enumerate(obj["event_slots"]):
        where = f"event_slots[{k}]"
        _need(isinstance(s, dict) and "anchor" in s and "members" in s, "slot needs anchor and members", where)
        anchor = _bbox(s["anchor"], f"{where}.anchor")
        _need(isinstance(s["members"], list), "members must be a list", f"{where}.members")
        members = []
        for j, m in enumerate(s["members"]):
            mw = f"{where}.members[{j}]"
            _need(isinstance(m, dict) and {"kind", "index", "offset"} <= set(m), "member needs kind, index, offset", mw)
            _need(m["kind"] in ("reusable", "updatable"), f"unknown member kind {m['kind']!r}", f"{mw}.kind")
            pool = reusable if m["kind"] == "reusable" else updatable
            _need(isinstance(m["index"], int) and not isinstance(m["index"], bool) and 0 <= m["index"] < len(pool),
                  "member index out of range", f"{mw}.index")
            off = _ints(m["offset"], 2, f"{mw}.offset")
            members.append(SlotMember(m["kind"], m["index"], tuple(off)))
        slots.append(EventSlot(anchor, tuple(members)))
    return TemplateDoc(gi, canvas, background, reusable, updatable, slots, SCHEMA_VERSION)


def deserialize(data) -> TemplateDoc:
    if isinstance(data, (bytes, bytearray)):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError:
            raise SchemaError("template is not UTF-8") from None
    try:
        obj = json.loads(data)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    return template_from_json(obj)


def save_template(doc: TemplateDoc, path) -> None:
    Path(path).write_bytes(serialize(doc))


def load_template(path) -> TemplateDoc:
    return deserialize(Path(path).read_bytes())

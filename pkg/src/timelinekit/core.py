"""Pixel-grid geometry, masks, the element taxonomy and the shared data model.

All geometry lives on the integer pixel grid.  A :class:`BBox` covers the
pixels ``left <= x < left + width`` and ``top <= y < top + height``; masks are
stored relative to the box that owns them.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import MalformedRle, MissingMask


class ElementCategory(str, enum.Enum):
    EVENT_MARK = "EventMark"
    EVENT_TEXT = "EventText"
    ANNOTATION_MARK = "AnnotationMark"
    ANNOTATION_TEXT = "AnnotationText"
    ANNOTATION_ICON = "AnnotationIcon"
    MAIN_BODY = "MainBody"

    @property
    def reusable(self) -> bool:
        return self in REUSABLE

    @property
    def updatable(self) -> bool:
        return self in UPDATABLE


REUSABLE = frozenset(
    {ElementCategory.EVENT_MARK, ElementCategory.ANNOTATION_MARK, ElementCategory.MAIN_BODY}
)
UPDATABLE = frozenset(
    {ElementCategory.EVENT_TEXT, ElementCategory.ANNOTATION_TEXT, ElementCategory.ANNOTATION_ICON}
)
TEXT_CATEGORIES = frozenset({ElementCategory.EVENT_TEXT, ElementCategory.ANNOTATION_TEXT})


class Provenance(str, enum.Enum):
    DETECTED = "Detected"
    RECOVERED = "Recovered"


class Representation(str, enum.Enum):
    LINEAR = "Linear"
    ARBITRARY = "Arbitrary"


class Scale(str, enum.Enum):
    CHRONOLOGICAL = "Chronological"
    RELATIVE = "Relative"
    LOGARITHMIC = "Logarithmic"
    SEQUENTIAL = "Sequential"
    SEQUENTIAL_INTERIM = "SequentialInterim"


class Layout(str, enum.Enum):
    UNIFIED = "Unified"
    FACETED = "Faceted"
    SEGMENTED = "Segmented"
    FACETED_SEGMENTED = "FacetedSegmented"


class Orientation(str, enum.Enum):
    HORIZONTAL = "Horizontal"
    VERTICAL = "Vertical"
    OTHER = "Other"


VIABLE_COMBINATIONS = frozenset(
    [(Representation.LINEAR, s, l) for s in Scale for l in Layout]
    + [(Representation.ARBITRARY, Scale.SEQUENTIAL, Layout.UNIFIED)]
)

RECOVERED_SCORE = 0.0


@dataclass(frozen=True)
class BBox:
    top: int
    left: int
    width: int
    height: int

    def __post_init__(self):
        for name in ("top", "left", "width", "height"):
            v = getattr(self, name)
            if isinstance(v, (bool, np.bool_)) or not isinstance(v, (int, np.integer)):
                raise TypeError(f"BBox.{name} must be an integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if self.width < 1 or self.height < 1:
            raise ValueError(f"BBox width/height must be >= 1, got {self.width}x{self.height}")

    @property
    def bottom(self) -> int:
        """Exclusive lower edge."""
        return self.top + self.height

    @property
    def right(self) -> int:
        """Exclusive right edge."""
        return self.left + self.width

    @property
    def area(self) -> int:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        """(x, y) center in continuous pixel coordinates."""
        return (self.left + self.width / 2.0, self.top + self.height / 2.0)

    @property
    def aspect(self) -> float:
        return self.width / self.height

    def as_list(self) -> list[int]:
        return [self.top, self.left, self.width, self.height]

    @classmethod
    def from_list(cls, values: Sequence[int]) -> "BBox":
        top, left, width, height = values
        return cls(top, left, width, height)

    @classmethod
    def from_edges(cls, top: int, left: int, bottom: int, right: int) -> "BBox":
        """Build from exclusive bottom/right edges."""
        return cls(top, left, right - left, bottom - top)

    def translate(self, dx: int, dy: int) -> "BBox":
        return BBox(self.top + dy, self.left + dx, self.width, self.height)

    def clip(self, width: int, height: int) -> Optional["BBox"]:
        top, left = max(self.top, 0), max(self.left, 0)
        bottom, right = min(self.bottom, height), min(self.right, width)
        if bottom <= top or right <= left:
            return None
        return BBox.from_edges(top, left, bottom, right)

    def intersection(self, other: "BBox") -> Optional["BBox"]:
        top, left = max(self.top, other.top), max(self.left, other.left)
        bottom, right = min(self.bottom, other.bottom), min(self.right, other.right)
        if bottom <= top or right <= left:
            return None
        return BBox.from_edges(top, left, bottom, right)

    def slices(self) -> tuple[slice, slice]:
        return slice(self.top, self.bottom), slice(self.left, self.right)


class PixelMask:
    """Immutable binary mask anchored to an owning bbox (row-major, height x width)."""

    __slots__ = ("_bits",)

    def __init__(self, bits):
        arr = np.array(bits, dtype=bool, copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"mask must be a non-empty 2-D grid, got shape {arr.shape}")
        arr.setflags(write=False)
        self._bits = arr

    @property
    def bits(self) -> np.ndarray:
        return self._bits

    @property
    def width(self) -> int:
        return self._bits.shape[1]

    @property
    def height(self) -> int:
        return self._bits.shape[0]

    @property
    def popcount(self) -> int:
        return int(self._bits.sum())

    @classmethod
    def full(cls, width: int, height: int) -> "PixelMask":
        return cls(np.ones((height, width), dtype=bool))

    def fits(self, bbox: BBox) -> bool:
        return self.width == bbox.width and self.height == bbox.height

    def tight_box(self) -> Optional[tuple[int, int, int, int]]:
        """(top, left, height, width) of the set bits, or None when empty."""
        rows = np.flatnonzero(self._bits.any(axis=1))
        if rows.size == 0:
            return None
        cols = np.flatnonzero(self._bits.any(axis=0))
        return int(rows[0]), int(cols[0]), int(rows[-1] - rows[0] + 1), int(cols[-1] - cols[0] + 1)

    def __eq__(self, other):
        if not isinstance(other, PixelMask):
            return NotImplemented
        return self._bits.shape == other._bits.shape and bool(np.array_equal(self._bits, other._bits))

    def __hash__(self):
        return hash((self._bits.shape, self._bits.tobytes()))

    def __repr__(self):
        return f"PixelMask({self.width}x{self.height}, popcount={self.popcount})"


@dataclass(frozen=True)
class Detection:
    bbox: BBox
    category: ElementCategory
    score: float
    mask: Optional[PixelMask] = None
    provenance: Provenance = Provenance.DETECTED

    def __post_init__(self):
        object.__setattr__(self, "category", ElementCategory(self.category))
        object.__setattr__(self, "provenance", Provenance(self.provenance))
        score = float(self.score)
        if not (0.0 <= score <= 1.0) or score != score:
            raise ValueError(f"score must be in [0, 1], got {self.score!r}")
        object.__setattr__(self, "score", score)
        if self.mask is not None:
            if not self.mask.fits(self.bbox):
                raise ValueError(
                    f"mask {self.mask.width}x{self.mask.height} does not match bbox "
                    f"{self.bbox.width}x{self.bbox.height}"
                )
            if self.mask.popcount < 1:
                raise ValueError("a detection mask needs at least one set pixel")
        if self.provenance is Provenance.RECOVERED and self.mask is not None:
            raise ValueError("recovered detections carry no mask")

    def replace(self, **changes) -> "Detection":
        values = dict(
            bbox=self.bbox,
            category=self.category,
            score=self.score,
            mask=self.mask,
            provenance=self.provenance,
        )
        values.update(changes)
        return Detection(**values)


@dataclass(frozen=True)
class GlobalInfo:
    representation: Representation = Representation.LINEAR
    scale: Scale = Scale.SEQUENTIAL
    layout: Layout = Layout.UNIFIED
    orientation: Orientation = Orientation.HORIZONTAL

    def __post_init__(self):
        object.__setattr__(self, "representation", Representation(self.representation))
        object.__setattr__(self, "scale", Scale(self.scale))
        object.__setattr__(self, "layout", Layout(self.layout))
        object.__setattr__(self, "orientation", Orientation(self.orientation))
        if (self.representation, self.scale, self.layout) not in VIABLE_COMBINATIONS:
            raise ValueError(
                f"non-viable combination {self.representation.value}/"
                f"{self.scale.value}/{self.layout.value}"
            )

    def to_json(self) -> dict:
        return {
            "representation": self.representation.value,
            "scale": self.scale.value,
            "layout": self.layout.value,
            "orientation": self.orientation.value,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GlobalInfo":
        return cls(obj["representation"], obj["scale"], obj["layout"], obj["orientation"])


@dataclass(frozen=True)
class EventDatum:
    time: float
    label: str
    icon_id: Optional[str] = None

    def to_json(self) -> dict:
        out = {"time": self.time, "label": self.label}
        if self.icon_id is not None:
            out["icon"] = self.icon_id
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "EventDatum":
        return cls(obj["time"], obj["label"], obj.get("icon"))


@dataclass(frozen=True)
class Element:
    """One ground-truth element; ``color`` is the flat fill it was drawn with."""

    category: ElementCategory
    bbox: BBox
    mask: PixelMask
    color: Optional[tuple[int, int, int]] = None


@dataclass
class AnnotatedTimeline:
    image: np.ndarray
    global_info: GlobalInfo
    elements: list[Element]
    events: list[list[int]]
    data: list[EventDatum] = field(default_factory=list)
    background: tuple[int, int, int] = (255, 255, 255)

    def __post_init__(self):
        seen: dict[int, int] = {}
        for k, group in enumerate(self.events):
            for idx in group:
                if idx in seen:
                    raise ValueError(f"element {idx} appears in events {seen[idx]} and {k}")
                seen[idx] = k
        for idx, el in enumerate(self.elements):
            if el.category is not ElementCategory.MAIN_BODY and idx not in seen:
                raise ValueError(f"element {idx} ({el.category.value}) belongs to no event")

    def as_detections(self, score: float = 1.0) -> list[Detection]:
        return [Detection(el.bbox, el.category, score, el.mask) for el in self.elements]


# -- geometry ---------------------------------------------------------------


def iou(a: BBox, b: BBox) -> float:
    inter = a.intersection(b)
    if inter is None:
        return 0.0
    i = inter.area
    return i / (a.area + b.area - i)


def union_bbox(a: BBox, b: BBox) -> BBox:
    return BBox.from_edges(
        min(a.top, b.top), min(a.left, b.left), max(a.bottom, b.bottom), max(a.right, b.right)
    )


def mask_iou(a: Detection, b: Detection) -> float:
    if a.mask is None or b.mask is None:
        raise MissingMask("mask_iou needs both detections to carry a mask")
    pa, pb = a.mask.popcount, b.mask.popcount
    inter = a.bbox.intersection(b.bbox)
    overlap = 0
    if inter is not None:
        ya, xa = inter.top - a.bbox.top, inter.left - a.bbox.left
        yb, xb = inter.top - b.bbox.top, inter.left - b.bbox.left
        h, w = inter.height, inter.width
        overlap = int(
            np.count_nonzero(a.mask.bits[ya : ya + h, xa : xa + w] & b.mask.bits[yb : yb + h, xb : xb + w])
        )
    union = pa + pb - overlap
    return overlap / union if union else 0.0


def paste_mask(canvas: np.ndarray, bbox: BBox, mask: Optional[PixelMask]) -> None:
    """OR ``mask`` (or the full box when None) into a boolean canvas, clipping at the edges."""
    h, w = canvas.shape
    clipped = bbox.clip(w, h)
    if clipped is None:
        return
    if mask is None:
        canvas[clipped.slices()] = True
        return
    y0, x0 = clipped.top - bbox.top, clipped.left - bbox.left
    canvas[clipped.slices()] |= mask.bits[y0 : y0 + clipped.height, x0 : x0 + clipped.width]


def mask_from_region(region: np.ndarray, top: int = 0, left: int = 0):
    """Tight (BBox, PixelMask) around the set pixels of a boolean array, or None."""
    rows = np.flatnonzero(region.any(axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(region.any(axis=0))
    r0, r1, c0, c1 = rows[0], rows[-1] + 1, cols[0], cols[-1] + 1
    bbox = BBox(int(top + r0), int(left + c0), int(c1 - c0), int(r1 - r0))
    return bbox, PixelMask(region[r0:r1, c0:c1])


# -- run-length encoding ----------------------------------------------------


def rle_encode(mask: PixelMask) -> list[int]:
    """Row-major runs of alternating 0/1 counts, the first run counting zeros."""
    flat = mask.bits.ravel()
    if flat.size == 0:
        return []
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return [int(r) for r in runs]


def rle_decode(runs: Sequence[int], width: int, height: int) -> PixelMask:
    total = width * height
    if not isinstance(runs, (list, tuple, np.ndarray)):
        raise MalformedRle(f"RLE must be an integer array, got {type(runs).__name__}")
    counts = []
    for r in runs:
        if isinstance(r, bool) or not isinstance(r, (int, np.integer)) or r < 0:
            raise MalformedRle(f"RLE counts must be non-negative integers, got {r!r}")
        counts.append(int(r))
    if sum(counts) != total:
        raise MalformedRle(f"RLE covers {sum(counts)} pixels, expected {total}")
    if any(c == 0 for c in counts[1:]):
        raise MalformedRle("only the leading run may be empty")
    values = np.arange(len(counts)) % 2 == 1
    flat = np.repeat(values, counts)
    return PixelMask(flat.reshape(height, width))

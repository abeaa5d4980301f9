"""Vector scenes: an SVG subset plus the rasterizer that turns it into pixels.

Both the synthetic generator and the renderer build a :class:`Scene`, write it
out as SVG, and rasterize the parsed SVG, so bitmaps always derive from the
vector document.  Shapes are rasterized with 4x4 supersampling; a pixel is
owned by the topmost primitive covering at least half of it.
"""
from __future__ import annotations

import base64
import io
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Union

import numpy as np
from PIL import Image as PILImage
from PIL import ImageDraw, ImageFont

SS = 4
SVG_NS = "http://www.w3.org/2000/svg"
FONT_FAMILY = "timelinekit-sans"

RGB = tuple[int, int, int]


def hex_color(c: RGB) -> str:
    return "#%02x%02x%02x" % tuple(int(v) for v in c)


def parse_color(s: str) -> RGB:
    s = s.strip().lstrip("#")
    if len(s) != 6:
        raise ValueError(f"bad color {s!r}")
    return tuple(int(s[i : i + 2], 16) for i in (0, 2, 4))


@dataclass(frozen=True)
class Rect:
    x: float
    y: float
    w: float
    h: float
    fill: RGB
    rx: float = 0.0


@dataclass(frozen=True)
class Ellipse:
    cx: float
    cy: float
    rx: float
    ry: float
    fill: RGB


@dataclass(frozen=True)
class Polygon:
    points: tuple
    fill: RGB


@dataclass(frozen=True)
class Polyline:
    points: tuple
    stroke: RGB
    width: float


@dataclass(frozen=True)
class Text:
    x: int  # baseline-left anchor
    y: int
    text: str
    size: int
    fill: RGB


@dataclass(frozen=True, eq=False)
class Bitmap:
    x: int
    y: int
    rgba: np.ndarray

    def __eq__(self, other):
        return (
            isinstance(other, Bitmap)
            and (self.x, self.y) == (other.x, other.y)
            and np.array_equal(self.rgba, other.rgba)
        )


Shape = Union[Rect, Ellipse, Polygon, Polyline, Text, Bitmap]


@dataclass
class Item:
    shape: Shape
    element: Optional[int] = None  # element index in the owning scene
    category: Optional[str] = None
    event: Optional[int] = None


@dataclass
class Scene:
    width: int
    height: int
    background: RGB = (255, 255, 255)
    items: list[Item] = field(default_factory=list)

    def add(self, shape: Shape, element=None, category=None, event=None) -> None:
        self.items.append(Item(shape, element, category, event))

    def to_svg(self) -> str:
        return scene_to_svg(self)

    @classmethod
    def from_svg(cls, text: str) -> "Scene":
        return svg_to_scene(text)


# -- fonts --------------------------------------------------------------------


@lru_cache(maxsize=64)
def font(size: int) -> ImageFont.FreeTypeFont:
    return ImageFont.load_default(size)


@lru_cache(maxsize=4096)
def _ink(text: str, size: int):
    f = font(size)
    x0, y0, x1, y1 = f.getbbox(text, anchor="ls")
    pad = 2
    w, h = x1 - x0 + 2 * pad, y1 - y0 + 2 * pad
    if w <= 2 * pad or h <= 2 * pad:
        return None
    img = PILImage.new("L", (w, h), 0)
    ImageDraw.Draw(img).text((pad - x0, pad - y0), text, fill=255, font=f, anchor="ls")
    a = np.asarray(img) >= 128
    if not a.any():
        return None
    rows = np.flatnonzero(a.any(axis=1))
    cols = np.flatnonzero(a.any(axis=0))
    box = (
        int(cols[0] - pad + x0),
        int(rows[0] - pad + y0),
        int(cols[-1] - cols[0] + 1),
        int(rows[-1] - rows[0] + 1),
    )
    crop = a[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]
    crop.flags.writeable = False
    return box, crop


def text_ink(text: str, size: int) -> Optional[tuple[int, int, int, int]]:
    """Ink box (dx, dy, w, h) of ``text`` relative to its baseline-left anchor.

    Ink means pixels with coverage >= 0.5; the box is measured by rendering,
    not taken from font metrics, so placement by ink is pixel exact.
    """
    r = _ink(text, size)
    return r[0] if r else None


def text_mask(text: str, size: int) -> Optional[np.ndarray]:
    """Boolean ink of ``text`` cropped to its ink box (read-only)."""
    r = _ink(text, size)
    return r[1] if r else None


def text_at_ink(left: int, top: int, text: str, size: int, fill: RGB) -> Text:
    """A Text primitive whose ink box starts at (left, top)."""
    ink = text_ink(text, size)
    dx, dy = (ink[0], ink[1]) if ink else (0, 0)
    return Text(int(left - dx), int(top - dy), text, int(size), tuple(fill))


# -- SVG ------------------------------------------------------------------------


def _num(v: float) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)


def _points(pts) -> str:
    return " ".join(f"{_num(x)},{_num(y)}" for x, y in pts)


def _parse_points(s: str) -> tuple:
    out = []
    for tok in s.split():
        x, y = tok.split(",")
        out.append((float(x), float(y)))
    return tuple(out)


def _png_b64(rgba: np.ndarray) -> str:
    buf = io.BytesIO()
    PILImage.fromarray(np.ascontiguousarray(rgba, dtype=np.uint8), "RGBA").save(buf, "PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _png_decode(data: str) -> np.ndarray:
    raw = base64.b64decode(data)
    return np.asarray(PILImage.open(io.BytesIO(raw)).convert("RGBA")).copy()


def scene_to_svg(scene: Scene) -> str:
    root = ET.Element(
        "svg",
        {
            "xmlns": SVG_NS,
            "width": str(scene.width),
            "height": str(scene.height),
            "viewBox": f"0 0 {scene.width} {scene.height}",
        },
    )
    ET.SubElement(root, "rect", {"x": "0", "y": "0", "width": str(scene.width),
                                 "height": str(scene.height), "fill": hex_color(scene.background),
                                 "data-role": "background"})
    for item in scene.items:
        s = item.shape
        if isinstance(s, Rect):
            attrs = {"x": _num(s.x), "y": _num(s.y), "width": _num(s.w), "height": _num(s.h),
                     "fill": hex_color(s.fill)}
            if s.rx:
                attrs["rx"] = _num(s.rx)
            tag = "rect"
        elif isinstance(s, Ellipse):
            tag = "ellipse"
            attrs = {"cx": _num(s.cx), "cy": _num(s.cy), "rx": _num(s.rx), "ry": _num(s.ry),
                     "fill": hex_color(s.fill)}
        elif isinstance(s, Polygon):
            tag = "polygon"
            attrs = {"points": _points(s.points), "fill": hex_color(s.fill)}
        elif isinstance(s, Polyline):
            tag = "polyline"
            attrs = {"points": _points(s.points), "fill": "none", "stroke": hex_color(s.stroke),
                     "stroke-width": _num(s.width), "stroke-linejoin": "round", "stroke-linecap": "butt"}
        elif isinstance(s, Text):
            tag = "text"
            attrs = {"x": str(s.x), "y": str(s.y), "font-size": str(s.size),
                     "font-family": FONT_FAMILY, "fill": hex_color(s.fill)}
        elif isinstance(s, Bitmap):
            tag = "image"
            h, w = s.rgba.shape[:2]
            attrs = {"x": str(s.x), "y": str(s.y), "width": str(w), "height": str(h),
                     "href": "data:image/png;base64," + _png_b64(s.rgba)}
        else:
            raise TypeError(f"unsupported shape {type(s).__name__}")
        if item.element is not None:
            attrs["data-element"] = str(item.element)
        if item.category is not None:
            attrs["data-category"] = str(item.category)
        if item.event is not None:
            attrs["data-event"] = str(item.event)
        node = ET.SubElement(root, tag, attrs)
        if isinstance(s, Text):
            node.text = s.text
    ET.indent(root)
    return ET.tostring(root, encoding="unicode") + "\n"


def _strip(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def svg_to_scene(text: str) -> Scene:
    root = ET.fromstring(text)
    if _strip(root.tag) != "svg":
        raise ValueError("not an svg document")
    scene = Scene(int(float(root.get("width"))), int(float(root.get("height"))))
    for node in root:
        tag = _strip(node.tag)
        a = node.attrib
        if a.get("data-role") == "background":
            scene.background = parse_color(a["fill"])
            continue
        if tag == "rect":
            shape = Rect(float(a["x"]), float(a["y"]), float(a["width"]), float(a["height"]),
                         parse_color(a["fill"]), float(a.get("rx", 0)))
        elif tag == "ellipse":
            shape = Ellipse(float(a["cx"]), float(a["cy"]), float(a["rx"]), float(a["ry"]),
                            parse_color(a["fill"]))
        elif tag == "polygon":
            shape = Polygon(_parse_points(a["points"]), parse_color(a["fill"]))
        elif tag == "polyline":
            shape = Polyline(_parse_points(a["points"]), parse_color(a["stroke"]), float(a["stroke-width"]))
        elif tag == "text":
            shape = Text(int(a["x"]), int(a["y"]), node.text or "", int(a["font-size"]), parse_color(a["fill"]))
        elif tag == "image":
            href = a.get("href") or a.get("{http://www.w3.org/1999/xlink}href", "")
            prefix = "data:image/png;base64,"
            if not href.startswith(prefix):
                raise ValueError("only embedded PNG images are supported")
            shape = Bitmap(int(a["x"]), int(a["y"]), _png_decode(href[len(prefix):]))
        else:
            raise ValueError(f"unsupported svg element <{tag}>")
        el = a.get("data-element")
        ev = a.get("data-event")
        scene.add(shape, int(el) if el is not None else None, a.get("data-category"),
                  int(ev) if ev is not None else None)
    return scene


# -- rasterizer -------------------------------------------------------------------


def _bounds(s: Shape):
    if isinstance(s, Rect):
        return s.x, s.y, s.x + s.w, s.y + s.h
    if isinstance(s, Ellipse):
        return s.cx - s.rx, s.cy - s.ry, s.cx + s.rx, s.cy + s.ry
    if isinstance(s, (Polygon, Polyline)):
        pts = np.asarray(s.points, float)
        pad = s.width / 2 if isinstance(s, Polyline) else 0.0
        return pts[:, 0].min() - pad, pts[:, 1].min() - pad, pts[:, 0].max() + pad, pts[:, 1].max() + pad
    raise TypeError(type(s))


def _samples(x0: int, y0: int, w: int, h: int):
    off = (np.arange(SS) + 0.5) / SS
    xs = (x0 + np.arange(w)[:, None] + off[None, :]).ravel()
    ys = (y0 + np.arange(h)[:, None] + off[None, :]).ravel()
    return np.meshgrid(xs, ys)


def _inside(s: Shape, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    if isinstance(s, Rect):
        inside = (px >= s.x) & (px < s.x + s.w) & (py >= s.y) & (py < s.y + s.h)
        if s.rx > 0:
            r = min(s.rx, s.w / 2, s.h / 2)
            cx = np.clip(px, s.x + r, s.x + s.w - r)
            cy = np.clip(py, s.y + r, s.y + s.h - r)
            inside &= (px - cx) ** 2 + (py - cy) ** 2 <= r * r
        return inside
    if isinstance(s, Ellipse):
        return ((px - s.cx) / s.rx) ** 2 + ((py - s.cy) / s.ry) ** 2 <= 1.0
    if isinstance(s, Polygon):
        pts = np.asarray(s.points, float)
        inside = np.zeros(px.shape, bool)
        xj, yj = pts[-1]
        for xi, yi in pts:
            # even-odd crossing test against edge (i, j)
            if yi != yj:
                crosses = (yi > py) != (yj > py)
                xint = (xj - xi) * (py - yi) / (yj - yi) + xi
                inside ^= crosses & (px < xint)
            xj, yj = xi, yi
        return inside
    if isinstance(s, Polyline):
        pts = np.asarray(s.points, float)
        r2 = (s.width / 2) ** 2
        inside = np.zeros(px.shape, bool)
        # the sample grid is regular: work on the rows/columns near each segment
        xs, ys = px[0], py[:, 0]
        pad = s.width / 2
        for (ax, ay), (bx, by) in zip(pts[:-1], pts[1:]):
            c0, c1 = np.searchsorted(xs, [min(ax, bx) - pad, max(ax, bx) + pad], side="left")
            r0, r1 = np.searchsorted(ys, [min(ay, by) - pad, max(ay, by) + pad], side="left")
            c1, r1 = min(c1 + 1, len(xs)), min(r1 + 1, len(ys))
            if c0 >= c1 or r0 >= r1:
                continue
            wx, wy = px[r0:r1, c0:c1], py[r0:r1, c0:c1]
            dx, dy = bx - ax, by - ay
            ll = dx * dx + dy * dy
            t = np.zeros(wx.shape) if ll == 0 else np.clip(((wx - ax) * dx + (wy - ay) * dy) / ll, 0, 1)
            inside[r0:r1, c0:c1] |= (wx - ax - t * dx) ** 2 + (wy - ay - t * dy) ** 2 <= r2
        return inside
    raise TypeError(type(s))


def coverage(s: Shape, width: int, height: int):
    """Coverage of a shape as ``(top, left, array in [0,1])`` clipped to the canvas, or None."""
    if isinstance(s, Text):
        ink_font = font(s.size)
        x0, y0, x1, y1 = ink_font.getbbox(s.text, anchor="ls")
        left, top = s.x + x0 - 1, s.y + y0 - 1
        w, h = x1 - x0 + 2, y1 - y0 + 2
        if w <= 2 or h <= 2:
            return None
        img = PILImage.new("L", (w, h), 0)
        ImageDraw.Draw(img).text((s.x - left, s.y - top), s.text, fill=255, font=ink_font, anchor="ls")
        cov = np.asarray(img, dtype=float) / 255.0
    elif isinstance(s, Bitmap):
        left, top = s.x, s.y
        cov = s.rgba[..., 3].astype(float) / 255.0
    else:
        bx0, by0, bx1, by1 = _bounds(s)
        left, top = int(np.floor(bx0)), int(np.floor(by0))
        w, h = int(np.ceil(bx1)) - left, int(np.ceil(by1)) - top
        # clip before sampling; off-canvas samples are wasted work
        cl, ct = max(left, 0), max(top, 0)
        cr, cb = min(left + w, width), min(top + h, height)
        if cr <= cl or cb <= ct:
            return None
        px, py = _samples(cl, ct, cr - cl, cb - ct)
        hit = _inside(s, px, py).reshape(cb - ct, SS, cr - cl, SS)
        return ct, cl, hit.mean(axis=(1, 3))
    return _clip(top, left, cov, width, height)


def _clip(top, left, cov, width, height):
    h, w = cov.shape
    t0, l0 = max(top, 0), max(left, 0)
    t1, l1 = min(top + h, height), min(left + w, width)
    if t1 <= t0 or l1 <= l0:
        return None
    return t0, l0, cov[t0 - top : t1 - top, l0 - left : l1 - left]


@dataclass
class Raster:
    image: np.ndarray  # (H, W, 3) uint8
    owner: np.ndarray  # (H, W) int32, element index owning each pixel or -1

    def element_region(self, element: int):
        """Tight (top, left, bool mask) of the visible pixels of ``element``, or None."""
        ys, xs = np.nonzero(self.owner == element)
        if ys.size == 0:
            return None
        t, l = ys.min(), xs.min()
        m = np.zeros((ys.max() - t + 1, xs.max() - l + 1), bool)
        m[ys - t, xs - l] = True
        return int(t), int(l), m


def rasterize(scene: Scene) -> Raster:
    canvas = np.empty((scene.height, scene.width, 3), float)
    canvas[:] = scene.background
    owner = np.full((scene.height, scene.width), -1, np.int32)
    for item in scene.items:
        s = item.shape
        got = coverage(s, scene.width, scene.height)
        if got is None:
            continue
        top, left, cov = got
        h, w = cov.shape
        region = canvas[top : top + h, left : left + w]
        if isinstance(s, Bitmap):
            color = s.rgba[top - s.y : top - s.y + h, left - s.x : left - s.x + w, :3].astype(float)
        else:
            color = np.asarray(s.stroke if isinstance(s, Polyline) else s.fill, float)
        a = cov[..., None]
        region[:] = region * (1.0 - a) + color * a
        if item.element is not None:
            owner[top : top + h, left : left + w][cov >= 0.5] = item.element
    return Raster(np.clip(np.rint(canvas), 0, 255).astype(np.uint8), owner)

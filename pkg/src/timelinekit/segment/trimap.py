from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from ..core import BBox, PixelMask
from ..errors import EmptyForeground

log = logging.getLogger(__name__)

DEFINITE_BG = 0
DEFINITE_FG = 1
PROBABLE_BG = 2
PROBABLE_FG = 3

FG_ERODE_PX = 2
BG_DISTANCE_PX = 3


@dataclass(frozen=True)
class Trimap:
    """Per-pixel prior over a region of interest anchored at (top, left) in the image."""

    labels: np.ndarray
    top: int = 0
    left: int = 0
    bbox: Optional[BBox] = None

    @property
    def roi(self) -> BBox:
        h, w = self.labels.shape
        return BBox(self.top, self.left, w, h)

    def definite(self) -> np.ndarray:
        return (self.labels == DEFINITE_BG) | (self.labels == DEFINITE_FG)

    def count(self, label: int) -> int:
        return int(np.count_nonzero(self.labels == label))


def _roi(image_shape, bbox: BBox, margin: Optional[int]) -> BBox:
    h, w = image_shape[:2]
    if margin is None:
        return BBox(0, 0, w, h)
    grown = BBox(bbox.top - margin, bbox.left - margin, bbox.width + 2 * margin, bbox.height + 2 * margin)
    return grown.clip(w, h)


def init_trimap(
    image,
    bbox: BBox,
    mask: Optional[PixelMask] = None,
    *,
    margin: Optional[int] = None,
    fallback: bool = True,
    erode_px: int = FG_ERODE_PX,
    bg_distance_px: int = BG_DISTANCE_PX,
) -> Trimap:
    """Seed a trimap from a detector's box and (optionally) its coarse mask.

    The box plays the part of the user's rectangle and the mask the part of
    the user's strokes.  ``margin`` crops the region of interest to the box
    grown by that many pixels; ``None`` keeps the whole image.
    """
    shape = np.shape(image)
    h, w = shape[:2]
    if bbox.clip(w, h) != bbox:
        raise ValueError(f"bbox {bbox} lies outside the {w}x{h} image")
    roi = _roi(shape, bbox, margin)
    labels = np.full((roi.height, roi.width), DEFINITE_BG, dtype=np.uint8)
    y0, x0 = bbox.top - roi.top, bbox.left - roi.left
    inner = (slice(y0, y0 + bbox.height), slice(x0, x0 + bbox.width))
    labels[inner] = PROBABLE_FG
    trimap = Trimap(labels, roi.top, roi.left, bbox)
    if mask is None:
        return trimap
    if not mask.fits(bbox):
        raise ValueError("mask does not match bbox")

    # outside the box counts as background for both distance maps
    padded = np.pad(mask.bits, 1, constant_values=False)
    sure = ndimage.distance_transform_edt(padded)[1:-1, 1:-1] > erode_px
    if not sure.any():
        if not fallback:
            raise EmptyForeground(f"eroding the mask by {erode_px} px leaves no pixels")
        log.debug("mask vanished under erosion; using the box alone")
        return trimap
    far = ndimage.distance_transform_edt(~mask.bits) > bg_distance_px
    box_labels = labels[inner]
    box_labels[far] = PROBABLE_BG
    box_labels[sure] = DEFINITE_FG
    return trimap

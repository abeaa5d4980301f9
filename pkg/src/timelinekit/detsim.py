"""Noisy detections from ground truth, and the detection wire format.

The wire format is the contract for real detectors::

    {"image": "<path>",
     "detections": [{"category": "EventMark", "score": 0.93,
                     "bbox": [top, left, width, height],
                     "mask_rle": [...],              # optional
                     "provenance": "Recovered"}]}    # optional, default Detected
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage as ndi

from .core import (
    AnnotatedTimeline,
    BBox,
    Detection,
    ElementCategory,
    PixelMask,
    Provenance,
    iou,
    rle_decode,
    rle_encode,
)
from .errors import MalformedRle, SchemaError

CATEGORIES = tuple(ElementCategory)


@dataclass(frozen=True)
class ScoreModel:
    mu_tp: float = 0.9
    sigma_tp: float = 0.05
    mu_fp: float = 0.6
    sigma_fp: float = 0.15


@dataclass(frozen=True)
class NoiseProfile:
    dup_rate: float = 0.05
    drop_rate: float = 0.05
    misclass_rate: float = 0.03
    jitter_px: float = 2.0
    mask_coarsen_px: int = 2
    score_model: ScoreModel = ScoreModel()
    hallucination_rate: float = 0.0

    def __post_init__(self):
        for name in ("dup_rate", "drop_rate", "misclass_rate", "hallucination_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be a probability, got {v}")
        sm = self.score_model
        if self.jitter_px < 0 or self.mask_coarsen_px < 0 or sm.sigma_tp < 0 or sm.sigma_fp < 0:
            raise ValueError("noise scales must be non-negative")

    @classmethod
    def zero(cls) -> "NoiseProfile":
        return cls(0.0, 0.0, 0.0, 0.0, 0, ScoreModel(0.9, 0.0, 0.6, 0.0))

    @classmethod
    def from_dict(cls, obj: dict) -> "NoiseProfile":
        obj = dict(obj)
        sm = obj.pop("score_model", None)
        if isinstance(sm, (list, tuple)):
            sm = ScoreModel(*sm)
        elif isinstance(sm, dict):
            sm = ScoreModel(**sm)
        fields = {k: v for k, v in obj.items() if k in cls.__dataclass_fields__}
        return cls(**fields, **({"score_model": sm} if sm is not None else {}))

    def to_dict(self) -> dict:
        return asdict(self)


STANDARD = NoiseProfile()


def _score(rng, mu, sigma) -> float:
    if sigma == 0:
        return float(min(max(mu, 0.0), 1.0))
    for _ in range(1000):
        v = rng.normal(mu, sigma)
        if 0.0 <= v <= 1.0:
            return float(v)
    return float(min(max(mu, 0.0), 1.0))


def _jitter(rng, box: BBox, sigma: float, width: int, height: int) -> BBox:
    if sigma == 0:
        return box
    t, l, b, r = (int(round(v + rng.normal(0, sigma))) for v in (box.top, box.left, box.bottom, box.right))
    t, l = max(0, min(t, height - 1)), max(0, min(l, width - 1))
    b, r = max(t + 1, min(b, height)), max(l + 1, min(r, width))
    return BBox.from_edges(t, l, b, r)


def _disk(r: int) -> np.ndarray:
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return xx * xx + yy * yy <= r * r


def _mask_for(rng, gt_box: BBox, gt_mask: PixelMask, box: BBox, coarsen: int, shape) -> PixelMask:
    """Coarsen the ground-truth mask and crop it to ``box``.

    Works in a window around both boxes, padded by the coarsening radius.
    """
    h, w = shape
    pad = coarsen + 1
    top = max(0, min(gt_box.top, box.top) - pad)
    left = max(0, min(gt_box.left, box.left) - pad)
    bottom = min(h, max(gt_box.bottom, box.bottom) + pad)
    right = min(w, max(gt_box.right, box.right) + pad)
    win = np.zeros((bottom - top, right - left), bool)
    win[gt_box.top - top : gt_box.bottom - top, gt_box.left - left : gt_box.right - left] = gt_mask.bits
    if coarsen > 0:
        r = int(rng.integers(-coarsen, coarsen + 1))
        if r > 0:
            win = ndi.binary_dilation(win, _disk(r))
        elif r < 0:
            eroded = ndi.binary_erosion(win, _disk(-r))
            win = eroded if eroded.any() else win
    crop = win[box.top - top : box.bottom - top, box.left - left : box.right - left]
    if not crop.any():
        return PixelMask.full(box.width, box.height)
    return PixelMask(crop)


def _duplicate_box(rng, box: BBox, width: int, height: int) -> BBox:
    """An overlapping copy with IoU in [0.5, 0.9] against ``box``."""
    for _ in range(50):
        if rng.random() < 0.5:
            # part of the element: cut a fraction off one or two sides
            f = rng.uniform(0.55, 0.9)
            if box.width >= box.height:
                nw = max(1, int(round(box.width * f)))
                left = box.left + (0 if rng.random() < 0.5 else box.width - nw)
                cand = BBox(box.top, left, nw, box.height)
            else:
                nh = max(1, int(round(box.height * f)))
                top = box.top + (0 if rng.random() < 0.5 else box.height - nh)
                cand = BBox(top, box.left, box.width, nh)
        else:
            dx = int(round(rng.uniform(-0.2, 0.2) * box.width))
            dy = int(round(rng.uniform(-0.2, 0.2) * box.height))
            cand = box.translate(dx, dy).clip(width, height)
            if cand is None:
                continue
        if 0.5 <= iou(cand, box) <= 0.9:
            return cand
    return box


def perturb(gt: AnnotatedTimeline, profile: NoiseProfile, seed: int = 0, outcomes: Optional[list] = None) -> list[Detection]:
    """Simulated detector output for one annotated timeline.

    When ``outcomes`` is a list, one ``(dropped, mislabeled, duplicated)``
    tuple per ground-truth element is appended to it.
    """
    rng = np.random.default_rng(seed)
    h, w = gt.image.shape[:2]
    sm = profile.score_model
    out: list[Detection] = []
    for el in gt.elements:
        # draw every random decision up front so one element's outcome
        # does not shift the stream for the others
        dropped = rng.random() < profile.drop_rate
        mislabel = rng.random() < profile.misclass_rate
        duplicate = rng.random() < profile.dup_rate
        sub = np.random.default_rng(rng.integers(2**63))
        if outcomes is not None:
            outcomes.append((dropped, mislabel and not dropped, duplicate and not dropped))
        if dropped:
            continue
        cat = el.category
        if mislabel:
            others = [c for c in CATEGORIES if c is not el.category]
            cat = others[int(sub.integers(len(others)))]
        box = _jitter(sub, el.bbox, profile.jitter_px, w, h)
        score = _score(sub, sm.mu_fp, sm.sigma_fp) if mislabel else _score(sub, sm.mu_tp, sm.sigma_tp)
        mask = _mask_for(sub, el.bbox, el.mask, box, profile.mask_coarsen_px, (h, w))
        out.append(Detection(box, cat, score, mask))
        if duplicate:
            dbox = _duplicate_box(sub, box, w, h)
            dmask = _mask_for(sub, el.bbox, el.mask, dbox, profile.mask_coarsen_px, (h, w))
            out.append(Detection(dbox, cat, _score(sub, sm.mu_tp, sm.sigma_tp), dmask))
    n_fake = int(rng.binomial(len(gt.elements), profile.hallucination_rate)) if profile.hallucination_rate else 0
    for _ in range(n_fake):
        bw, bh = int(rng.integers(6, 40)), int(rng.integers(6, 20))
        top, left = int(rng.integers(0, max(1, h - bh))), int(rng.integers(0, max(1, w - bw)))
        box = BBox(top, left, min(bw, w - left), min(bh, h - top))
        cat = CATEGORIES[int(rng.integers(len(CATEGORIES)))]
        out.append(Detection(box, cat, _score(rng, sm.mu_fp, sm.sigma_fp), PixelMask.full(box.width, box.height)))
    return out


# -- wire format --------------------------------------------------------------------


def detection_to_json(d: Detection) -> dict:
    out = {"category": d.category.value, "score": d.score, "bbox": d.bbox.as_list()}
    if d.mask is not None:
        out["mask_rle"] = rle_encode(d.mask)
    if d.provenance is not Provenance.DETECTED:
        out["provenance"] = d.provenance.value
    return out


def dumps_detections(image: Optional[str], dets: Sequence[Detection]) -> str:
    lines = ["{", f'  "image": {json.dumps(image)},', '  "detections": [']
    body = [f"    {json.dumps(detection_to_json(d))}" for d in dets]
    lines.append(",\n".join(body))
    lines += ["  ]", "}"]
    return "\n".join(line for line in lines if line) + "\n"


def save_detections(path, image: Optional[str], dets: Sequence[Detection]) -> None:
    Path(path).write_text(dumps_detections(image, dets))


def _line_of(text: str, index: int) -> Optional[int]:
    # dumps_detections writes one detection per line; find the k-th one
    starts = [i for i, line in enumerate(text.splitlines(), 1) if line.lstrip().startswith('{"category"')]
    return starts[index] if index < len(starts) else None


def _need(cond, msg, fld, line):
    if not cond:
        raise SchemaError(msg, field=fld, line=line)


def detection_from_json(obj, index: int = 0, line: Optional[int] = None) -> Detection:
    where = f"detections[{index}]"
    _need(isinstance(obj, dict), "detection must be an object", where, line)
    for key in ("category", "score", "bbox"):
        _need(key in obj, f"missing {key}", f"{where}.{key}", line)
    try:
        cat = ElementCategory(obj["category"])
    except ValueError:
        raise SchemaError(f"unknown category {obj['category']!r}", field=f"{where}.category", line=line) from None
    score = obj["score"]
    _need(isinstance(score, (int, float)) and not isinstance(score, bool) and math.isfinite(score),
          "score must be a number", f"{where}.score", line)
    _need(0.0 <= score <= 1.0, f"score {score} outside [0, 1]", f"{where}.score", line)
    bb = obj["bbox"]
    _need(isinstance(bb, list) and len(bb) == 4 and all(isinstance(v, int) and not isinstance(v, bool) for v in bb),
          "bbox must be four integers [top, left, width, height]", f"{where}.bbox", line)
    _need(bb[2] >= 1 and bb[3] >= 1, "bbox width and height must be >= 1", f"{where}.bbox", line)
    box = BBox.from_list(bb)
    try:
        prov = Provenance(obj.get("provenance", Provenance.DETECTED.value))
    except ValueError:
        raise SchemaError("unknown provenance", field=f"{where}.provenance", line=line) from None
    mask = None
    if obj.get("mask_rle") is not None:
        try:
            mask = rle_decode(obj["mask_rle"], box.width, box.height)
        except MalformedRle as exc:
            raise SchemaError(str(exc), field=f"{where}.mask_rle", line=line) from None
        _need(mask.popcount > 0, "mask is empty", f"{where}.mask_rle", line)
    _need(not (prov is Provenance.RECOVERED and mask is not None), "recovered detections carry no mask",
          f"{where}.mask_rle", line)
    return Detection(box, cat, float(score), mask, prov)


def loads_detections(text: str):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    _need(isinstance(doc, dict), "top level must be an object", None, 1)
    _need("detections" in doc and isinstance(doc["detections"], list), "missing detections list", "detections", None)
    image = doc.get("image")
    _need(image is None or isinstance(image, str), "image must be a path string", "image", None)
    dets = [detection_from_json(o, k, _line_of(text, k)) for k, o in enumerate(doc["detections"])]
    return image, dets


def load_detections(path):
    """Read a wire-format file; returns (image reference, detections)."""
    return loads_detections(Path(path).read_text())

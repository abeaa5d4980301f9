"""Iterated graph-cut segmentation with GMM color models (GrabCut).

Energy per labeling: the hard-assignment GMM cost of every pixel under the
model of its label, plus ``gamma * exp(-beta * |z_m - z_n|^2) / dist`` for
each 8-connected pair that is cut.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..core import PixelMask
from ..errors import EmptyForeground
from .gmm import EPSILON, GmmModel, fit_gmm, refit
from .maxflow import FlowNetwork, max_flow
from .trimap import DEFINITE_BG, DEFINITE_FG, PROBABLE_FG, Trimap

log = logging.getLogger(__name__)

_NEIGHBOURS = ((0, 1), (1, 0), (1, 1), (1, -1))


@dataclass(frozen=True)
class GrabCutParams:
    k: int = 5
    gamma: float = 50.0
    max_iters: int = 5
    tol: float = 1e-3
    seed: int = 0
    eps: float = EPSILON

    @classmethod
    def from_dict(cls, obj: dict) -> "GrabCutParams":
        return cls(**{k: v for k, v in obj.items() if k in cls.__dataclass_fields__})


@dataclass
class GrabCutResult:
    mask: PixelMask
    roi_mask: np.ndarray
    energies: list[float] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.energies)


def _pairs(h: int, w: int):
    """Index arrays (p, q, distance) over all 8-connected pairs of an h x w grid."""
    ids = np.arange(h * w).reshape(h, w)
    ps, qs, ds = [], [], []
    for dy, dx in _NEIGHBOURS:
        ys = slice(0, h - dy)
        yq = slice(dy, h)
        if dx >= 0:
            xs, xq = slice(0, w - dx), slice(dx, w)
        else:
            xs, xq = slice(-dx, w), slice(0, w + dx)
        p = ids[ys, xs].ravel()
        q = ids[yq, xq].ravel()
        ps.append(p)
        qs.append(q)
        ds.append(np.full(p.size, np.hypot(dy, dx)))
    return np.concatenate(ps), np.concatenate(qs), np.concatenate(ds)


def _smoothness(z: np.ndarray, gamma: float):
    h, w = z.shape[:2]
    p, q, d = _pairs(h, w)
    flat = z.reshape(-1, 3)
    diff2 = ((flat[p] - flat[q]) ** 2).sum(axis=1)
    mean = diff2.mean() if diff2.size else 0.0
    beta = 1.0 / (2.0 * mean) if mean > 0 else 0.0
    weights = gamma * np.exp(-beta * diff2) / d
    return p, q, weights


def _fit(pixels: np.ndarray, params: GrabCutParams) -> GmmModel:
    k = min(params.k, pixels.shape[0])
    return fit_gmm(pixels, k, eps=params.eps, seed=params.seed)


def _data_energy(model: GmmModel, pixels: np.ndarray) -> float:
    return float(model.cost(pixels).sum()) if pixels.size else 0.0


def _energy(alpha, d_fg, d_bg, p, q, weights) -> float:
    data = float(d_fg[alpha].sum() + d_bg[~alpha].sum())
    return data + float(weights[alpha[p] != alpha[q]].sum())


def _cut(labels, d_fg, d_bg, p, q, weights) -> np.ndarray:
    flat = labels.ravel()
    sure_fg = flat == DEFINITE_FG
    sure_bg = flat == DEFINITE_BG
    free = ~(sure_fg | sure_bg)
    node = np.full(flat.size, -1, dtype=np.int64)
    node[free] = np.arange(int(free.sum()))
    n = int(free.sum())

    src = d_bg[free].copy()
    snk = d_fg[free].copy()
    base = np.minimum(src, snk)
    src -= base
    snk -= base
    # pairs touching a hard-labelled pixel become terminal links
    for a, b in ((p, q), (q, p)):
        sel = free[a] & sure_fg[b]
        np.add.at(src, node[a[sel]], weights[sel])
        sel = free[a] & sure_bg[b]
        np.add.at(snk, node[a[sel]], weights[sel])
    net = FlowNetwork(n)
    net.add_tedges(np.arange(n), src, snk)
    both = free[p] & free[q]
    net.add_edges(node[p[both]], node[q[both]], weights[both], weights[both])
    side, _ = max_flow(net)

    alpha = sure_fg.copy()
    alpha[free] = side
    return alpha


def run_grabcut(
    image,
    trimap: Trimap,
    params: Optional[GrabCutParams] = None,
    debug_dir: Optional[str] = None,
) -> GrabCutResult:
    params = params or GrabCutParams()
    roi = trimap.roi
    z = np.asarray(image, dtype=float)[roi.slices()][..., :3]
    labels = trimap.labels
    h, w = labels.shape
    flat_labels = labels.ravel()
    pixels = z.reshape(-1, 3)

    alpha = (flat_labels == DEFINITE_FG) | (flat_labels == PROBABLE_FG)
    if not alpha.any():
        raise EmptyForeground("trimap has no candidate foreground pixel")
    if alpha.all():
        raise ValueError("trimap has no background pixel")

    energies: list[float] = []
    if not (~trimap.definite()).any():
        return _result(alpha.reshape(h, w), trimap, energies)

    p, q, weights = _smoothness(z, params.gamma)
    fg_model = _fit(pixels[alpha], params)
    bg_model = _fit(pixels[~alpha], params)
    dump = Path(debug_dir) if debug_dir else None
    if dump:
        dump.mkdir(parents=True, exist_ok=True)

    for it in range(params.max_iters):
        if it > 0:
            # keep a refit only when it does not raise the data energy of the
            # current labeling, so the total energy cannot increase
            for which in ("fg", "bg"):
                sel = alpha if which == "fg" else ~alpha
                old = fg_model if which == "fg" else bg_model
                if not sel.any():
                    continue  # the cut emptied this side; keep its model
                new = refit(old, pixels[sel], params.eps)
                if _data_energy(new, pixels[sel]) <= _data_energy(old, pixels[sel]):
                    if which == "fg":
                        fg_model = new
                    else:
                        bg_model = new
        d_fg = fg_model.cost(pixels)
        d_bg = bg_model.cost(pixels)
        alpha = _cut(labels, d_fg, d_bg, p, q, weights)
        energy = _energy(alpha, d_fg, d_bg, p, q, weights)
        if energies:
            prev = energies[-1]
            slack = 1e-9 * max(1.0, abs(prev))
            if energy > prev + slack:
                raise AssertionError(f"GrabCut energy rose from {prev} to {energy} at iteration {it}")
        energies.append(energy)
        if dump:
            _dump_iteration(dump, it, alpha.reshape(h, w), energies)
        if len(energies) > 1 and energies[-2] - energy < params.tol * max(1.0, abs(energies[-2])):
            break
    return _result(alpha.reshape(h, w), trimap, energies)


def _result(alpha: np.ndarray, trimap: Trimap, energies) -> GrabCutResult:
    if trimap.bbox is not None:
        b = trimap.bbox
        y0, x0 = b.top - trimap.top, b.left - trimap.left
        crop = alpha[y0 : y0 + b.height, x0 : x0 + b.width]
    else:
        crop = alpha
    return GrabCutResult(PixelMask(crop), alpha, list(energies))


def _dump_iteration(path: Path, it: int, alpha: np.ndarray, energies) -> None:
    from PIL import Image

    Image.fromarray((alpha * 255).astype(np.uint8)).save(path / f"iter_{it:02d}.png")
    (path / "energies.json").write_text(json.dumps(energies))


def grabcut(image, trimap: Trimap, params: Optional[GrabCutParams] = None) -> PixelMask:
    """Segment the trimap's box; Definite labels are honored exactly."""
    return run_grabcut(image, trimap, params).mask


ROI_MARGIN = 6


def refine_mask(image, bbox, mask: Optional[PixelMask] = None, params: Optional[GrabCutParams] = None,
                margin: int = ROI_MARGIN) -> Optional[PixelMask]:
    """Detector-guided GrabCut: the box as the user's rectangle, the mask as strokes.

    Thin elements whose mask vanishes under the standard erosion are retried
    with a 1-px erosion before falling back to the box alone.  Returns the
    refined mask cropped to ``bbox``, or the input mask when segmentation has
    nothing to work with.
    """
    from .trimap import FG_ERODE_PX, init_trimap

    trimap = None
    if mask is not None:
        for erode in (FG_ERODE_PX, 1):
            try:
                trimap = init_trimap(image, bbox, mask, margin=margin, fallback=False, erode_px=erode)
                break
            except EmptyForeground:
                continue
    if trimap is None:
        trimap = init_trimap(image, bbox, None, margin=margin)
    try:
        out = run_grabcut(image, trimap, params).mask
    except (EmptyForeground, ValueError):
        return mask
    return out if out.popcount else mask

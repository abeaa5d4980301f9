"""Detection evaluation: greedy matching, interpolated AP and per-stage gain reports."""
from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import AnnotatedTimeline, Detection, PixelMask, Provenance, mask_iou
from .detsim import NoiseProfile, perturb
from .errors import NoGroundTruth
from .reconstruct import RepairConfig, repair
from .segment.grabcut import GrabCutParams, refine_mask

log = logging.getLogger(__name__)

RECALL_POINTS = np.arange(101) / 100.0
_EPS = 1e-12  # recall levels equal to a grid point count as reaching it
AP_THRESHOLDS = tuple(round(0.5 + 0.05 * k, 2) for k in range(10))
STAGES = ("Raw", "+NMM", "+RR", "+DLGC")
METRICS = ("Pre50", "Rec50", "Pre75", "Rec75")
DLGC_MIN_AGREEMENT = 0.5


@dataclass
class MatchResult:
    """Greedy assignment for one image at one IoU threshold.

    ``pairs`` lists (prediction index, matched gt index or None, score, iou)
    in evaluation order, highest score first.
    """

    pairs: list[tuple[int, Optional[int], float, float]]
    n_gt: int
    unmatched_gt: list[int] = field(default_factory=list)

    @property
    def tp(self) -> int:
        return sum(g is not None for _, g, _, _ in self.pairs)

    @property
    def fp(self) -> int:
        return len(self.pairs) - self.tp

    @property
    def fn(self) -> int:
        return len(self.unmatched_gt)


def _as_detection(g) -> Detection:
    if isinstance(g, Detection):
        return g
    return Detection(g.bbox, g.category, 1.0, g.mask)


def _pair_iou(p: Detection, g: Detection, use_masks: bool) -> float:
    if not use_masks:
        a, b = p.bbox, g.bbox
        inter = a.intersection(b)
        return 0.0 if inter is None else inter.area / (a.area + b.area - inter.area)
    # a box without a mask stands for its whole rectangle
    p = p if p.mask is not None else p.replace(mask=PixelMask.full(p.bbox.width, p.bbox.height), provenance=Provenance.DETECTED)
    g = g if g.mask is not None else g.replace(mask=PixelMask.full(g.bbox.width, g.bbox.height))
    return mask_iou(p, g)


def _box_ious(pb: np.ndarray, gb: np.ndarray) -> np.ndarray:
    """Pairwise bbox IoU for arrays of (top, left, width, height)."""
    t = np.maximum(pb[:, None, 0], gb[None, :, 0])
    l = np.maximum(pb[:, None, 1], gb[None, :, 1])
    b = np.minimum(pb[:, None, 0] + pb[:, None, 3], gb[None, :, 0] + gb[None, :, 3])
    r = np.minimum(pb[:, None, 1] + pb[:, None, 2], gb[None, :, 1] + gb[None, :, 2])
    inter = np.clip(b - t, 0, None) * np.clip(r - l, 0, None)
    union = (pb[:, 2] * pb[:, 3])[:, None] + (gb[:, 2] * gb[:, 3])[None] - inter
    return inter / union


def iou_matrix(preds: Sequence[Detection], gts: Sequence[Detection], use_masks: bool = False) -> np.ndarray:
    """IoU of every prediction against every ground truth; zero across categories."""
    out = np.zeros((len(preds), len(gts)))
    if not preds or not gts:
        return out
    pb = np.array([d.bbox.as_list() for d in preds], float)
    gb = np.array([d.bbox.as_list() for d in gts], float)
    box = _box_ious(pb, gb)
    same = np.array([[p.category is g.category for g in gts] for p in preds])
    box[~same] = 0.0
    if not use_masks:
        return box
    for i, j in zip(*np.nonzero(box > 0)):
        out[i, j] = _pair_iou(preds[i], gts[j], True)
    return out


def match_detections(preds: Sequence[Detection], gts, iou_t: float = 0.5, use_masks: bool = False,
                     ious: Optional[np.ndarray] = None) -> MatchResult:
    """Greedy matching: by descending score, each prediction takes the best unmatched gt of its category."""
    preds = list(preds)
    gts = [_as_detection(g) for g in gts]
    if ious is None:
        ious = iou_matrix(preds, gts, use_masks)
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].score, i))
    taken = np.zeros(len(gts), bool)
    pairs = []
    for i in order:
        row = np.where(taken, -1.0, ious[i]) if len(gts) else np.zeros(0)
        j = int(np.argmax(row)) if row.size else -1
        if j >= 0 and row[j] >= iou_t and row[j] > 0:
            assert not taken[j], "ground truth matched twice"
            taken[j] = True
            pairs.append((i, j, preds[i].score, float(row[j])))
        else:
            pairs.append((i, None, preds[i].score, 0.0))
    return MatchResult(pairs, len(gts), [j for j in range(len(gts)) if not taken[j]])


def interpolated_ap(ranked_tp: Sequence[bool], n_gt: int) -> float:
    """101-point AP from TP flags already in ranking order."""
    if n_gt <= 0:
        raise NoGroundTruth("AP is undefined without ground truth")
    flags = np.asarray(ranked_tp, bool)
    if flags.size == 0:
        return 0.0
    tp = np.cumsum(flags)
    recall = tp / n_gt
    precision = tp / np.arange(1, flags.size + 1)
    # precision envelope: best precision at any recall at or beyond r
    env = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_POINTS - _EPS, side="left")
    vals = np.where(idx < flags.size, env[np.minimum(idx, flags.size - 1)], 0.0)
    return float(vals.mean())


def _ranked(images, iou_t, use_masks, cache=None):
    """Pooled (score, image, rank-in-image, is_tp) over a corpus, per category."""
    by_cat: dict = {}
    n_gt: dict = {}
    for k, (preds, gts) in enumerate(images):
        gts = [_as_detection(g) for g in gts]
        for g in gts:
            n_gt[g.category] = n_gt.get(g.category, 0) + 1
        ious = cache[k] if cache is not None else None
        m = match_detections(preds, gts, iou_t, use_masks, ious)
        for rank, (i, j, s, _) in enumerate(m.pairs):
            by_cat.setdefault(preds[i].category, []).append((-s, k, rank, j is not None))
    return by_cat, n_gt


def corpus_average_precision(images: Sequence[tuple], iou_t: float = 0.5, use_masks: bool = False,
                             _cache=None) -> float:
    """Mean over categories with ground truth of the 101-point AP; ``images`` holds (preds, gts) pairs."""
    by_cat, n_gt = _ranked(images, iou_t, use_masks, _cache)
    if not n_gt:
        raise NoGroundTruth("no ground truth in the evaluation set")
    aps = []
    for cat, n in n_gt.items():
        ranked = sorted(by_cat.get(cat, []))
        aps.append(interpolated_ap([r[3] for r in ranked], n))
    return float(np.mean(aps))


def average_precision(preds: Sequence[Detection], gts, iou_t: float = 0.5, use_masks: bool = False) -> float:
    return corpus_average_precision([(list(preds), list(gts))], iou_t, use_masks)


def ap_range(images: Sequence[tuple], use_masks: bool = False, thresholds: Sequence[float] = AP_THRESHOLDS) -> float:
    """AP averaged over IoU thresholds .50:.05:.95 (matching IoUs are computed once)."""
    cache = [iou_matrix(list(p), [_as_detection(g) for g in gts], use_masks) for p, gts in images]
    return float(np.mean([corpus_average_precision(images, t, use_masks, cache) for t in thresholds]))


def precision_recall(images: Sequence[tuple], iou_t: float = 0.5, use_masks: bool = False) -> tuple[float, float]:
    """Pooled precision and recall over every prediction (no score cut)."""
    tp = n_pred = n_gt = 0
    for preds, gts in images:
        m = match_detections(preds, gts, iou_t, use_masks)
        tp += m.tp
        n_pred += len(m.pairs)
        n_gt += m.n_gt
    return (tp / n_pred if n_pred else 0.0), (tp / n_gt if n_gt else 0.0)


# -- gain report ------------------------------------------------------------------------


def dlgc_stage(image, dets: Sequence[Detection], params: Optional[GrabCutParams] = None) -> list[Detection]:
    """Refine the masks of detected reusable elements with detector-guided GrabCut."""
    out = []
    for d in dets:
        if d.category.reusable and d.mask is not None and d.provenance is Provenance.DETECTED:
            m = refine_mask(image, d.bbox, d.mask, params)
            # a result far from the detector's own mask means the segmentation
            # latched onto the background (thin paths in large boxes do this)
            if m is not None and m.popcount and mask_iou(d, d.replace(mask=m)) >= DLGC_MIN_AGREEMENT:
                d = d.replace(mask=m)
        out.append(d)
    return out


@dataclass(frozen=True)
class _Task:
    index: int
    timeline: AnnotatedTimeline
    noise: NoiseProfile
    config: RepairConfig
    seed: int
    stages: tuple
    grabcut: Optional[GrabCutParams]


def _counts(dets, gts) -> dict:
    """TP / #pred / #gt per (kind, threshold)."""
    out = {}
    for kind, use_masks in (("bbox", False), ("mask", True)):
        ious = iou_matrix(dets, gts, use_masks)
        for t in (0.5, 0.75):
            m = match_detections(dets, gts, t, use_masks, ious)
            out[kind, t] = (m.tp, len(m.pairs), m.n_gt)
    return out


def _run_task(task: _Task) -> dict:
    tl = task.timeline
    gts = tl.as_detections()
    raw = perturb(tl, task.noise, task.seed)
    r = repair(raw, task.config, image_size=tl.image.shape[1::-1])
    lists = {"Raw": raw, "+NMM": r.dedup, "+RR": r.repaired}
    if "+DLGC" in task.stages:
        lists["+DLGC"] = dlgc_stage(tl.image, r.repaired, task.grabcut)
    return {s: _counts(lists[s], gts) for s in task.stages}


@dataclass
class GainReport:
    stages: tuple
    values: dict  # (stage, kind, metric) -> percent, averaged over runs
    runs: int
    images: int

    def delta(self, stage: str, kind: str, metric: str) -> float:
        k = self.stages.index(stage)
        if k == 0:
            return 0.0
        return self.values[stage, kind, metric] - self.values[self.stages[k - 1], kind, metric]

    def columns(self) -> list[tuple[str, str]]:
        return [(kind, m) for kind in ("bbox", "mask") for m in METRICS]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["stage"] + [f"{k}_{m}" for k, m in self.columns()] + [f"d_{k}_{m}" for k, m in self.columns()])
        for s in self.stages:
            w.writerow([s] + [f"{self.values[s, k, m]:.4f}" for k, m in self.columns()]
                       + [f"{self.delta(s, k, m):.4f}" for k, m in self.columns()])
        return buf.getvalue()

    def to_table(self) -> str:
        head = f"{'':8}" + "".join(f"{k[:4] + ' ' + m:>12}" for k, m in self.columns())
        lines = [f"{self.images} images x {self.runs} runs", head]
        for s in self.stages:
            if s == self.stages[0]:
                cells = [f"{self.values[s, k, m]:12.2f}" for k, m in self.columns()]
            else:
                cells = [f"{self.delta(s, k, m):+12.2f}" for k, m in self.columns()]
            lines.append(f"{s:8}" + "".join(cells))
        final = self.stages[-1]
        lines.append(f"{'Final':8}" + "".join(f"{self.values[final, k, m]:12.2f}" for k, m in self.columns()))
        return "\n".join(lines) + "\n"


def task_seed(seed: int, run: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, run, index]).generate_state(1)[0])


def gain_report(corpus: Sequence[AnnotatedTimeline], noise: NoiseProfile, config: RepairConfig = RepairConfig(),
                runs: int = 5, seed: int = 0, stages: Sequence[str] = STAGES, jobs: int = 1,
                grabcut: Optional[GrabCutParams] = None) -> GainReport:
    """Precision and recall after each pipeline stage, pooled per run and averaged over runs."""
    stages = tuple(stages)
    unknown = set(stages) - set(STAGES)
    if unknown or not stages or stages[0] != "Raw":
        raise ValueError(f"stages must start with Raw and come from {STAGES}")
    tasks = [_Task(i, tl, noise, config, task_seed(seed, r, i), stages, grabcut)
             for r in range(runs) for i, tl in enumerate(corpus)]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            results = list(ex.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        results = [_run_task(t) for t in tasks]
    n = len(corpus)
    values = {}
    for s in stages:
        for kind in ("bbox", "mask"):
            for t, pre, rec in ((0.5, "Pre50", "Rec50"), (0.75, "Pre75", "Rec75")):
                ps, rs = [], []
                for r in range(runs):
                    tot = np.sum([res[s][kind, t] for res in results[r * n : (r + 1) * n]], axis=0)
                    tp, npred, ngt = tot if len(tot) else (0, 0, 0)
                    ps.append(100.0 * tp / npred if npred else 0.0)
                    rs.append(100.0 * tp / ngt if ngt else 0.0)
                values[s, kind, pre] = float(np.mean(ps))
                values[s, kind, rec] = float(np.mean(rs))
    return GainReport(stages, values, runs, n)

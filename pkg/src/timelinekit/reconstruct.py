"""Detection repair: deduplication, event clustering, relabeling and recovery."""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import (
    RECOVERED_SCORE,
    BBox,
    Detection,
    ElementCategory,
    Orientation,
    PixelMask,
    Provenance,
    iou,
    union_bbox,
)
from .errors import NoElements, TooFewMarks
from .layout import principal_orientation

log = logging.getLogger(__name__)
C = ElementCategory


@dataclass(frozen=True)
class RepairConfig:
    score_thresh: float = 0.0
    nms_iou: float = 0.5
    nmm_iou: float = 0.5
    aspect_tol: float = 0.2
    area_tol: float = 0.3
    cross_weight: float = 1.0
    gap_factor: float = 1.5

    @classmethod
    def from_dict(cls, obj: dict) -> "RepairConfig":
        return cls(**{k: v for k, v in obj.items() if k in cls.__dataclass_fields__})


# -- deduplication ---------------------------------------------------------------


def _by_category(dets):
    groups: dict[ElementCategory, list[int]] = {}
    for i, d in enumerate(dets):
        groups.setdefault(d.category, []).append(i)
    return groups


def nms(dets: Sequence[Detection], score_thresh: float = 0.0, iou_thresh: float = 0.5) -> list[Detection]:
    """Greedy per-category non-maximum suppression; output keeps input order."""
    keep = []
    for idx in _by_category(dets).values():
        idx = [i for i in idx if dets[i].score >= score_thresh]
        idx.sort(key=lambda i: -dets[i].score)
        kept: list[int] = []
        for i in idx:
            if all(iou(dets[i].bbox, dets[j].bbox) < iou_thresh for j in kept):
                kept.append(i)
        keep += kept
    return [dets[i] for i in sorted(keep)]


def _merge(group: Sequence[Detection]) -> Detection:
    if len(group) == 1:
        return group[0]
    box = group[0].bbox
    for d in group[1:]:
        box = union_bbox(box, d.bbox)
    detected = any(d.provenance is Provenance.DETECTED for d in group)
    mask = None
    if detected and any(d.mask is not None for d in group):
        bits = np.zeros((box.height, box.width), bool)
        for d in group:
            y, x = d.bbox.top - box.top, d.bbox.left - box.left
            view = bits[y : y + d.bbox.height, x : x + d.bbox.width]
            if d.mask is None:
                view[:] = True
            else:
                view |= d.mask.bits
        mask = PixelMask(bits)
    return Detection(box, group[0].category, max(d.score for d in group), mask,
                     Provenance.DETECTED if detected else Provenance.RECOVERED)


CONTAINMENT = 0.9


def _overlapping(a: BBox, b: BBox, iou_thresh: float) -> bool:
    # a box mostly inside another (a part of the element) overlaps it too
    if iou(a, b) >= iou_thresh:
        return True
    inter = a.intersection(b)
    return inter is not None and inter.area >= CONTAINMENT * min(a.area, b.area)


def nmm(dets: Sequence[Detection], iou_thresh: float = 0.5, image_size: Optional[tuple[int, int]] = None) -> list[Detection]:
    """Non-maximum merging.

    Boxes of a category are ranked by ``score + area / image_area``; the top
    box absorbs (union box, union mask, max score) every box overlapping it by
    at least ``iou_thresh`` or lying mostly inside it (``CONTAINMENT``) until
    none is left, then the next-ranked box is processed.  Passes repeat until no same-category pair overlaps.
    """
    if not dets:
        return []
    if image_size is not None:
        area = float(image_size[0] * image_size[1])
    else:
        hull = dets[0].bbox
        for d in dets[1:]:
            hull = union_bbox(hull, d.bbox)
        area = float(hull.area)
    out: list[tuple[int, Detection]] = []
    for idx in _by_category(dets).values():
        items = [(i, dets[i]) for i in idx]
        while True:
            ranked = sorted(items, key=lambda it: -(it[1].score + it[1].bbox.area / area))
            merged_any = False
            result = []
            while ranked:
                first, top = ranked.pop(0)
                group = [top]
                while True:
                    hits = [k for k, (_, d) in enumerate(ranked) if _overlapping(top.bbox, d.bbox, iou_thresh)]
                    if not hits:
                        break
                    group += [ranked[k][1] for k in hits]
                    first = min([first] + [ranked[k][0] for k in hits])
                    ranked = [it for k, it in enumerate(ranked) if k not in set(hits)]
                    top = _merge(group)
                    merged_any = True
                result.append((first, top))
            items = result
            if not merged_any:
                break
        out += items
    return [d for _, d in sorted(out, key=lambda it: it[0])]


def shape_cv(dets: Sequence[Detection]) -> Optional[float]:
    """Mean coefficient of variation of (aspect, area) over categories with >= 2 boxes."""
    cvs = []
    for idx in _by_category(dets).values():
        if len(idx) < 2:
            continue
        aspect = np.array([dets[i].bbox.aspect for i in idx])
        area = np.array([dets[i].bbox.area for i in idx], float)
        cvs.append(0.5 * (aspect.std() / aspect.mean() + area.std() / area.mean()))
    return float(np.mean(cvs)) if cvs else None


def select_dedup(original, nms_out: Sequence[Detection], nmm_out: Sequence[Detection]) -> list[Detection]:
    """The more shape-consistent of the two deduplicated variants; ties go to NMM."""
    a, b = shape_cv(nms_out), shape_cv(nmm_out)
    if a is None or b is None or b <= a + 1e-12:
        return list(nmm_out)
    return list(nms_out)


# -- orientation and clustering ------------------------------------------------------


def infer_orientation(dets: Sequence[Detection]) -> Orientation:
    centers = [d.bbox.center for d in dets if d.category is C.EVENT_MARK]
    if len(centers) < 2:
        raise TooFewMarks(f"need at least 2 event marks, got {len(centers)}")
    return principal_orientation(centers)


@dataclass
class EventCluster:
    anchor: Optional[int]  # EventMark detection index, None when estimated
    members: list[int]
    axis_pos: float
    anchor_box: Optional[BBox] = None  # the anchor's bbox or its estimate
    roles: dict = field(default_factory=dict)  # member index -> (category, ordinal)

    @property
    def indices(self) -> list[int]:
        return ([self.anchor] if self.anchor is not None else []) + list(self.members)


def _axis(orientation, points) -> np.ndarray:
    o = Orientation(orientation)
    if o is Orientation.HORIZONTAL:
        return np.array([1.0, 0.0])
    if o is Orientation.VERTICAL:
        return np.array([0.0, 1.0])
    p = np.asarray(points, float).reshape(-1, 2)
    if len(p) < 2:
        return np.array([1.0, 0.0])
    d = p - p.mean(axis=0)
    v = np.linalg.eigh(d.T @ d)[1][:, -1]
    return v if v[0] > 0 or (v[0] == 0 and v[1] > 0) else -v


def _shape_ok(box: BBox, w: float, h: float, aspect_tol: float, area_tol: float) -> bool:
    a_ref, area_ref = w / h, w * h
    return abs(box.aspect / a_ref - 1) <= aspect_tol and abs(box.area / area_ref - 1) <= area_tol


def _roughly_mark(box: BBox, w: float, h: float) -> bool:
    # loose gate: only boxes clearly unlike the typical mark stop being anchors
    ar = box.aspect / (w / h)
    ra = box.area / (w * h)
    return 0.5 <= ar <= 2.0 and 1 / 3 <= ra <= 3.0


def _center(b: BBox) -> np.ndarray:
    return np.array(b.center)


@dataclass
class _Proto:
    category: ElementCategory
    ordinal: int
    offset: np.ndarray  # member center minus anchor center (median)
    size: tuple[float, float]
    support: int
    edges: dict  # alignment -> (median dx, median dy) for recovery


def _roles_of(dets, anchor_box: BBox, members: Sequence[int]) -> dict:
    """(category, ordinal) per member; ordinals rank same-category members by distance."""
    ac = _center(anchor_box)
    groups: dict = {}
    for m in members:
        groups.setdefault(dets[m].category, []).append(m)
    roles = {}
    for cat, ms in groups.items():
        ms = sorted(ms, key=lambda m: (float(np.hypot(*(_center(dets[m].bbox) - ac))), m))
        for k, m in enumerate(ms):
            roles[m] = (cat, k)
    return roles


def _alignment_offsets(anchor: BBox, box: BBox) -> dict:
    return {
        "x": (box.left - anchor.left, box.center[0] - anchor.center[0], box.right - anchor.right),
        "y": (box.top - anchor.top, box.center[1] - anchor.center[1], box.bottom - anchor.bottom),
    }


def _prototypes(dets, clusters: Sequence[EventCluster]) -> dict:
    """Role prototypes from clusters that have an anchor box."""
    samples: dict = {}
    for cl in clusters:
        if cl.anchor_box is None:
            continue
        a = cl.anchor_box
        if cl.anchor is not None:
            samples.setdefault((C.EVENT_MARK, 0), []).append((a, a))
        for m, role in cl.roles.items():
            samples.setdefault(role, []).append((a, dets[m].bbox))
    out = {}
    for role, pairs in samples.items():
        offs = np.array([_center(b) - _center(a) for a, b in pairs])
        ax = np.array([_alignment_offsets(a, b)["x"] for a, b in pairs])
        ay = np.array([_alignment_offsets(a, b)["y"] for a, b in pairs])
        # pick the alignment whose offsets vary least; ties keep left/top
        jx = int(np.argmin(np.round(ax.std(axis=0), 9)))
        jy = int(np.argmin(np.round(ay.std(axis=0), 9)))
        out[role] = _Proto(
            role[0], role[1], np.median(offs, axis=0),
            (float(np.median([b.width for _, b in pairs])), float(np.median([b.height for _, b in pairs]))),
            len({id(a) for a, _ in pairs}),
            {"x": (jx, float(np.median(ax[:, jx]))), "y": (jy, float(np.median(ay[:, jy])))},
        )
    return out


def _pos_tol(p: _Proto) -> float:
    return max(4.0, 0.5 * max(p.size))


def _gap_clusters(dets, idx, axis, gap_factor):
    proj = {i: float(_center(dets[i].bbox) @ axis) for i in idx}
    extents = [abs(dets[i].bbox.width * axis[0]) + abs(dets[i].bbox.height * axis[1]) for i in idx]
    thresh = gap_factor * float(np.median(extents))
    order = sorted(idx, key=lambda i: (proj[i], i))
    groups = [[order[0]]]
    for prev, cur in zip(order, order[1:]):
        if proj[cur] - proj[prev] > thresh:
            groups.append([])
        groups[-1].append(cur)
    return groups, proj


def cluster_events(dets: Sequence[Detection], orientation=Orientation.HORIZONTAL,
                   config: RepairConfig = RepairConfig()) -> list[EventCluster]:
    """Group detections into events anchored on event marks.

    Members join the anchor at the smallest distance, with the cross-axis
    component weighted by ``config.cross_weight``.  A member in excess of its
    category's usual count per event that also matches no known role position
    is an orphan of an event whose mark was missed; orphans are grouped into
    anchorless clusters with an estimated anchor.  Without any event mark the
    members are split by gaps along the axis.
    """
    idx = [i for i, d in enumerate(dets) if d.category is not C.MAIN_BODY]
    if not idx:
        raise NoElements("no detections to cluster")
    marks = [i for i in idx if dets[i].category is C.EVENT_MARK]
    if len(marks) >= 3:
        mw = float(np.median([dets[i].bbox.width for i in marks]))
        mh = float(np.median([dets[i].bbox.height for i in marks]))
        marks = [i for i in marks if _roughly_mark(dets[i].bbox, mw, mh)]
    axis = _axis(orientation, [dets[i].bbox.center for i in (marks or idx)])
    others = [i for i in idx if i not in set(marks)]

    if not marks:
        groups, proj = _gap_clusters(dets, idx, axis, config.gap_factor)
        return [EventCluster(None, g, float(np.mean([proj[i] for i in g]))) for g in groups]

    cross = np.array([-axis[1], axis[0]])
    wcross = 1.0 if Orientation(orientation) is Orientation.OTHER else config.cross_weight
    anchors = sorted(marks, key=lambda i: (float(_center(dets[i].bbox) @ axis), i))
    ac = np.array([_center(dets[i].bbox) for i in anchors])
    assign: dict[int, list[int]] = {a: [] for a in anchors}
    for m in others:
        d = _center(dets[m].bbox) - ac
        dist = (d @ axis) ** 2 + (wcross * (d @ cross)) ** 2
        assign[anchors[int(np.argmin(dist))]].append(m)

    clusters = _anchored(dets, anchors, assign, axis)
    # second pass: move each member to the anchor its category offset fits best
    protos = _prototypes(dets, clusters)
    moved = {a: [] for a in anchors}
    for a in anchors:
        for m in assign[a]:
            p = protos.get((dets[m].category, 0))
            if p is not None:
                r = np.abs(_center(dets[m].bbox) - ac - p.offset).max(axis=1)
                k = int(np.argmin(r))
                if r[k] <= _pos_tol(p):
                    a = anchors[k]
            moved[a].append(m)
    clusters = _anchored(dets, anchors, moved, axis)
    orphans = _find_orphans(dets, clusters)
    if orphans:
        for cl in clusters:
            cl.members = [m for m in cl.members if m not in orphans]
            cl.roles = _roles_of(dets, cl.anchor_box, cl.members)
        clusters += _orphan_clusters(dets, clusters, sorted(orphans), ac, axis)
    clusters.sort(key=lambda c: (c.axis_pos, c.indices[0]))
    return clusters


def _anchored(dets, anchors, assign, axis):
    clusters = [EventCluster(a, sorted(assign[a]), float(_center(dets[a].bbox) @ axis), dets[a].bbox)
                for a in anchors]
    for cl in clusters:
        cl.roles = _roles_of(dets, cl.anchor_box, cl.members)
    return clusters


def _find_orphans(dets, clusters) -> set[int]:
    n = len(clusters)
    counts: dict = {}
    for cl in clusters:
        c = Counter(dets[m].category for m in cl.members)
        for cat in {dets[m].category for cl2 in clusters for m in cl2.members}:
            counts.setdefault(cat, []).append(c.get(cat, 0))
    usual = {cat: Counter(v).most_common()[0][0] if v else 0 for cat, v in counts.items()}
    # prototypes from clusters that hold the usual count for each category
    protos = _prototypes(dets, clusters)
    majority = [p for p in protos.values() if p.support * 2 > n]
    orphans: set[int] = set()
    for cl in clusters:
        ac = _center(cl.anchor_box)
        for cat, k in usual.items():
            ms = [m for m in cl.members if dets[m].category is cat]
            if k < 1 or len(ms) <= k:
                continue
            ref = protos.get((cat, 0))
            if ref is None:
                continue
            ms.sort(key=lambda m: float(np.hypot(*(_center(dets[m].bbox) - ac - ref.offset))))
            for m in ms[k:]:
                off = _center(dets[m].bbox) - ac
                if any(np.all(np.abs(off - p.offset) <= _pos_tol(p)) for p in majority):
                    continue  # sits in a known slot: mislabeled, not orphaned
                orphans.add(m)
    return orphans


def _orphan_clusters(dets, clusters, orphans, anchor_centers, axis):
    protos = _prototypes(dets, clusters)
    mark = protos.get((C.EVENT_MARK, 0))
    mw, mh = mark.size if mark else (10.0, 10.0)
    implied = []
    for m in orphans:
        p = protos.get((dets[m].category, 0))
        off = p.offset if p is not None else np.zeros(2)
        implied.append(_center(dets[m].bbox) - off)
    implied = np.array(implied)
    if len(anchor_centers) > 1:
        d = np.hypot(*(anchor_centers[:, None, :] - anchor_centers[None]).transpose(2, 0, 1))
        np.fill_diagonal(d, np.inf)
        link = 0.5 * float(np.median(d.min(axis=1)))
    else:
        link = 2.0 * max(mw, mh)
    # single-linkage grouping of implied anchor centers
    label = list(range(len(orphans)))

    def find(i):
        while label[i] != i:
            label[i] = label[label[i]]
            i = label[i]
        return i

    for i in range(len(orphans)):
        for j in range(i + 1, len(orphans)):
            if np.hypot(*(implied[i] - implied[j])) <= link:
                label[find(i)] = find(j)
    groups: dict[int, list[int]] = {}
    for k in range(len(orphans)):
        groups.setdefault(find(k), []).append(k)
    out = []
    for ks in groups.values():
        cx, cy = np.median(implied[ks], axis=0)
        box = BBox(int(round(cy - mh / 2)), int(round(cx - mw / 2)), max(1, int(round(mw))), max(1, int(round(mh))))
        members = sorted(orphans[k] for k in ks)
        cl = EventCluster(None, members, float(np.array([cx, cy]) @ axis), box)
        cl.roles = _roles_of(dets, box, members)
        out.append(cl)
    return out


# -- voting -----------------------------------------------------------------------------


def fix_misclassified(clusters: Sequence[EventCluster], dets: Sequence[Detection],
                      config: RepairConfig = RepairConfig()) -> list[Detection]:
    """Relabel members that sit in another category's majority slot with its shape."""
    n = len(clusters)
    protos = _prototypes(dets, clusters)
    majority = {role: p for role, p in protos.items() if p.support * 2 > n}
    out = list(dets)
    for cl in clusters:
        if cl.anchor_box is None:
            continue
        ac = _center(cl.anchor_box)
        filled = set(cl.roles.values())
        if cl.anchor is not None:
            filled.add((C.EVENT_MARK, 0))
        for m in cl.members:
            box = dets[m].bbox
            off = _center(box) - ac
            own = majority.get(cl.roles[m])
            if own is not None and _fits(box, off, own, config):
                continue
            best, err = None, np.inf
            for role, p in majority.items():
                if role[0] is dets[m].category or role in filled:
                    continue
                if not _fits(box, off, p, config):
                    continue
                e = float(np.hypot(*(off - p.offset)))
                if e < err:
                    best, err = role, e
            if best is not None:
                log.debug("relabel detection %d %s -> %s", m, dets[m].category.value, best[0].value)
                out[m] = dets[m].replace(category=best[0])
                filled.add(best)
    return out


def _fits(box, off, p: _Proto, config) -> bool:
    return (
        _shape_ok(box, p.size[0], p.size[1], config.aspect_tol, config.area_tol)
        and bool(np.all(np.abs(off - p.offset) <= _pos_tol(p)))
    )


def _place(anchor: BBox, p: _Proto) -> BBox:
    w, h = max(1, int(round(p.size[0]))), max(1, int(round(p.size[1])))
    jx, dx = p.edges["x"]
    jy, dy = p.edges["y"]
    ref_x = (anchor.left, anchor.center[0], anchor.right)[jx] + dx
    ref_y = (anchor.top, anchor.center[1], anchor.bottom)[jy] + dy
    left = (ref_x, ref_x - w / 2, ref_x - w)[jx]
    top = (ref_y, ref_y - h / 2, ref_y - h)[jy]
    return BBox(int(round(top)), int(round(left)), w, h)


def recover_missing(clusters: Sequence[EventCluster], dets: Sequence[Detection],
                    image_size: Optional[tuple[int, int]] = None) -> list[Detection]:
    """Append Recovered detections for majority roles a cluster lacks."""
    n = len(clusters)
    protos = _prototypes(dets, clusters)
    out = list(dets)
    for cl in clusters:
        if cl.anchor_box is None:
            continue
        have = set(cl.roles.values())
        if cl.anchor is not None:
            have.add((C.EVENT_MARK, 0))
        for role in sorted(protos, key=lambda r: (r[0].value, r[1])):
            p = protos[role]
            if p.support * 2 <= n or role in have:
                continue
            if role == (C.EVENT_MARK, 0):
                box = cl.anchor_box
            else:
                box = _place(cl.anchor_box, p)
            if image_size is not None:
                box = box.clip(*image_size)
                if box is None:
                    continue
            out.append(Detection(box, role[0], RECOVERED_SCORE, None, Provenance.RECOVERED))
    return out


# -- pipeline ---------------------------------------------------------------------------


@dataclass
class RepairResult:
    raw: list[Detection]
    dedup: list[Detection]
    repaired: list[Detection]
    clusters: list[EventCluster]
    orientation: Orientation
    used: str  # "nms" or "nmm"


def deduplicate(dets, config: RepairConfig = RepairConfig(), image_size=None):
    a = nms(dets, config.score_thresh, config.nms_iou)
    b = nmm([d for d in dets if d.score >= config.score_thresh], config.nmm_iou, image_size)
    chosen = select_dedup(dets, a, b)
    return chosen, ("nmm" if chosen is b or chosen == b else "nms")


def repair(dets: Sequence[Detection], config: RepairConfig = RepairConfig(), image_size=None,
           orientation: Optional[Orientation] = None) -> RepairResult:
    """Deduplicate, cluster, relabel and recover."""
    dets = list(dets)
    dedup, used = deduplicate(dets, config, image_size)
    if orientation is None:
        try:
            orientation = infer_orientation(dedup)
        except TooFewMarks:
            orientation = Orientation.HORIZONTAL
    try:
        clusters = cluster_events(dedup, orientation, config)
    except NoElements:
        return RepairResult(dets, dedup, dedup, [], orientation, used)
    fixed = fix_misclassified(clusters, dedup, config)
    clusters = cluster_events(fixed, orientation, config)
    repaired = recover_missing(clusters, fixed, image_size)
    final = cluster_events(repaired, orientation, config)
    return RepairResult(dets, dedup, repaired, final, orientation, used)

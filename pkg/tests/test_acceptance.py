"""Acceptance gate: one measured check per criterion.

Each ``criterion_N`` returns ``(passed, detail)``.  Under pytest every result
is printed as a single PASS/FAIL line in the terminal summary; running this
file directly prints the same lines.
"""
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import ndimage

sys.path.insert(0, str(Path(__file__).parent))

from oracles import brute_ap, brute_min_cut  # noqa: E402
from timelinekit.core import BBox, Detection, ElementCategory, PixelMask, Provenance, iou, union_bbox  # noqa: E402
from timelinekit.detsim import STANDARD, load_detections, save_detections  # noqa: E402
from timelinekit.eval import average_precision, gain_report  # noqa: E402
from timelinekit.reconstruct import nmm, nms, repair  # noqa: E402
from timelinekit.render import RenderJob, render  # noqa: E402
from timelinekit.segment.grabcut import run_grabcut  # noqa: E402
from timelinekit.segment.maxflow import FlowNetwork, max_flow  # noqa: E402
from timelinekit.segment.trimap import init_trimap  # noqa: E402
from timelinekit.synth import generate_corpus  # noqa: E402
from timelinekit.template import (  # noqa: E402
    EventSlot, FontInfo, ReusableElement, SlotMember, TemplateDoc, TextRole, UpdatableElement,
    extract_template, load_template, save_template,
)
from timelinekit.core import GlobalInfo  # noqa: E402

C = ElementCategory
RESULTS: dict[int, tuple[bool, str, str]] = {}

# pinned tolerances
IOU_PAIRS, IOU_GRID, IOU_SECONDS = 10_000, 64, 10
FLOW_GRAPHS, FLOW_NODES, FLOW_CAP, FLOW_SECONDS = 500, 12, 10, 30
GC_SCENES, GC_MIN_OK, GC_IOU, GC_GAP, GC_SIZE, GC_SECONDS = 50, 48, 0.95, 60, 200, 1.0
DL_TRIALS, DL_MIN_OK, DL_COARSE = 100, 90, (0.70, 0.90)
GAIN_IMAGES, GAIN_RUNS, GAIN_MIN_DELTA, GAIN_SECONDS = 200, 5, 1.0, 600
RT_IMAGES, RT_TOL, RT_MIN_FRAC, RT_SECONDS = 100, 2, 0.95, 300
AP_TOL = 1e-9
WIRE_INSTANCES = 100


def _luma(c):
    return 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]


# -- 1 ---------------------------------------------------------------------------------------


def criterion_1():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    bad = 0
    for _ in range(IOU_PAIRS):
        boxes = []
        for _ in range(2):
            w, h = rng.integers(1, IOU_GRID + 1, 2)
            boxes.append((int(rng.integers(0, IOU_GRID - h + 1)), int(rng.integers(0, IOU_GRID - w + 1)), int(w), int(h)))
        grids = []
        for t, l, w, h in boxes:
            g = np.zeros((IOU_GRID, IOU_GRID), bool)
            g[t : t + h, l : l + w] = True
            grids.append(g)
        want = (grids[0] & grids[1]).sum() / (grids[0] | grids[1]).sum()
        bad += iou(BBox(*boxes[0]), BBox(*boxes[1])) != want
    dt = time.perf_counter() - t0
    return bad == 0 and dt < IOU_SECONDS, f"{IOU_PAIRS - bad}/{IOU_PAIRS} exact, {dt:.1f}s"


# -- 2 ---------------------------------------------------------------------------------------


def criterion_2():
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    bad = 0
    for _ in range(FLOW_GRAPHS):
        n = int(rng.integers(2, FLOW_NODES + 1))
        edges = [(u, v, int(rng.integers(0, FLOW_CAP + 1))) for u in range(n) for v in range(n)
                 if u != v and rng.random() < 0.35]
        net, _ = FlowNetwork.from_digraph(n, 0, n - 1, edges)
        bad += max_flow(net)[1] != brute_min_cut(n, 0, n - 1, edges)
    dt = time.perf_counter() - t0
    return bad == 0 and dt < FLOW_SECONDS, f"{FLOW_GRAPHS - bad}/{FLOW_GRAPHS} exact, {dt:.1f}s"


# -- 3 and 4 ---------------------------------------------------------------------------------


def _shape(rng, size):
    """A random ellipse, rectangle or triangle covering a sizeable part of the canvas."""
    yy, xx = np.mgrid[:size, :size]
    cy, cx = rng.uniform(0.35, 0.65, 2) * size
    ry, rx = rng.uniform(0.12, 0.3, 2) * size
    kind = rng.integers(3)
    if kind == 0:
        return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1
    if kind == 1:
        return (abs(yy - cy) <= ry) & (abs(xx - cx) <= rx)
    # triangle: apex up
    return (yy >= cy - ry) & (yy <= cy + ry) & (abs(xx - cx) <= rx * (yy - cy + ry) / (2 * ry))


def _colors(rng, gap):
    while True:
        fg, bg = rng.integers(0, 256, (2, 3))
        if abs(_luma(fg) - _luma(bg)) >= gap:
            return fg, bg


def _box_around(rng, truth, pad=(3, 11)):
    ys, xs = np.nonzero(truth)
    p = int(rng.integers(*pad))
    h, w = truth.shape
    t, l = max(0, ys.min() - p), max(0, xs.min() - p)
    b, r = min(h, ys.max() + 1 + p), min(w, xs.max() + 1 + p)
    return BBox(int(t), int(l), int(r - l), int(b - t))


def _mask_iou(a, b):
    return (a & b).sum() / (a | b).sum()


def criterion_3():
    rng = np.random.default_rng(3)
    ok = monotone = 0
    slowest = 0.0
    for _ in range(GC_SCENES):
        truth = _shape(rng, GC_SIZE)
        fg, bg = _colors(rng, GC_GAP)
        img = np.empty((GC_SIZE, GC_SIZE, 3), np.uint8)
        img[:] = bg
        img[truth] = fg
        box = _box_around(rng, truth)
        t0 = time.perf_counter()
        res = run_grabcut(img, init_trimap(img, box))
        slowest = max(slowest, time.perf_counter() - t0)
        ok += _mask_iou(res.mask.bits, truth[box.slices()]) >= GC_IOU
        e = res.energies
        monotone += all(b <= a + 1e-9 * abs(a) for a, b in zip(e, e[1:]))
    passed = ok >= GC_MIN_OK and monotone == GC_SCENES and slowest < GC_SECONDS
    return passed, f"IoU>={GC_IOU} in {ok}/{GC_SCENES}, energy monotone {monotone}/{GC_SCENES}, slowest {slowest:.2f}s"


def coarse_mask(rng, truth, lo=DL_COARSE[0], hi=DL_COARSE[1]):
    """Ground truth dilated then eroded by unequal radii until its IoU with the truth is in [lo, hi]."""
    for _ in range(200):
        d, e = rng.integers(0, 9, 2)
        m = ndimage.binary_dilation(truth, iterations=int(d)) if d else truth.copy()
        m = ndimage.binary_erosion(m, iterations=int(e)) if e else m
        if m.any() and lo <= _mask_iou(m, truth) <= hi:
            return m
    raise RuntimeError("no coarse mask in range")


def criterion_4():
    rng = np.random.default_rng(4)
    wins = 0
    for _ in range(DL_TRIALS):
        size = 80
        truth = _shape(rng, size)
        fg, bg = _colors(rng, 30)
        img = np.empty((size, size, 3), float)
        img[:] = bg
        img[truth] = fg
        # clutter that shares the mark's color in places, plus sensor noise
        for _ in range(3):
            y, x = rng.integers(0, size - 6, 2)
            img[y : y + 6, x : x + 6] = fg
        img[truth] = fg
        img = np.clip(img + rng.normal(0, 14, img.shape), 0, 255).astype(np.uint8)
        box = _box_around(rng, truth, (2, 8))
        coarse = coarse_mask(rng, truth)
        t = truth[box.slices()]
        plain = run_grabcut(img, init_trimap(img, box)).mask.bits
        guided = run_grabcut(img, init_trimap(img, box, PixelMask(coarse[box.slices()]))).mask.bits
        wins += _mask_iou(guided, t) >= _mask_iou(plain, t)
    return wins >= DL_MIN_OK, f"mask-guided >= bbox-only in {wins}/{DL_TRIALS}"


# -- 5 ---------------------------------------------------------------------------------------


def criterion_5():
    out = []
    # same mark found twice at IoU 0.6
    a = Detection(BBox(0, 0, 20, 10), C.EVENT_MARK, 1.00)
    b = Detection(BBox(0, 5, 20, 10), C.EVENT_MARK, 0.58)
    out.append(nms([b, a], 0.0, 0.5) == [a])
    out.append([d.bbox for d in nmm([b, a], 0.5)] == [union_bbox(a.bbox, b.bbox)])
    # full mark plus its top strip, both fully confident
    full = Detection(BBox(10, 10, 20, 20), C.EVENT_MARK, 1.00)
    part = Detection(BBox(10, 10, 20, 8), C.EVENT_MARK, 1.00)
    out.append(len(nms([full, part], 0.0, 0.5)) == 2)
    out.append([d.bbox for d in nmm([full, part], 0.5)] == [union_bbox(full.bbox, part.bbox)])
    return all(out), f"{sum(out)}/4 behaviours"


# -- 6 ---------------------------------------------------------------------------------------


def criterion_6():
    t0 = time.perf_counter()
    corpus = [tl for _, _, tl in generate_corpus(GAIN_IMAGES, 6)]
    rep = gain_report(corpus, STANDARD, runs=GAIN_RUNS, seed=6, stages=("Raw", "+NMM", "+RR"))
    dt = time.perf_counter() - t0
    nmm_pre = rep.delta("+NMM", "bbox", "Pre50")
    rr_rec = rep.delta("+RR", "bbox", "Rec50")
    both_down = [s for s in rep.stages[1:] for k in ("bbox", "mask") for t in ("50", "75")
                 if rep.delta(s, k, "Pre" + t) < 0 and rep.delta(s, k, "Rec" + t) < 0]
    passed = nmm_pre >= GAIN_MIN_DELTA and rr_rec >= GAIN_MIN_DELTA and not both_down and dt < GAIN_SECONDS
    return passed, (f"+NMM bbox Pre50 {nmm_pre:+.2f}, +RR bbox Rec50 {rr_rec:+.2f}, "
                    f"stages losing both: {both_down or 'none'}, {dt:.0f}s")


# -- 7 ---------------------------------------------------------------------------------------


def _keyed(tl):
    out = {}
    for k, ev in enumerate(tl.events):
        by_cat = {}
        for i in ev:
            by_cat.setdefault(tl.elements[i].category, []).append(tl.elements[i].bbox)
        for cat, boxes in by_cat.items():
            for j, b in enumerate(sorted(boxes, key=lambda b: (b.top, b.left))):
                out[k, cat, j] = b
    grouped = {i for ev in tl.events for i in ev}
    rest = sorted((tl.elements[i].category.value, tl.elements[i].bbox.top, tl.elements[i].bbox.left, i)
                  for i in range(len(tl.elements)) if i not in grouped)
    for j, (cat, *_, i) in enumerate(rest):
        out["-", cat, j] = tl.elements[i].bbox
    return out


def round_trip_ok(tl) -> bool:
    r = repair(tl.as_detections(), image_size=tl.image.shape[1::-1])
    doc = extract_template(tl.image, tl.global_info, r.repaired, refine=False)
    got, want = _keyed(render(RenderJob(doc, tl.data)).timeline), _keyed(tl)
    if got.keys() != want.keys():
        return False
    return all(max(abs(b.top - g.top), abs(b.left - g.left), abs(b.bottom - g.bottom), abs(b.right - g.right)) <= RT_TOL
               for b, g in ((want[k], got[k]) for k in want))


def criterion_7():
    t0 = time.perf_counter()
    ok = sum(round_trip_ok(tl) for _, _, tl in generate_corpus(RT_IMAGES, 7))
    dt = time.perf_counter() - t0
    return ok >= RT_MIN_FRAC * RT_IMAGES and dt < RT_SECONDS, f"{ok}/{RT_IMAGES} images within {RT_TOL}px, {dt:.0f}s"


# -- 8 ---------------------------------------------------------------------------------------


def criterion_8():
    worst, count = 0.0, 0
    for n_gt in range(1, 5):
        gts = [Detection(BBox(0, 20 * k, 10, 10), C.EVENT_MARK, 1.0) for k in range(n_gt)]
        targets = list(range(n_gt)) + [None]
        for n in range(5):
            for combo in np.ndindex(*(len(targets),) * n):
                preds, flags, used = [], [], set()
                for r, c in enumerate(combo):
                    tgt = targets[c]
                    box = BBox(50, 200, 4, 4) if tgt is None else gts[tgt].bbox
                    preds.append(Detection(box, C.EVENT_MARK, 0.9 - 0.1 * r))
                    flags.append(tgt is not None and tgt not in used)
                    used.add(tgt)
                got = average_precision(preds, gts, 0.5)
                worst = max(worst, abs(got - brute_ap([(p.score, f) for p, f in zip(preds, flags)], n_gt)))
                count += 1
    return worst <= AP_TOL, f"{count} instances, max |diff| {worst:.1e}"


# -- 9 ---------------------------------------------------------------------------------------


def criterion_9():
    sys.path.insert(0, str(Path(__file__).parent))
    from test_cli import _all_verbs, _files

    with tempfile.TemporaryDirectory() as a, tempfile.TemporaryDirectory() as b:
        _all_verbs(Path(a), seed=9)
        _all_verbs(Path(b), seed=9)
        fa, fb = _files(Path(a)), _files(Path(b))
    diff = sorted(k for k in fa.keys() | fb.keys() if fa.get(k) != fb.get(k))
    return not diff, f"{len(fa)} output files, differing: {diff or 'none'}"


# -- 10 --------------------------------------------------------------------------------------


def _random_detection(rng):
    w, h = (int(v) for v in rng.integers(1, 30, 2))
    kind = rng.integers(3)
    mask = None
    if kind == 0:
        bits = rng.random((h, w)) < 0.5
        bits[0, 0] = True
        mask = PixelMask(bits)
    cat = list(C)[rng.integers(len(C))]
    score = 0.0 if kind == 2 else float(rng.random())
    prov = Provenance.RECOVERED if kind == 2 else Provenance.DETECTED
    return Detection(BBox(int(rng.integers(0, 500)), int(rng.integers(0, 500)), w, h), cat, score, mask, prov)


def _random_template(rng):
    def color():
        return tuple(int(v) for v in rng.integers(0, 256, 3))

    reusable, updatable, members = [], [], []
    for _ in range(rng.integers(0, 4)):
        w, h = (int(v) for v in rng.integers(1, 7, 2))
        bits = rng.random((h, w)) < 0.6
        bits[0, 0] = True
        patch = np.zeros((h, w, 4), np.uint8)
        patch[..., :3] = color()
        patch[..., 3] = bits * 255
        cat = [C.EVENT_MARK, C.ANNOTATION_MARK, C.MAIN_BODY][rng.integers(3)]
        reusable.append(ReusableElement(cat, BBox(int(rng.integers(0, 50)), int(rng.integers(0, 50)), w, h),
                                        PixelMask(bits), patch))
        members.append(SlotMember("reusable", len(reusable) - 1, tuple(int(v) for v in rng.integers(-20, 21, 2))))
    for _ in range(rng.integers(0, 4)):
        cat = [C.EVENT_TEXT, C.ANNOTATION_TEXT, C.ANNOTATION_ICON][rng.integers(3)]
        box = BBox(int(rng.integers(0, 50)), int(rng.integers(0, 50)), int(rng.integers(1, 6)), int(rng.integers(1, 6)))
        font = FontInfo(int(rng.integers(4, 41)), color(), None) if rng.random() < 0.7 else None
        patch = np.full((box.height, box.width, 3), int(rng.integers(0, 256)), np.uint8) if rng.random() < 0.5 else None
        role = [None, TextRole.TITLE, TextRole.BODY][rng.integers(3)]
        updatable.append(UpdatableElement(cat, box, font, role, color() if rng.random() < 0.5 else None,
                                          "glyph" if rng.random() < 0.5 else None, patch))
        members.append(SlotMember("updatable", len(updatable) - 1, (int(rng.integers(-20, 21)), 0)))
    slots = [EventSlot(BBox(1, 2, 3, 4), tuple(members))]
    return TemplateDoc(GlobalInfo(), (80, 60), color(), reusable, updatable, slots)


def criterion_10():
    rng = np.random.default_rng(10)
    det_ok = tpl_ok = 0
    with tempfile.TemporaryDirectory() as d:
        path = Path(d)
        for i in range(WIRE_INSTANCES):
            dets = [_random_detection(rng) for _ in range(rng.integers(0, 15))]
            save_detections(path / "d.json", "img.png", dets)
            det_ok += load_detections(path / "d.json") == ("img.png", dets)
            doc = _random_template(rng)
            save_template(doc, path / "t.json")
            tpl_ok += load_template(path / "t.json") == doc
    passed = det_ok == tpl_ok == WIRE_INSTANCES
    return passed, f"detections {det_ok}/{WIRE_INSTANCES}, templates {tpl_ok}/{WIRE_INSTANCES}"


CRITERIA = {
    1: ("bbox IoU equals pixel enumeration", criterion_1),
    2: ("max-flow equals cut enumeration", criterion_2),
    3: ("GrabCut on contrast scenes", criterion_3),
    4: ("mask-guided GrabCut init", criterion_4),
    5: ("NMS/NMM duplicate-mark behaviour", criterion_5),
    6: ("pipeline gain direction", criterion_6),
    7: ("template round trip", criterion_7),
    8: ("AP equals brute-force PR", criterion_8),
    9: ("CLI determinism", criterion_9),
    10: ("wire and template round trips", criterion_10),
}


@pytest.mark.slow
@pytest.mark.parametrize("number", list(CRITERIA))
def test_criterion(number):
    name, fn = CRITERIA[number]
    passed, detail = fn()
    RESULTS[number] = (passed, name, detail)
    assert passed, detail


def format_line(number, passed, name, detail):
    return f"{'PASS' if passed else 'FAIL'}  criterion {number:2d}  {name}: {detail}"


if __name__ == "__main__":
    failures = 0
    for number, (name, fn) in CRITERIA.items():
        passed, detail = fn()
        failures += not passed
        print(format_line(number, passed, name, detail), flush=True)
    sys.exit(1 if failures else 0)

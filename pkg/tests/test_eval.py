import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_ap
from timelinekit.core import BBox, Detection, ElementCategory, PixelMask, Provenance
from timelinekit.detsim import STANDARD, NoiseProfile
from timelinekit.errors import NoGroundTruth
from timelinekit.eval import (
    STAGES,
    ap_range,
    average_precision,
    corpus_average_precision,
    gain_report,
    interpolated_ap,
    match_detections,
    precision_recall,
)
from timelinekit.synth import sample_timeline

C = ElementCategory


def D(top, left, w, h, score=0.9, cat=C.EVENT_MARK, mask=None, prov=Provenance.DETECTED):
    return Detection(BBox(top, left, w, h), cat, score, mask, prov)


GT = D(0, 0, 10, 10, 1.0)


# -- matching -------------------------------------------------------------------------------


def test_match_tp():
    p = D(0, 0, 10, 8)  # IoU .8
    m = match_detections([p], [GT], 0.5)
    assert (m.tp, m.fp, m.fn) == (1, 0, 0)


def test_match_threshold_miss():
    p = D(0, 0, 10, 6)  # IoU .6
    m = match_detections([p], [GT], 0.75)
    assert (m.tp, m.fp, m.fn) == (0, 1, 1)


def test_greedy_order():
    good, worse = D(0, 0, 10, 10, 0.9), D(0, 0, 10, 9, 0.8)
    m = match_detections([worse, good], [GT], 0.5)
    assert [(i, g) for i, g, _, _ in m.pairs] == [(1, 0), (0, None)]


def test_categories_never_match():
    p = D(0, 0, 10, 10, cat=C.EVENT_TEXT)
    assert match_detections([p], [GT], 0.5).tp == 0


def test_best_unmatched_gt_is_taken():
    g1, g2 = D(0, 0, 10, 10, 1.0), D(0, 4, 10, 10, 1.0)
    p1 = D(0, 3, 10, 10, 0.9)  # closer to g2
    p2 = D(0, 0, 10, 10, 0.8)
    m = match_detections([p1, p2], [g1, g2], 0.5)
    assert [(i, g) for i, g, _, _ in m.pairs] == [(0, 1), (1, 0)]


def test_mask_iou_treats_missing_mask_as_box():
    bits = np.zeros((10, 10), bool)
    bits[:, :5] = True
    gt = D(0, 0, 10, 10, 1.0, mask=PixelMask(bits))
    rec = D(0, 0, 10, 10, 0.0, prov=Provenance.RECOVERED)
    m = match_detections([rec], [gt], 0.5, use_masks=True)
    assert m.tp == 1 and m.pairs[0][3] == pytest.approx(0.5)
    assert match_detections([rec], [gt], 0.55, use_masks=True).tp == 0


def test_recovered_ranks_last():
    rec = D(0, 0, 10, 10, 0.0, prov=Provenance.RECOVERED)
    det = D(0, 0, 10, 9, 0.3)
    m = match_detections([rec, det], [GT], 0.5)
    assert m.pairs[0][0] == 1 and m.pairs[0][1] == 0 and m.pairs[1][1] is None


boxes = st.tuples(st.integers(0, 30), st.integers(0, 30), st.integers(1, 12), st.integers(1, 12))


@settings(max_examples=150, deadline=None)
@given(st.lists(st.tuples(boxes, st.floats(0, 1)), max_size=8), st.lists(boxes, max_size=6), st.floats(0.05, 1))
def test_never_double_matches(preds, gts, t):
    ps = [D(*b, s) for b, s in preds]
    gs = [D(*b, 1.0) for b in gts]
    m = match_detections(ps, gs, t)
    got = [g for _, g, _, _ in m.pairs if g is not None]
    assert len(got) == len(set(got))
    assert m.tp + m.fn == len(gs) and m.tp + m.fp == len(ps)


# -- average precision ----------------------------------------------------------------------


def test_ap_examples():
    assert average_precision([D(0, 0, 10, 10)], [GT], 0.5) == 1.0
    assert average_precision([], [GT], 0.5) == 0.0
    assert average_precision([D(0, 0, 10, 10, 0.9), D(30, 30, 5, 5, 0.8)], [GT], 0.5) == 1.0


def test_ap_needs_ground_truth():
    with pytest.raises(NoGroundTruth):
        average_precision([D(0, 0, 10, 10)], [], 0.5)
    with pytest.raises(NoGroundTruth):
        interpolated_ap([True], 0)


def _exhaustive_instances():
    """Every ranking of <= 4 predictions against 1-4 disjoint ground-truth boxes.

    Each prediction either lands on the next unused gt box, repeats a used one
    or misses everything; expected TP flags follow directly from that choice.
    """
    for n_gt in range(1, 5):
        gts = [D(0, 20 * k, 10, 10, 1.0) for k in range(n_gt)]
        for n in range(0, 5):
            for kinds in itertools.product(("new", "dup", "miss"), repeat=n):
                preds, flags, used = [], [], 0
                ok = True
                for r, kind in enumerate(kinds):
                    score = 0.9 - 0.1 * r
                    if kind == "new":
                        if used == n_gt:
                            ok = False
                            break
                        preds.append(D(0, 20 * used, 10, 10, score))
                        used += 1
                        flags.append(True)
                    elif kind == "dup":
                        if used == 0:
                            ok = False
                            break
                        preds.append(D(0, 20 * (used - 1), 10, 10, score))
                        flags.append(False)
                    else:
                        preds.append(D(50, 50, 4, 4, score))
                        flags.append(False)
                if ok:
                    yield preds, gts, flags


def test_ap_matches_brute_force_on_all_small_instances():
    count = 0
    for preds, gts, flags in _exhaustive_instances():
        want = brute_ap([(p.score, f) for p, f in zip(preds, flags)], len(gts))
        assert abs(average_precision(preds, gts, 0.5) - want) <= 1e-9
        count += 1
    assert count == 210


@settings(max_examples=100, deadline=None)
@given(st.lists(st.booleans(), max_size=12), st.integers(1, 12))
def test_interpolated_ap_matches_oracle(flags, n_gt):
    if sum(flags) > n_gt:
        n_gt = sum(flags)
    want = brute_ap([(1.0 - k / 100, f) for k, f in enumerate(flags)], n_gt)
    assert abs(interpolated_ap(flags, n_gt) - want) <= 1e-9


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(boxes, st.floats(0, 1)), max_size=6), st.lists(boxes, min_size=1, max_size=5))
def test_ap_bounded_and_monotone_in_threshold(preds, gts):
    ps = [D(*b, s) for b, s in preds]
    gs = [D(*b, 1.0) for b in gts]
    aps = [average_precision(ps, gs, t) for t in (0.3, 0.5, 0.75, 0.9)]
    assert all(0.0 <= a <= 1.0 for a in aps)
    assert all(a >= b - 1e-12 for a, b in zip(aps, aps[1:]))


def test_corpus_ap_pools_images():
    img1 = ([D(0, 0, 10, 10, 0.9)], [GT])
    img2 = ([D(40, 40, 5, 5, 0.95)], [GT])  # a confident miss ranks first overall
    assert corpus_average_precision([img1, img2], 0.5) == pytest.approx(brute_ap([(0.95, False), (0.9, True)], 2))


def test_ap_range_perfect():
    assert ap_range([([D(0, 0, 10, 10)], [GT])]) == 1.0


def test_precision_recall():
    p, r = precision_recall([([D(0, 0, 10, 10), D(40, 40, 4, 4)], [GT, D(20, 20, 5, 5, 1.0)])], 0.5)
    assert (p, r) == (0.5, 0.5)


# -- gain report ----------------------------------------------------------------------------


@pytest.fixture(scope="module")
def corpus():
    return [sample_timeline(s)[2] for s in range(3)]


def test_zero_noise_report(corpus):
    rep = gain_report(corpus, NoiseProfile.zero(), runs=1)
    for s in STAGES:
        for kind, m in rep.columns():
            assert rep.values[s, kind, m] == 100.0
            assert rep.delta(s, kind, m) == 0.0


def test_deltas_telescope(corpus):
    rep = gain_report(corpus, STANDARD, runs=2, stages=("Raw", "+NMM", "+RR"))
    for kind, m in rep.columns():
        total = sum(rep.delta(s, kind, m) for s in rep.stages)
        assert total == pytest.approx(rep.values["+RR", kind, m] - rep.values["Raw", kind, m])


def test_report_is_deterministic_and_serializes(corpus):
    a = gain_report(corpus, STANDARD, runs=1, seed=4, stages=("Raw", "+NMM"))
    b = gain_report(corpus, STANDARD, runs=1, seed=4, stages=("Raw", "+NMM"))
    assert a.to_csv() == b.to_csv()
    lines = a.to_csv().splitlines()
    assert lines[0].startswith("stage,bbox_Pre50,bbox_Rec50") and len(lines) == 3
    assert "+NMM" in a.to_table()


@pytest.mark.parametrize("stages", [(), ("+NMM",), ("Raw", "+XYZ")])
def test_report_rejects_bad_stages(corpus, stages):
    with pytest.raises(ValueError):
        gain_report(corpus, STANDARD, runs=1, stages=stages)

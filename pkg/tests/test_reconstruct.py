import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from timelinekit.core import BBox, Detection, ElementCategory, Orientation, PixelMask, Provenance, iou, union_bbox
from timelinekit.detsim import STANDARD, perturb
from timelinekit.errors import NoElements, TooFewMarks
from timelinekit.reconstruct import (
    cluster_events,
    fix_misclassified,
    infer_orientation,
    nmm,
    nms,
    recover_missing,
    repair,
    select_dedup,
    shape_cv,
)
from timelinekit.synth import sample_timeline

C = ElementCategory


def D(top, left, w, h, cat=C.EVENT_MARK, score=0.9, mask=None):
    return Detection(BBox(top, left, w, h), cat, score, mask)


# -- NMS / NMM ----------------------------------------------------------------------


def test_nms_keeps_highest_score():
    a, b = D(0, 0, 20, 10, score=1.0), D(0, 5, 20, 10, score=0.58)
    assert iou(a.bbox, b.bbox) == pytest.approx(0.6)
    assert nms([b, a], 0.0, 0.5) == [a]


@pytest.mark.parametrize("fn", [lambda d: nms(d, 0.0, 0.5), lambda d: nmm(d, 0.5)])
def test_trivial_inputs(fn):
    assert fn([]) == []
    disjoint = [D(0, 0, 5, 5), D(0, 10, 5, 5), D(20, 0, 5, 5)]
    assert fn(disjoint) == disjoint


def test_nms_drops_low_scores_first():
    assert nms([D(0, 0, 5, 5, score=0.2)], 0.3, 0.5) == []


def test_nmm_hand_trace():
    a = D(0, 0, 10, 10, score=0.9)
    b = D(1, 0, 10, 14, score=0.85)
    c = D(50, 50, 6, 6, score=0.5)
    assert a.bbox.area == 100 and iou(a.bbox, b.bbox) == pytest.approx(0.6)
    out = nmm([a, b, c], 0.5)
    assert [d.bbox for d in out] == [union_bbox(a.bbox, b.bbox), c.bbox]
    assert out[0].score == 0.9


def test_nmm_unions_masks():
    m1 = np.zeros((4, 4), bool)
    m1[0, 0] = True
    a = D(0, 0, 4, 4, score=0.9, mask=PixelMask(m1))
    b = D(0, 1, 4, 4, score=0.8)  # no mask: counts as its whole box
    (out,) = nmm([a, b], 0.5)
    assert out.bbox == BBox(0, 0, 5, 4)
    assert out.mask.bits[0, 0] and out.mask.bits[:, 1:].all() and not out.mask.bits[1:, 0].any()


@pytest.mark.parametrize("scores", [(1.00, 0.58), (1.00, 1.00)])
def test_part_of_mark_fixture(scores):
    full = D(10, 10, 20, 20, score=scores[0])
    part = D(10, 10, 20, 8, score=scores[1])  # the top strip of the same mark
    assert iou(full.bbox, part.bbox) < 0.5
    (merged,) = nmm([full, part], 0.5)
    assert merged.bbox == union_bbox(full.bbox, part.bbox)


boxes_st = st.lists(
    st.tuples(st.integers(0, 40), st.integers(0, 40), st.integers(1, 15), st.integers(1, 15),
              st.sampled_from([C.EVENT_MARK, C.EVENT_TEXT]), st.floats(0, 1)),
    max_size=12,
)


def _dets(raw):
    return [D(t, l, w, h, c, s) for t, l, w, h, c, s in raw]


@settings(max_examples=150, deadline=None)
@given(boxes_st, st.floats(0.1, 0.9))
def test_dedup_idempotent(raw, thr):
    dets = _dets(raw)
    once = nms(dets, 0.0, thr)
    assert nms(once, 0.0, thr) == once
    merged = nmm(dets, thr)
    assert nmm(merged, thr) == merged


@settings(max_examples=150, deadline=None)
@given(boxes_st, st.floats(0.1, 0.9))
def test_nmm_leaves_no_overlapping_pair(raw, thr):
    out = nmm(_dets(raw), thr)
    for a, b in itertools.combinations(out, 2):
        if a.category is b.category:
            assert iou(a.bbox, b.bbox) < thr


def test_select_prefers_consistent_shapes():
    marks = [D(0, 40 * k, 10, 10, C.ANNOTATION_MARK) for k in range(5)]
    nms_out = marks[:4] + [D(0, 160, 10, 5, C.ANNOTATION_MARK)]
    assert shape_cv(marks) == 0.0 and shape_cv(nms_out) > 0
    assert select_dedup(marks, nms_out, marks) is not nms_out


def test_select_tie_goes_to_nmm():
    a = [D(0, 0, 10, 10), D(0, 40, 10, 10)]
    b = list(a)
    assert select_dedup(a, a, b) == b
    single = [D(0, 0, 10, 10)]
    nmm_out = [D(0, 0, 12, 12)]
    assert select_dedup(single, single, nmm_out) == nmm_out


# -- orientation and clustering ---------------------------------------------------------


@pytest.mark.parametrize(
    "centers, expected",
    [
        ([(10, 100), (110, 100), (210, 100)], Orientation.HORIZONTAL),
        ([(50, 10), (50, 110), (50, 210)], Orientation.VERTICAL),
        ([(10, 10), (110, 110), (210, 210)], Orientation.OTHER),
    ],
)
def test_infer_orientation(centers, expected):
    dets = [D(y - 5, x - 5, 10, 10) for x, y in centers]
    assert infer_orientation(dets) is expected


def test_infer_orientation_needs_two_marks():
    with pytest.raises(TooFewMarks):
        infer_orientation([D(0, 0, 10, 10), D(0, 20, 30, 10, C.EVENT_TEXT)])


def _events(n=5, skip_mark=(), skip=(), spacing=100):
    """n horizontal events: mark, annotation text above, event text below."""
    dets = []
    for k in range(n):
        x = 100 + spacing * k
        if k not in skip_mark:
            dets.append(D(100, x - 5, 10, 10))
        if (k, C.ANNOTATION_TEXT) not in skip:
            dets.append(D(70, x - 20, 40, 10, C.ANNOTATION_TEXT))
        if (k, C.EVENT_TEXT) not in skip:
            dets.append(D(120, x - 20, 40, 10, C.EVENT_TEXT))
    return dets


def test_cluster_text_above_marks():
    dets = [D(100, x, 10, 10) for x in (0, 100, 200)] + [D(80, x - 5, 20, 10, C.EVENT_TEXT) for x in (0, 100, 200)]
    clusters = cluster_events(dets, Orientation.HORIZONTAL)
    assert [(c.anchor, c.members) for c in clusters] == [(0, [3]), (1, [4]), (2, [5])]
    assert [c.axis_pos for c in clusters] == [5.0, 105.0, 205.0]


def test_cluster_without_marks_uses_gaps():
    dets = [D(0, x + dx, 10, 10, C.ANNOTATION_MARK) for x in (0, 100, 200, 300) for dx in (0, 12)]
    clusters = cluster_events(dets, Orientation.HORIZONTAL)
    assert [c.members for c in clusters] == [[0, 1], [2, 3], [4, 5], [6, 7]]
    assert all(c.anchor is None for c in clusters)


def test_single_cluster_and_empty():
    dets = [D(0, 0, 10, 10), D(20, 0, 30, 10, C.EVENT_TEXT)]
    assert len(cluster_events(dets, Orientation.HORIZONTAL)) == 1
    with pytest.raises(NoElements):
        cluster_events([D(0, 0, 300, 4, C.MAIN_BODY)], Orientation.HORIZONTAL)


def test_event_without_mark_gets_its_own_cluster():
    dets = _events(skip_mark={2})
    clusters = cluster_events(dets, Orientation.HORIZONTAL)
    assert len(clusters) == 5
    lost = clusters[2]
    assert lost.anchor is None and lost.anchor_box == BBox(100, 295, 10, 10)
    assert sorted(dets[m].category for m in lost.members) == sorted([C.ANNOTATION_TEXT, C.EVENT_TEXT])


def _partition_ok(dets, clusters):
    seen = sorted(i for c in clusters for i in c.indices)
    assert seen == [i for i, d in enumerate(dets) if d.category is not C.MAIN_BODY]


def test_clusters_partition_noisy_detections():
    for seed in range(8):
        _, _, tl = sample_timeline(seed)
        dets = perturb(tl, STANDARD, seed)
        _partition_ok(dets, cluster_events(dets, Orientation.HORIZONTAL))


# -- voting -----------------------------------------------------------------------------


def _annotated(label_last=C.ANNOTATION_TEXT, size=(80, 12)):
    dets = []
    for k in range(5):
        x = 200 * k
        dets.append(D(100, x, 10, 10))
        cat = C.ANNOTATION_TEXT if k < 4 else label_last
        dets.append(D(70, x, size[0] if k == 4 else 80, size[1] if k == 4 else 12, cat))
    return dets


def test_fix_relabels_minority():
    dets = _annotated(C.ANNOTATION_ICON)
    fixed = fix_misclassified(cluster_events(dets, Orientation.HORIZONTAL), dets)
    assert fixed[-1].category is C.ANNOTATION_TEXT
    assert fixed[:-1] == dets[:-1] and fixed[-1].bbox == dets[-1].bbox


def test_fix_no_change_when_all_agree():
    dets = _annotated()
    assert fix_misclassified(cluster_events(dets, Orientation.HORIZONTAL), dets) == dets


def test_fix_shape_gate():
    dets = _annotated(C.ANNOTATION_ICON, size=(12, 12))
    fixed = fix_misclassified(cluster_events(dets, Orientation.HORIZONTAL), dets)
    assert fixed[-1].category is C.ANNOTATION_ICON


def test_recover_missing_event_text():
    dets = []
    for k in range(5):
        dets.append(D(100, 100 * k, 10, 10))
        if k != 2:
            dets.append(D(140, 100 * k - 5, 60, 14, C.EVENT_TEXT))
    out = recover_missing(cluster_events(dets, Orientation.HORIZONTAL), dets)
    assert out[: len(dets)] == dets
    (new,) = out[len(dets):]
    assert new.bbox == BBox(140, 195, 60, 14)
    assert new.category is C.EVENT_TEXT and new.provenance is Provenance.RECOVERED
    assert new.score == 0.0 and new.mask is None


def test_recover_nothing_when_complete():
    dets = _events()
    assert recover_missing(cluster_events(dets, Orientation.HORIZONTAL), dets) == dets


def test_recover_requires_strict_majority():
    dets = [D(100, 100 * k, 10, 10) for k in range(4)]
    dets += [D(140, 100 * k - 5, 60, 14, C.EVENT_TEXT) for k in range(2)]
    assert recover_missing(cluster_events(dets, Orientation.HORIZONTAL), dets) == dets


def test_recover_lost_mark():
    dets = _events(skip_mark={2})
    out = recover_missing(cluster_events(dets, Orientation.HORIZONTAL), dets)
    (new,) = out[len(dets):]
    assert new.category is C.EVENT_MARK and new.bbox == BBox(100, 295, 10, 10)


# -- pipeline -------------------------------------------------------------------------------


def test_repair_leaves_perfect_detections_alone():
    for seed in range(10):
        _, _, tl = sample_timeline(seed)
        dets = tl.as_detections()
        r = repair(dets, image_size=tl.image.shape[1::-1])
        assert r.repaired == dets
        assert len(r.clusters) == len(tl.events)


def test_repair_restores_dropped_text():
    dets = _events(skip={(3, C.EVENT_TEXT)})
    r = repair(dets)
    added = r.repaired[len(r.dedup):]
    assert [(d.category, d.bbox) for d in added] == [(C.EVENT_TEXT, BBox(120, 380, 40, 10))]

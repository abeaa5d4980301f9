import numpy as np
import pytest

from timelinekit.core import BBox, PixelMask
from timelinekit.errors import DegenerateInput, EmptyForeground
from timelinekit.segment.gmm import EPSILON, fit_gmm
from timelinekit.segment.grabcut import GrabCutParams, grabcut, run_grabcut
from timelinekit.segment.trimap import (
    DEFINITE_BG,
    DEFINITE_FG,
    PROBABLE_BG,
    PROBABLE_FG,
    Trimap,
    init_trimap,
)

from oracles import brute_distance_within, brute_erode


def disk(n, r, cy=None, cx=None):
    cy = (n - 1) / 2 if cy is None else cy
    cx = (n - 1) / 2 if cx is None else cx
    yy, xx = np.mgrid[:n, :n]
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r


# -- trimap -----------------------------------------------------------------


def test_bbox_only_trimap():
    img = np.zeros((50, 60, 3), np.uint8)
    tm = init_trimap(img, BBox(10, 20, 15, 12))
    expected = np.full((50, 60), DEFINITE_BG)
    expected[10:22, 20:35] = PROBABLE_FG
    assert np.array_equal(tm.labels, expected)


def test_full_mask_trimap_is_eroded_ring():
    img = np.zeros((40, 40, 3), np.uint8)
    box = BBox(5, 5, 20, 16)
    tm = init_trimap(img, box, PixelMask.full(20, 16))
    inner = tm.labels[box.slices()]
    assert np.array_equal(inner == DEFINITE_FG, brute_erode(np.ones((16, 20), bool), 2))
    assert (inner == DEFINITE_FG).sum() == 12 * 16
    assert not (tm.labels == PROBABLE_BG).any()


def test_disk_mask_trimap_matches_morphology_oracle():
    img = np.zeros((60, 60, 3), np.uint8)
    box = BBox(10, 10, 40, 40)
    m = np.zeros((40, 40), bool)
    m[10:30, 10:30] = disk(20, 9.5)
    tm = init_trimap(img, box, PixelMask(m))
    inner = tm.labels[box.slices()]
    sure = brute_erode(m, 2)
    far = ~brute_distance_within(m, 3)
    assert np.array_equal(inner == DEFINITE_FG, sure)
    assert np.array_equal(inner == PROBABLE_BG, far)
    assert np.array_equal(inner == PROBABLE_FG, ~sure & ~far)
    # the 20-px disk loses 2 px of radius; on the pixel grid that is 14-16 rows
    rows = np.flatnonzero(sure.any(axis=1))
    assert 14 <= rows[-1] - rows[0] + 1 <= 16


def test_thin_mask_falls_back_to_bbox():
    img = np.zeros((30, 30, 3), np.uint8)
    box = BBox(5, 5, 10, 10)
    m = np.zeros((10, 10), bool)
    m[4:6] = True
    tm = init_trimap(img, box, PixelMask(m))
    assert tm.count(DEFINITE_FG) == 0 and tm.count(PROBABLE_FG) == 100
    with pytest.raises(EmptyForeground):
        init_trimap(img, box, PixelMask(m), fallback=False)


def test_margin_crops_roi():
    img = np.zeros((100, 100, 3), np.uint8)
    tm = init_trimap(img, BBox(2, 50, 10, 10), margin=5)
    assert tm.roi == BBox(0, 45, 20, 17)


# -- gmm ----------------------------------------------------------------------


def test_gmm_single_color():
    px = np.tile([255, 0, 0], (50, 1))
    g = fit_gmm(px, 1)
    assert np.allclose(g.means[0], [255, 0, 0])
    assert np.allclose(g.covariances[0], EPSILON * np.eye(3))
    assert g.weights.sum() == pytest.approx(1.0)


def test_gmm_two_blobs_recover_sample_means():
    rng = np.random.default_rng(4)
    a = rng.normal([30, 60, 200], 4, (400, 3))
    b = rng.normal([220, 180, 20], 4, (300, 3))
    g = fit_gmm(np.vstack([a, b]), 2)
    got = sorted(map(tuple, np.round(g.means, 6)))
    want = sorted([tuple(a.mean(0)), tuple(b.mean(0))])
    for m, w in zip(got, want):
        assert np.all(np.abs(np.array(m) - np.array(w)) <= 2)
    assert sorted(g.weights) == pytest.approx([300 / 700, 400 / 700])


def test_gmm_one_pixel_per_component():
    px = np.array([[0, 0, 0], [100, 0, 0], [0, 100, 0]], float)
    g = fit_gmm(px, 3)
    assert np.allclose(g.weights, 1 / 3)
    assert sorted(map(tuple, g.means)) == sorted(map(tuple, px))


def test_gmm_identical_pixels_collapse():
    px = np.tile([10, 20, 30], (20, 1))
    assert fit_gmm(px, 5).n_components == 1
    with pytest.raises(DegenerateInput):
        fit_gmm(px, 5, strict=True)


def test_gmm_covariances_spd():
    rng = np.random.default_rng(0)
    g = fit_gmm(rng.integers(0, 255, (500, 3)), 5)
    for c in g.covariances:
        assert np.allclose(c, c.T)
        assert np.all(np.linalg.eigvalsh(c) > 0)


# -- grabcut ------------------------------------------------------------------


def red_square_scene():
    img = np.full((100, 100, 3), 255, np.uint8)
    img[35:65, 35:65] = (255, 0, 0)
    truth = np.zeros((100, 100), bool)
    truth[35:65, 35:65] = True
    return img, truth


def test_grabcut_red_square_exact():
    img, truth = red_square_scene()
    box = BBox(25, 25, 50, 50)
    mask = grabcut(img, init_trimap(img, box))
    assert np.array_equal(mask.bits, truth[box.slices()])


def test_grabcut_all_definite_returns_definite_fg():
    img, _ = red_square_scene()
    labels = np.full((100, 100), DEFINITE_BG, np.uint8)
    labels[40:50, 40:60] = DEFINITE_FG
    res = run_grabcut(img, Trimap(labels))
    assert res.iterations == 0
    assert np.array_equal(res.mask.bits, labels == DEFINITE_FG)


def test_grabcut_honours_definite_labels():
    rng = np.random.default_rng(1)
    img = rng.integers(0, 255, (40, 40, 3)).astype(np.uint8)
    tm = init_trimap(img, BBox(5, 5, 30, 30))
    tm.labels[20, 20] = DEFINITE_FG
    tm.labels[6, 6] = DEFINITE_BG
    res = run_grabcut(img, tm)
    assert res.roi_mask[20, 20] and not res.roi_mask[6, 6]
    assert not res.roi_mask[tm.labels == DEFINITE_BG].any()


def test_grabcut_energy_non_increasing_and_deterministic():
    rng = np.random.default_rng(2)
    img = np.full((80, 80, 3), 180, np.uint8)
    img[disk(80, 22)] = (40, 90, 30)
    img = np.clip(img + rng.normal(0, 10, img.shape), 0, 255).astype(np.uint8)
    tm = init_trimap(img, BBox(10, 10, 60, 60))
    a = run_grabcut(img, tm, GrabCutParams(max_iters=8, tol=0))
    b = run_grabcut(img, tm, GrabCutParams(max_iters=8, tol=0))
    assert all(e2 <= e1 + 1e-9 * abs(e1) for e1, e2 in zip(a.energies, a.energies[1:]))
    assert a.mask == b.mask and a.energies == b.energies


def test_mask_guided_init_at_least_as_good_with_coarse_mask():
    img, truth = red_square_scene()
    rng = np.random.default_rng(0)
    img = np.clip(img + rng.normal(0, 12, img.shape), 0, 255).astype(np.uint8)
    box = BBox(25, 25, 50, 50)
    coarse = np.zeros((50, 50), bool)
    coarse[13:37, 10:34] = True  # shifted, partial cover of the square
    t = truth[box.slices()]

    def score(m):
        return (m & t).sum() / (m | t).sum()

    plain = grabcut(img, init_trimap(img, box))
    guided = grabcut(img, init_trimap(img, box, PixelMask(coarse)))
    assert score(guided.bits) >= score(plain.bits)


def test_grabcut_without_foreground_raises():
    img, _ = red_square_scene()
    with pytest.raises(EmptyForeground):
        run_grabcut(img, Trimap(np.full((100, 100), DEFINITE_BG, np.uint8)))


def test_grabcut_survives_cut_that_empties_foreground():
    rng = np.random.default_rng(0)
    img = np.clip(120 + rng.normal(0, 3, (40, 40, 3)), 0, 255).astype(np.uint8)
    res = run_grabcut(img, init_trimap(img, BBox(10, 10, 8, 8)), GrabCutParams(max_iters=4, tol=0))
    assert res.mask.bits.shape == (8, 8)

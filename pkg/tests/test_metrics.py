import numpy as np
import pytest

from pointseg.errors import EmptyGroundTruth
from pointseg.metrics import (
    aji,
    dataset_difficulty,
    detection_stats,
    match_detections,
    object_dice,
    pixel_stats,
)

from oracles import (
    brute_aji,
    brute_match,
    brute_object_dice,
    brute_pixel_stats,
    random_instance_map,
)


def test_match_basic():
    res = match_detections([[10.0, 10.0]], [[13.0, 14.0]], radius=8.0)
    assert res.tp == 1 and res.pairs[0][2] == 5.0
    assert not res.fp and not res.fn


def test_match_keeps_closest_only():
    res = match_detections([[0.0, 0.0]], [[0.0, 6.0], [0.0, 3.0]], radius=8.0)
    assert res.tp == 1
    assert res.pairs[0][1] == 1  # the closer detection
    assert res.fp == [0]


def test_match_empty_detections():
    res = match_detections([[1.0, 1.0], [5.0, 5.0]], np.zeros((0, 2)), radius=8.0)
    assert res.tp == 0 and len(res.fn) == 2
    p, r, f1, mu, sigma = detection_stats(res)
    assert p == 0.0 and r == 0.0 and f1 == 0.0
    assert mu is None and sigma is None


def test_match_order_invariance():
    rng = np.random.default_rng(0)
    for _ in range(20):
        gt = rng.uniform(0, 30, size=(rng.integers(0, 8), 2))
        det = rng.uniform(0, 30, size=(rng.integers(0, 8), 2))
        if len(gt) + len(det) == 0:
            continue
        res = match_detections(gt, det, 5.0)
        perm = rng.permutation(len(det))
        res_p = match_detections(gt, det[perm], 5.0)
        assert (res.tp, len(res.fp), len(res.fn)) == (res_p.tp, len(res_p.fp), len(res_p.fn))


def test_match_against_brute_force():
    rng = np.random.default_rng(1)
    for _ in range(30):
        gt = rng.uniform(0, 24, size=(rng.integers(1, 9), 2))
        det = rng.uniform(0, 24, size=(rng.integers(1, 9), 2))
        res = match_detections(gt, det, 6.0)
        tp, fp, fn, dists = brute_match(gt, det, 6.0)
        assert (res.tp, len(res.fp), len(res.fn)) == (tp, fp, fn)
        np.testing.assert_allclose(sorted(res.distances), sorted(dists), atol=1e-12)


def test_detection_stats_hand_values():
    a = match_detections([[0.0, 0.0], [0.0, 10.0], [20.0, 0.0]], [[0.0, 0.0], [0.0, 10.0], [40.0, 40.0]], 5.0)
    # tp=2 fp=1 fn=1
    p, r, f1, mu, sigma = detection_stats(a)
    assert p == pytest.approx(2 / 3)
    assert r == pytest.approx(2 / 3)
    assert f1 == pytest.approx(2 / 3)
    assert mu == 0.0 and sigma == 0.0


def test_detection_stats_single_distance():
    res = match_detections([[0.0, 0.0]], [[0.0, 4.0]], 8.0)
    _, _, _, mu, sigma = detection_stats([res])
    assert mu == 4.0 and sigma == 0.0


def test_detection_stats_perfect():
    res = match_detections([[3.0, 3.0]], [[3.0, 3.0]], 8.0)
    p, r, f1, mu, sigma = detection_stats(res)
    assert (p, r, f1, mu, sigma) == (1.0, 1.0, 1.0, 0.0, 0.0)


def test_pixel_stats_cases():
    gt = np.zeros((10, 10), bool)
    gt[:, :5] = True
    assert pixel_stats(gt, gt) == (1.0, 1.0)
    acc, f1 = pixel_stats(~gt, gt)
    assert acc == 0.0 and f1 == 0.0
    pred = np.zeros_like(gt)
    pred[:5, :5] = True  # half of gt, nothing extra
    acc, f1 = pixel_stats(pred, gt)
    assert f1 == pytest.approx(2 * 25 / (25 + 50))
    assert pixel_stats(np.zeros((4, 4), bool), np.zeros((4, 4), bool)) == (1.0, 1.0)


def test_object_dice_identity_and_disjoint():
    gt = np.zeros((12, 12), dtype=int)
    gt[2:6, 2:6] = 1
    gt[8:11, 8:11] = 2
    assert object_dice(gt, gt) == pytest.approx(1.0)
    pred = np.zeros_like(gt)
    pred[0:1, 11:12] = 1
    assert object_dice(gt, pred) == 0.0
    with pytest.raises(EmptyGroundTruth):
        object_dice(np.zeros_like(gt), pred)


def test_object_dice_half_overlap_gate():
    gt = np.zeros((20, 20), dtype=int)
    gt[0:10, 0:10] = 1  # 100 px
    pred = np.zeros_like(gt)
    pred[0:10, 0:5] = 1  # 50 px fully inside
    assert object_dice(gt, pred, overlap_gate=True) == pytest.approx(1.0 / 3.0)
    assert object_dice(gt, pred, overlap_gate=False) == pytest.approx(2.0 / 3.0)


def test_aji_hand_values():
    gt = np.zeros((20, 20), dtype=int)
    gt[0:10, 0:10] = 1
    assert aji(gt, gt) == pytest.approx(1.0)
    pred = np.zeros_like(gt)
    pred[0:10, 0:5] = 1
    assert aji(gt, pred) == pytest.approx(0.5)
    pred2 = pred.copy()
    pred2[14:20, 14:19] = 2  # 30-px spurious object
    assert aji(gt, pred2) == pytest.approx(50 / 130)


def test_object_metrics_match_brute_force():
    rng = np.random.default_rng(2)
    for _ in range(40):
        h, w = rng.integers(8, 25, size=2)
        gt = random_instance_map(rng, h, w, 6)
        pred = random_instance_map(rng, h, w, 6)
        if gt.max() == 0:
            continue
        assert aji(gt, pred) == pytest.approx(brute_aji(gt, pred), abs=1e-12)
        for gate in (True, False):
            assert object_dice(gt, pred, overlap_gate=gate) == pytest.approx(
                brute_object_dice(gt, pred, gate), abs=1e-12
            )
        acc, f1 = pixel_stats(pred > 0, gt > 0)
        b_acc, b_f1 = brute_pixel_stats(pred > 0, gt > 0)
        assert acc == pytest.approx(b_acc, abs=1e-12) and f1 == pytest.approx(b_f1, abs=1e-12)


def test_metric_ranges_and_identity():
    rng = np.random.default_rng(3)
    for _ in range(10):
        gt = random_instance_map(rng, 16, 16, 5)
        pred = random_instance_map(rng, 16, 16, 5)
        if gt.max() == 0:
            continue
        assert 0.0 <= aji(gt, pred) <= 1.0
        assert 0.0 <= object_dice(gt, pred) <= 1.0 + 1e-12
        assert aji(gt, gt) == 1.0
        assert object_dice(gt, gt) == pytest.approx(1.0, abs=1e-12)


def test_dataset_difficulty_uniform_nucleus():
    img = np.full((20, 20, 3), 0.8)
    gt = np.zeros((20, 20), dtype=int)
    gt[8:12, 8:12] = 1
    img[gt == 1] = 0.2
    diff, spread = dataset_difficulty(img, gt)
    assert diff == pytest.approx(-0.6)
    assert spread == 0.0


def test_dataset_difficulty_area_weights():
    img = np.full((30, 30, 3), 0.8)
    gt = np.zeros((30, 30), dtype=int)
    gt[5:9, 5:9] = 1
    gt[20:24, 20:24] = 2
    img[gt == 1] = 0.6  # diff -0.2
    img[gt == 2] = 0.2  # diff -0.6
    diff, _ = dataset_difficulty(img, gt)
    assert diff == pytest.approx(-0.4)
    with pytest.raises(EmptyGroundTruth):
        dataset_difficulty(img, np.zeros((30, 30), dtype=int))

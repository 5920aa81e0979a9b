import numpy as np
import pytest

from pointseg.detection import (
    DetectionConfig,
    extended_gaussian_mask,
    extract_detections,
    merge_points,
    propagate_background,
    self_train,
    simple_gaussian_mask,
    weighted_mse_loss,
)
from pointseg.errors import EmptySeeds, EmptySupport

from oracles import central_difference

CFG = DetectionConfig(r1=8.0, r2=16.0, sigma=2.0)


def test_mask_band_values():
    mask = extended_gaussian_mask([[20.0, 20.0]], 41, 41, CFG)
    assert mask[20, 20] == 1.0
    assert mask[20, 22] == pytest.approx(np.exp(-0.5), abs=1e-12)  # D = 2
    assert mask[20, 30] == 0.0  # D = 10, inside [8, 16)
    assert mask[20, 40] == -1.0  # D = 20
    # half-open band boundaries
    assert mask[20, 28] == 0.0  # D = r1 exactly
    assert mask[20, 36] == -1.0  # D = r2 exactly


def test_mask_translation_equivariance():
    cfg = DetectionConfig(r1=3, r2=6, sigma=1.5)
    a = extended_gaussian_mask([[10.0, 10.0], [20.0, 15.0]], 40, 40, cfg)
    b = extended_gaussian_mask([[13.0, 14.0], [23.0, 19.0]], 40, 40, cfg)
    assert np.array_equal(a[:-3, :-4], b[3:, 4:])


def test_mask_needs_points():
    with pytest.raises(EmptySeeds):
        extended_gaussian_mask(np.zeros((0, 2)), 8, 8, CFG)


def test_simple_mask_has_no_ignore():
    mask = simple_gaussian_mask([[5.0, 5.0]], 32, 32, CFG)
    assert (mask >= 0.0).all()


def test_mse_zero_when_equal():
    mask = extended_gaussian_mask([[5.0, 5.0]], 16, 16, CFG)
    prob = np.where(mask == -1.0, 0.3, np.maximum(mask, 0.0))
    loss, grad = weighted_mse_loss(prob, mask, CFG)
    assert loss == 0.0
    assert not grad.any()


def test_mse_hand_values():
    loss, _ = weighted_mse_loss(np.array([[0.5]]), np.array([[1.0]]), CFG)
    assert loss == pytest.approx(2.5, abs=1e-12)
    loss, _ = weighted_mse_loss(np.array([[1.0, 1.0]]), np.array([[1.0, 0.0]]), CFG)
    assert loss == pytest.approx(0.5, abs=1e-12)


def test_mse_empty_support():
    with pytest.raises(EmptySupport):
        weighted_mse_loss(np.zeros((3, 3)), np.full((3, 3), -1.0), CFG)


def test_mse_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    for _ in range(5):
        mask = rng.choice([-1.0, 0.0, 0.25, 1.0], size=(6, 6))
        if (mask == -1.0).all():
            mask[0, 0] = 1.0
        prob = rng.uniform(0.05, 0.95, (6, 6))
        _, grad = weighted_mse_loss(prob, mask, CFG)
        fd = central_difference(lambda p: weighted_mse_loss(p, mask, CFG)[0], prob.copy())
        denom = np.maximum(np.abs(fd), 1e-8)
        assert (np.abs(grad - fd) / denom).max() <= 1e-4


def test_extract_empty():
    assert extract_detections(np.zeros((16, 16)), 0.5).shape == (0, 2)


def test_extract_gaussian_bump():
    rr, cc = np.mgrid[0:41, 0:61]
    prob = np.exp(-((rr - 20.0) ** 2 + (cc - 30.0) ** 2) / 18.0)
    det = extract_detections(prob, 0.5)
    assert det.shape == (1, 2)
    assert abs(det[0, 0] - 20.0) <= 0.5 and abs(det[0, 1] - 30.0) <= 0.5


def test_extract_two_bumps_inside_boxes():
    rr, cc = np.mgrid[0:40, 0:40]
    prob = np.exp(-((rr - 10.0) ** 2 + (cc - 10.0) ** 2) / 8.0) + np.exp(
        -((rr - 30.0) ** 2 + (cc - 28.0) ** 2) / 8.0
    )
    det = extract_detections(prob, 0.5)
    assert det.shape == (2, 2)
    binary = prob >= 0.5
    from pointseg.raster import connected_components

    comp = connected_components(binary)
    for i, (r, c) in enumerate(det, start=1):
        rows, cols = np.nonzero(comp == i)
        assert rows.min() <= r <= rows.max()
        assert cols.min() <= c <= cols.max()


def test_propagate_background_rules():
    cfg = CFG
    points = [[20.0, 20.0]]
    prob = np.full((80, 80), 0.5)
    prob[60:75, 5:35] = 0.8  # 450-px confident blob, > pi * 8^2
    prob[40:45, 60:70] = 0.8  # 50-px blob, too small
    prob[5, 60] = 0.05
    mask = propagate_background(prob, points, cfg)
    ref = extended_gaussian_mask(points, 80, 80, cfg)
    near = ref != -1.0
    assert np.array_equal(mask[near], ref[near])  # unchanged inside r2
    assert mask[5, 60] == 0.0  # p < bg_low
    assert mask[0, 0] == -1.0  # 0.1 <= p <= 0.7 stays ignored
    assert mask[65, 20] == 0.0  # confident blob above area gate
    assert mask[42, 65] == -1.0  # confident blob below area gate


def test_propagate_keeps_foreground_across_rounds():
    points = [[10.0, 10.0]]
    ref = extended_gaussian_mask(points, 40, 40, DetectionConfig(r1=4, r2=8, sigma=1.5))
    rng = np.random.default_rng(1)
    for _ in range(3):
        prob = rng.uniform(0, 1, (40, 40))
        mask = propagate_background(prob, points, DetectionConfig(r1=4, r2=8, sigma=1.5))
        fg = ref > 0.0
        assert np.array_equal(mask[fg], ref[fg])


def test_propagate_background_never_loses_annulus_zeros():
    # the near-field case of the update is model-independent, so background
    # pixels inside the annulus can never revert to ignored across rounds
    cfg = DetectionConfig(r1=4, r2=8, sigma=1.5)
    points = [[12.0, 12.0], [30.0, 25.0]]
    base = extended_gaussian_mask(points, 40, 40, cfg)
    annulus_zero = base == 0.0
    rng = np.random.default_rng(3)
    for _ in range(4):
        mask = propagate_background(rng.uniform(0, 1, (40, 40)), points, cfg)
        assert (mask[annulus_zero] == 0.0).all()


def test_merge_points_dedupes():
    merged = merge_points([[1.0, 2.0]], [[1.0, 2.0], [3.0, 4.0]])
    assert merged.shape == (2, 2)


class _StubModel:
    def __init__(self, tag):
        self.tag = tag


def _stub_predictor(prob_map):
    def predictor(model, image):
        return prob_map
    return predictor


def test_self_train_zero_rounds_returns_initial():
    cfg = DetectionConfig(r1=3, r2=6, sigma=1.5, rounds=0)
    images = [np.zeros((20, 20, 3))]
    points = [[[10.0, 10.0]]]
    initial = _StubModel("init")
    calls = []

    def trainer(imgs, masks, model):
        calls.append(model)
        return _StubModel("trained")

    model, dets, rounds = self_train(
        images, points, cfg, "ST-bg", trainer, _stub_predictor(np.zeros((20, 20))), initial_model=initial
    )
    assert model is initial
    assert not calls
    assert rounds == []


def test_self_train_stbg_round_mask_matches_propagation():
    cfg = DetectionConfig(r1=3, r2=6, sigma=1.5, rounds=2)
    images = [np.zeros((20, 20, 3))]
    points = [np.array([[10.0, 10.0]])]
    prob = np.full((20, 20), 0.05)

    trained = []

    def trainer(imgs, masks, model):
        trained.append(masks)
        return _StubModel(len(trained))

    model, dets, rounds = self_train(
        images, points, cfg, "ST-bg", trainer, _stub_predictor(prob), initial_model=_StubModel(0)
    )
    assert len(rounds) == 2
    expected = propagate_background(prob, points[0], cfg)
    assert np.array_equal(rounds[0][0], expected)
    assert dets[0].shape == (0, 2)


def test_self_train_stnu_adds_detected_centers():
    cfg = DetectionConfig(r1=3, r2=6, sigma=1.5, rounds=1, prob_threshold=0.5)
    images = [np.zeros((30, 30, 3))]
    points = [np.array([[5.0, 5.0]])]
    prob = np.zeros((30, 30))
    prob[20:23, 20:23] = 0.9

    def trainer(imgs, masks, model):
        return _StubModel("t")

    _, _, rounds = self_train(
        images, points, cfg, "ST-nu", trainer, _stub_predictor(prob), initial_model=_StubModel(0)
    )
    mask = rounds[0][0]
    assert mask[21, 21] == 1.0  # new detected centre got its own bump
    assert mask[5, 5] == 1.0  # original point kept

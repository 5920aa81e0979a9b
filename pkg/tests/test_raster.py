import numpy as np
import pytest

from pointseg.errors import EmptySeeds
from pointseg.raster import (
    component_centroids,
    connected_components,
    distance_transform,
    morph_disk,
)

from oracles import brute_dilate, brute_distance, brute_erode, flood_fill_components


def test_components_empty_mask():
    assert connected_components(np.zeros((8, 8), bool)).max() == 0


def test_components_scan_order():
    mask = np.zeros((10, 10), bool)
    mask[6:9, 1:4] = True  # appears later in raster order
    mask[0:3, 6:9] = True
    labels = connected_components(mask)
    assert labels[0, 6] == 1
    assert labels[6, 1] == 2


def test_components_diagonal_connectivity():
    mask = np.zeros((4, 4), bool)
    mask[1, 1] = mask[2, 2] = True
    assert connected_components(mask, 8).max() == 1
    assert connected_components(mask, 4).max() == 2


def test_components_match_flood_fill():
    rng = np.random.default_rng(7)
    for _ in range(25):
        mask = rng.random((rng.integers(3, 20), rng.integers(3, 20))) < 0.4
        for conn in (4, 8):
            assert np.array_equal(connected_components(mask, conn), flood_fill_components(mask, conn))


def test_distance_345_triangle():
    d = distance_transform(np.array([[0.0, 0.0]]), 8, 8)
    assert d[3, 4] == 5.0
    assert d[0, 0] == 0.0


def test_distance_matches_brute_force():
    rng = np.random.default_rng(3)
    for _ in range(10):
        n = rng.integers(1, 8)
        seeds = np.stack([rng.integers(0, 32, n), rng.integers(0, 32, n)], axis=1).astype(float)
        d = distance_transform(seeds, 32, 32)
        bf = brute_distance(np.rint(seeds).astype(int), 32, 32)
        assert np.array_equal(d, bf)


def test_distance_requires_seeds():
    with pytest.raises(EmptySeeds):
        distance_transform(np.zeros((0, 2)), 8, 8)


def test_disk_radius_zero_is_identity():
    rng = np.random.default_rng(0)
    mask = rng.random((9, 9)) < 0.5
    assert np.array_equal(morph_disk(mask, 0, "dilate"), mask)
    assert np.array_equal(morph_disk(mask, 0, "erode"), mask)


def test_disk_dilation_single_pixel():
    mask = np.zeros((9, 9), bool)
    mask[4, 4] = True
    assert morph_disk(mask, 2, "dilate").sum() == 13


def test_closing_contains_original():
    rng = np.random.default_rng(1)
    for _ in range(10):
        mask = rng.random((12, 12)) < 0.4
        closed = morph_disk(morph_disk(mask, 2, "dilate"), 2, "erode")
        assert (closed | mask).sum() == closed.sum()


def test_morphology_matches_brute_force():
    rng = np.random.default_rng(5)
    for _ in range(10):
        mask = rng.random((10, 14)) < 0.35
        for r in (1, 2, 3):
            assert np.array_equal(morph_disk(mask, r, "dilate"), brute_dilate(mask, r))
            assert np.array_equal(morph_disk(mask, r, "erode"), brute_erode(mask, r))


def test_morphology_extensive_and_monotone():
    rng = np.random.default_rng(9)
    a = rng.random((12, 12)) < 0.3
    b = a | (rng.random((12, 12)) < 0.2)
    da, db = morph_disk(a, 2, "dilate"), morph_disk(b, 2, "dilate")
    ea, eb = morph_disk(a, 2, "erode"), morph_disk(b, 2, "erode")
    assert (da & a).sum() == a.sum()  # extensive
    assert (ea | a).sum() == a.sum()  # anti-extensive
    assert (da & db).sum() == da.sum()  # monotone
    assert (ea & eb).sum() == ea.sum()


def test_centroids():
    inst = np.zeros((10, 10), dtype=np.int32)
    inst[5, 7] = 1
    inst[0:2, 0:2] = 2
    got = component_centroids(inst)
    assert got.shape == (2, 2)
    assert tuple(got[0]) == (5.0, 7.0)
    assert tuple(got[1]) == (0.5, 0.5)
    assert component_centroids(np.zeros((4, 4), dtype=int)).shape == (0, 2)

import numpy as np
import pytest

from pointseg.errors import AmbiguousAssignment, DegenerateInput, EmptySeeds
from pointseg.labels import (
    cluster_label,
    kmeans,
    kmeans_objective,
    pixel_features,
    voronoi_label,
    voronoi_partition,
)
from pointseg.synth import SynthConfig, generate

from oracles import brute_voronoi


def test_partition_two_seeds_edge_column():
    part = voronoi_partition([[5.0, 2.0], [5.0, 8.0]], 11, 11)
    assert (part.cell_index[:, :6] == 0).all()
    assert (part.cell_index[:, 6:] == 1).all()
    rows, cols = np.nonzero(part.edge_mask)
    assert set(cols) == {5}
    assert len(rows) == 11


def test_partition_single_seed_no_edges():
    part = voronoi_partition([[10.0, 10.0]], 21, 21)
    assert not part.edge_mask.any()


def test_partition_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(8):
        n = rng.integers(1, 9)
        pts = rng.uniform(0, 31, size=(n, 2))
        part = voronoi_partition(pts, 32, 32)
        assert np.array_equal(part.cell_index, brute_voronoi(pts, 32, 32))


def test_partition_edges_one_pixel_wide():
    rng = np.random.default_rng(1)
    pts = rng.uniform(0, 31, size=(6, 2))
    part = voronoi_partition(pts, 32, 32)
    cell, edge = part.cell_index, part.edge_mask
    # across every 4-adjacent cell change, only the lower-index side is marked
    for (sa, sb) in [(np.s_[:-1, :], np.s_[1:, :]), (np.s_[:, :-1], np.s_[:, 1:])]:
        a, b = cell[sa], cell[sb]
        lower_a = a < b
        assert edge[sa][lower_a].all()
        higher_b = b[lower_a]
        del higher_b
    # every edge pixel is 4-adjacent to a different cell
    rows, cols = np.nonzero(edge)
    for r, c in zip(rows, cols):
        neigh = []
        if r > 0:
            neigh.append(cell[r - 1, c])
        if r < 31:
            neigh.append(cell[r + 1, c])
        if c > 0:
            neigh.append(cell[r, c - 1])
        if c < 31:
            neigh.append(cell[r, c + 1])
        assert any(n != cell[r, c] for n in neigh)


def test_voronoi_label_single_seed():
    label = voronoi_label([[10.0, 10.0]], 21, 21)
    assert (label == 1).sum() == 13
    assert (label == 0).sum() == 0
    assert (label == -1).sum() == 21 * 21 - 13


def test_voronoi_label_two_seeds():
    label = voronoi_label([[5.0, 2.0], [5.0, 8.0]], 11, 11)
    assert set(np.unique(label)) <= {-1, 0, 1}
    assert (label[:, 5] == 0).sum() > 0  # edge column present
    assert label[5, 2] == 1 and label[5, 8] == 1


def test_voronoi_label_requires_seeds():
    with pytest.raises(EmptySeeds):
        voronoi_label(np.zeros((0, 2)), 8, 8)


def test_pixel_features_distance_channel():
    img = np.full((50, 50, 3), 0.5)
    feats = pixel_features(img, [[0.0, 0.0]])
    assert feats[0, 0, 0] == 0.0
    assert feats[0, 10, 0] == pytest.approx(0.5)
    assert feats[0, 40, 0] == 1.0
    assert np.array_equal(feats[..., 1:], img)


def test_kmeans_k1_is_mean():
    rng = np.random.default_rng(2)
    feats = rng.normal(size=(40, 3))
    assign, centroids = kmeans(feats, 1, seed=0)
    assert (assign == 0).all()
    np.testing.assert_allclose(centroids[0], feats.mean(axis=0), atol=1e-12)


def test_kmeans_recovers_separated_blobs_and_is_optimal():
    rng = np.random.default_rng(3)
    blobs = [
        rng.normal([0, 0], 0.01, size=(4, 2)),
        rng.normal([10, 0], 0.01, size=(4, 2)),
        rng.normal([0, 10], 0.01, size=(4, 2)),
    ]
    feats = np.concatenate(blobs)
    assign, centroids = kmeans(feats, 3, seed=5)
    groups = [set(np.nonzero(assign == c)[0]) for c in range(3)]
    assert sorted(map(tuple, map(sorted, groups))) == [
        (0, 1, 2, 3),
        (4, 5, 6, 7),
        (8, 9, 10, 11),
    ]
    # exhaustive optimum over all 3^12 assignments (vectorized enumeration)
    codes = np.arange(3**12)
    digits = (codes[:, None] // 3 ** np.arange(12)[None, :]) % 3
    normsq = np.sum(feats**2, axis=1)
    total = np.zeros(codes.size)
    for c in range(3):
        member = digits == c
        counts = member.sum(axis=1)
        sums = member @ feats
        with np.errstate(invalid="ignore", divide="ignore"):
            reduction = np.where(counts > 0, np.sum(sums**2, axis=1) / np.maximum(counts, 1), 0.0)
        total += member @ normsq - reduction
    best = total.min()
    assert kmeans_objective(feats, assign, centroids) == pytest.approx(best, rel=1e-9)


def test_kmeans_degenerate_input():
    with pytest.raises(DegenerateInput):
        kmeans(np.ones((10, 2)), 2, seed=0)


def test_kmeans_objective_non_increasing_and_fixed_point():
    rng = np.random.default_rng(4)
    feats = rng.uniform(size=(200, 4))
    history: list[float] = []
    assign, centroids = kmeans(feats, 3, seed=1, history=history)
    assert all(b <= a + 1e-9 for a, b in zip(history, history[1:]))
    dist = np.sum((feats[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
    assert np.array_equal(np.argmin(dist, axis=1), assign)
    for c in range(3):
        member = feats[assign == c]
        if member.size:
            np.testing.assert_allclose(centroids[c], member.mean(axis=0), atol=1e-12)


def _synthetic_sample():
    cfg = SynthConfig(
        height=96,
        width=96,
        n_nuclei=(14, 16),
        nucleus_color=(0.2, 0.2, 0.2),
        background_color=(0.8, 0.8, 0.8),
        color_jitter=0.0,
        noise_std=0.01,
        n_distractors=(0, 0),
        seed=12,
    )
    return generate(cfg)


def test_cluster_label_recovers_dark_disks():
    sample = _synthetic_sample()
    label = cluster_label(sample.image, sample.centroids, seed=0)
    gt = sample.instances > 0
    pred = label == 1
    iou = (pred & gt).sum() / (pred | gt).sum()
    assert iou >= 0.7


def test_cluster_label_point_pixels_are_nuclei():
    sample = _synthetic_sample()
    label = cluster_label(sample.image, sample.centroids, seed=0)
    rows = np.rint(sample.centroids[:, 0]).astype(int)
    cols = np.rint(sample.centroids[:, 1]).astype(int)
    assert (label[rows, cols] == 1).mean() >= 0.9


def test_cluster_label_no_nucleus_on_edges_and_deterministic():
    sample = _synthetic_sample()
    part = voronoi_partition(sample.centroids, *sample.image.shape[:2])
    label = cluster_label(sample.image, sample.centroids, part, seed=3)
    assert not (label[part.edge_mask] == 1).any()
    again = cluster_label(sample.image, sample.centroids, part, seed=3)
    assert np.array_equal(label, again)
    assert set(np.unique(label)) <= {-1, 0, 1}


def test_cluster_label_cells_stay_separated():
    sample = _synthetic_sample()
    part = voronoi_partition(sample.centroids, *sample.image.shape[:2])
    label = cluster_label(sample.image, sample.centroids, part, seed=0)
    # nucleus pixels of different cells are never 8-adjacent without an edge
    from pointseg.raster import connected_components

    comp = connected_components(label == 1, 8)
    for k in range(1, comp.max() + 1):
        cells = np.unique(part.cell_index[comp == k])
        assert cells.size == 1


def test_cluster_label_ambiguous_tie():
    # point at the corner clips its disk to 6 pixels; give two of them to
    # each of three well-separated colors so every cluster ties on overlap
    img = np.full((6, 6, 3), 0.5)
    a, b, c = (0.0, 0.0, 0.0), (0.5, 0.5, 0.5), (1.0, 1.0, 1.0)
    for (r, col), color in [
        ((0, 0), a), ((0, 1), b), ((0, 2), c),
        ((1, 0), a), ((1, 1), b), ((2, 0), c),
    ]:
        img[r, col] = color
    img[4:, 0:2] = a
    img[4:, 2:4] = b
    img[4:, 4:6] = c
    with pytest.raises(AmbiguousAssignment):
        cluster_label(img, [[0.0, 0.0]], seed=0)

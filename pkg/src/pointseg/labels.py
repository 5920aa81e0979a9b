"""Stage-2 pseudo-labels from (detected) points: Voronoi point-edge labels
and k-means cluster labels.

Tri-state label maps use 0 = background, 1 = nucleus, -1 = ignored.
"""

from __future__ import annotations

import numpy as np

from .errors import AmbiguousAssignment, DegenerateInput, EmptySeeds
from .raster import as_points, check_image, distance_transform, morph_disk, rasterize_points

POINT_DISK_RADIUS = 2.0
DISTANCE_CLIP = 20.0


class VoronoiPartition:
    """Nearest-seed cell index per pixel plus a one-pixel-wide edge mask."""

    def __init__(self, cell_index: np.ndarray, edge_mask: np.ndarray):
        self.cell_index = cell_index
        self.edge_mask = edge_mask


def voronoi_partition(points, height: int, width: int) -> VoronoiPartition:
    """Assign each pixel to its nearest seed (ties to the lowest seed index).

    Edge pixels are those with a 4-neighbour in a different cell, kept only
    on the lower-index side so the boundary between two cells is one pixel
    wide. The image border is not an edge.
    """
    pts = as_points(points)
    if pts.shape[0] == 0:
        raise EmptySeeds("Voronoi partition needs at least one seed")
    rr, cc = np.mgrid[0:height, 0:width]
    best_d2 = np.full((height, width), np.inf)
    cell = np.zeros((height, width), dtype=np.int32)
    for idx, (pr, pc) in enumerate(pts):
        d2 = (rr - pr) ** 2 + (cc - pc) ** 2
        better = d2 < best_d2
        best_d2[better] = d2[better]
        cell[better] = idx
    edge = np.zeros((height, width), dtype=bool)
    # pixel keeps the edge iff a 4-neighbour belongs to a higher-index cell
    edge[:-1, :] |= cell[:-1, :] < cell[1:, :]
    edge[1:, :] |= cell[1:, :] < cell[:-1, :]
    edge[:, :-1] |= cell[:, :-1] < cell[:, 1:]
    edge[:, 1:] |= cell[:, 1:] < cell[:, :-1]
    return VoronoiPartition(cell_index=cell, edge_mask=edge)


def dilated_points_mask(points, height: int, width: int, radius: float = POINT_DISK_RADIUS) -> np.ndarray:
    return morph_disk(rasterize_points(points, height, width), radius, "dilate")


def voronoi_label(points, height: int, width: int) -> np.ndarray:
    """Voronoi point-edge label: dilated points 1, cell edges 0, rest ignored."""
    partition = voronoi_partition(points, height, width)
    label = np.full((height, width), -1, dtype=np.int8)
    label[partition.edge_mask] = 0
    label[dilated_points_mask(points, height, width)] = 1
    return label


def pixel_features(image, points) -> np.ndarray:
    """Per-pixel (clipped distance, r, g, b) feature vectors, all in [0, 1]."""
    img = check_image(image)
    h, w = img.shape[:2]
    d = distance_transform(points, h, w)
    d_hat = np.minimum(d, DISTANCE_CLIP) / DISTANCE_CLIP
    return np.concatenate([d_hat[..., None], img], axis=2)


def kmeans(features, k: int, seed: int, history: list | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's algorithm with k-means++ initialization (seeded).

    Iterates until the assignment reaches a fixed point or 300 iterations.
    Ties in the assignment step go to the lowest centroid index, and empty
    clusters keep their previous centroid, so the within-cluster variance
    objective never increases. Returns (assignment, centroids); if a list is
    passed as ``history`` the objective after each iteration is appended to
    it.
    """
    feats = np.asarray(features, dtype=float)
    if feats.ndim != 2:
        feats = feats.reshape(-1, feats.shape[-1])
    n = feats.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    distinct = np.unique(feats, axis=0)
    if distinct.shape[0] < k:
        raise DegenerateInput(f"need at least {k} distinct feature vectors, got {distinct.shape[0]}")

    rng = np.random.default_rng(seed)
    centroids = np.empty((k, feats.shape[1]))
    centroids[0] = feats[rng.integers(n)]
    d2 = np.sum((feats - centroids[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # all remaining mass sits on chosen centroids; pick any new vector
            candidates = distinct[~(distinct[:, None] == centroids[:i]).all(-1).any(-1)]
            centroids[i] = candidates[0]
        else:
            centroids[i] = feats[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((feats - centroids[i]) ** 2, axis=1))

    assign = np.full(n, -1, dtype=np.int32)
    for _ in range(300):
        dist = np.sum((feats[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        new_assign = np.argmin(dist, axis=1).astype(np.int32)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for c in range(k):
            member = assign == c
            if member.any():
                centroids[c] = feats[member].mean(axis=0)
        if history is not None:
            history.append(kmeans_objective(feats, assign, centroids))
    return assign, centroids


def kmeans_objective(features, assign, centroids) -> float:
    feats = np.asarray(features, dtype=float).reshape(len(assign), -1)
    return float(np.sum((feats - centroids[assign]) ** 2))


def cluster_label(image, points, partition: VoronoiPartition | None = None, seed: int = 0) -> np.ndarray:
    """Three-way k-means label: nucleus / background / ignored.

    Pixels are clustered on (clipped distance, color) features. The cluster
    with maximum overlap with the dilated points is the nucleus class and,
    of the remaining two, the one with minimum overlap is background (ties
    go to the lowest cluster id; equal nucleus/background counts are
    ambiguous and raise). The nucleus set is then cleaned per Voronoi cell
    with a radius-1 opening, and Voronoi edge pixels are forced to
    background.
    """
    img = check_image(image)
    h, w = img.shape[:2]
    if partition is None:
        partition = voronoi_partition(points, h, w)
    feats = pixel_features(img, points).reshape(-1, 4)
    assign, _ = kmeans(feats, 3, seed)
    assign = assign.reshape(h, w)

    disks = dilated_points_mask(points, h, w)
    counts = np.array([(assign[disks] == c).sum() for c in range(3)])
    nucleus_cluster = int(np.argmax(counts))  # ties go to the lowest id
    rest = [c for c in range(3) if c != nucleus_cluster]
    background_cluster = min(rest, key=lambda c: (counts[c], c))
    if counts[nucleus_cluster] == counts[background_cluster]:
        raise AmbiguousAssignment("nucleus and background clusters tie on both overlap criteria")

    label = np.full((h, w), -1, dtype=np.int8)
    label[assign == background_cluster] = 0
    nucleus = assign == nucleus_cluster

    cleaned = np.zeros_like(nucleus)
    for cell_id in np.unique(partition.cell_index):
        cell = partition.cell_index == cell_id
        cell_nucleus = nucleus & cell
        if not cell_nucleus.any():
            continue
        opened = morph_disk(morph_disk(cell_nucleus, 1, "erode"), 1, "dilate") & cell
        cleaned |= opened
    label[cleaned] = 1
    label[partition.edge_mask] = 0
    return label

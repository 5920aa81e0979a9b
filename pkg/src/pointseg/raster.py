"""Shared raster primitives: connected components, exact Euclidean distance
transform, disk morphology and component centroids.

Conventions used throughout the package:

* images are ``(H, W, 3)`` float arrays with channel values in ``[0, 1]``
* binary maps are ``(H, W)`` boolean arrays
* instance label maps are ``(H, W)`` integer arrays, ``0`` = background and
  ids ``1..n`` are assigned in raster-scan order of first encounter
* point sets are ``(N, 2)`` float arrays of ``(row, col)`` coordinates;
  real-valued coordinates are allowed (centroids) and are rounded to the
  nearest pixel only where a pixel index is required

Nuclei blobs are treated as 8-connected unless stated otherwise.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import EmptySeeds, ShapeMismatch

_STRUCT_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
_STRUCT_8 = np.ones((3, 3), dtype=bool)


def as_points(points) -> np.ndarray:
    """Normalize a point collection to a float (N, 2) array."""
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        return pts.reshape(0, 2)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ShapeMismatch(f"expected (N, 2) points, got shape {pts.shape}")
    return pts


def points_in_bounds(points: np.ndarray, height: int, width: int) -> bool:
    pts = as_points(points)
    if pts.shape[0] == 0:
        return True
    return bool(
        (pts[:, 0] >= 0).all()
        and (pts[:, 0] <= height - 1).all()
        and (pts[:, 1] >= 0).all()
        and (pts[:, 1] <= width - 1).all()
    )


def rasterize_points(points, height: int, width: int) -> np.ndarray:
    """Round points to pixels and return a boolean seed map."""
    pts = as_points(points)
    if pts.shape[0] == 0:
        raise EmptySeeds("at least one seed point is required")
    rows = np.clip(np.rint(pts[:, 0]).astype(int), 0, height - 1)
    cols = np.clip(np.rint(pts[:, 1]).astype(int), 0, width - 1)
    seed = np.zeros((height, width), dtype=bool)
    seed[rows, cols] = True
    return seed


def connected_components(mask, connectivity: int = 8) -> np.ndarray:
    """Label 4- or 8-connected foreground components.

    Ids are reassigned to 1..n in raster-scan order of each component's first
    pixel, so the output is independent of the labelling backend.
    """
    mask = np.asarray(mask).astype(bool)
    if connectivity not in (4, 8):
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    structure = _STRUCT_8 if connectivity == 8 else _STRUCT_4
    labels, count = ndimage.label(mask, structure=structure)
    if count == 0:
        return labels.astype(np.int32)
    flat = labels.ravel()
    ids, first = np.unique(flat, return_index=True)
    keep = ids != 0
    ids, first = ids[keep], first[keep]
    remap = np.zeros(count + 1, dtype=np.int32)
    remap[ids[np.argsort(first)]] = np.arange(1, count + 1)
    return remap[labels]


def distance_transform(seeds, height: int | None = None, width: int | None = None) -> np.ndarray:
    """Exact Euclidean distance to the nearest seed pixel.

    ``seeds`` is either a boolean map or an (N, 2) point set; points are
    rounded to the nearest pixel before the transform.
    """
    arr = np.asarray(seeds)
    if arr.ndim == 2 and arr.dtype == bool:
        seed_map = arr
    else:
        if height is None or width is None:
            raise ValueError("height and width are required for point seeds")
        seed_map = rasterize_points(seeds, height, width)
    if not seed_map.any():
        raise EmptySeeds("at least one seed is required")
    return ndimage.distance_transform_edt(~seed_map)


def disk_offsets(radius: float) -> np.ndarray:
    """Integer offsets (dr, dc) with Euclidean length <= radius."""
    r = int(np.floor(radius))
    dr, dc = np.mgrid[-r : r + 1, -r : r + 1]
    keep = dr * dr + dc * dc <= radius * radius
    return np.stack([dr[keep], dc[keep]], axis=1)


def morph_disk(mask, radius: float, mode: str) -> np.ndarray:
    """Dilate or erode a binary map with a digital disk of the given radius.

    Dilation is the union of disks centred at foreground pixels; erosion is
    its complement-dual, which means the image border acts as foreground
    padding for erosion.
    """
    mask = np.asarray(mask).astype(bool)
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if mode not in ("dilate", "erode"):
        raise ValueError(f"mode must be 'dilate' or 'erode', got {mode!r}")
    if radius == 0:
        return mask.copy()
    if mode == "dilate":
        if not mask.any():
            return mask.copy()
        return ndimage.distance_transform_edt(~mask) <= radius
    if mask.all():
        return mask.copy()
    return ndimage.distance_transform_edt(mask) > radius


def component_centroids(instances) -> np.ndarray:
    """Arithmetic mean of pixel coordinates for each instance id, in id order."""
    instances = np.asarray(instances)
    n = int(instances.max()) if instances.size else 0
    if n == 0:
        return np.zeros((0, 2), dtype=float)
    rr, cc = np.nonzero(instances)
    ids = instances[rr, cc]
    counts = np.bincount(ids, minlength=n + 1)[1:]
    sum_r = np.bincount(ids, weights=rr, minlength=n + 1)[1:]
    sum_c = np.bincount(ids, weights=cc, minlength=n + 1)[1:]
    if (counts == 0).any():
        raise ValueError("instance ids must form a contiguous range 1..n")
    return np.stack([sum_r / counts, sum_c / counts], axis=1)


def check_image(image) -> np.ndarray:
    """Validate and return an (H, W, 3) float image in [0, 1]."""
    img = np.asarray(image, dtype=float)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ShapeMismatch(f"expected (H, W, 3) image, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ShapeMismatch("image must have at least one pixel")
    if not np.isfinite(img).all():
        raise ValueError("image contains non-finite values")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError("image channel values must lie in [0, 1]")
    return img


def luminance(image) -> np.ndarray:
    """Channel mean, used wherever a scalar pixel value is needed."""
    return check_image(image).mean(axis=2)

"""Overlay rendering for qualitative inspection.

Detection overlays follow the usual color convention: green circles around
correctly detected ground-truth points, blue around missed ones, red around
false-positive detections, with yellow dots on every detection.
Segmentation overlays tint each predicted instance with a distinct color.
"""

from __future__ import annotations

import numpy as np

from .metrics import MatchResult
from .raster import as_points, check_image

GREEN = (0.0, 0.9, 0.0)
BLUE = (0.1, 0.3, 1.0)
RED = (1.0, 0.1, 0.1)
YELLOW = (1.0, 0.9, 0.0)


def _draw_ring(canvas: np.ndarray, row: float, col: float, radius: float, color) -> None:
    h, w = canvas.shape[:2]
    r0 = max(0, int(np.floor(row - radius - 1)))
    r1 = min(h, int(np.ceil(row + radius + 2)))
    c0 = max(0, int(np.floor(col - radius - 1)))
    c1 = min(w, int(np.ceil(col + radius + 2)))
    if r0 >= r1 or c0 >= c1:
        return
    rr, cc = np.mgrid[r0:r1, c0:c1]
    dist = np.sqrt((rr - row) ** 2 + (cc - col) ** 2)
    ring = np.abs(dist - radius) <= 0.6
    canvas[r0:r1, c0:c1][ring] = color


def _draw_dot(canvas: np.ndarray, row: float, col: float, color) -> None:
    h, w = canvas.shape[:2]
    r = int(np.rint(row))
    c = int(np.rint(col))
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if 0 <= r + dr < h and 0 <= c + dc < w and abs(dr) + abs(dc) <= 1:
                canvas[r + dr, c + dc] = color


def detection_overlay(image, gt, det, match: MatchResult) -> np.ndarray:
    """Circles: green = matched ground truth, blue = missed ground truth,
    red = false-positive detection; yellow dots mark all detections."""
    canvas = check_image(image).copy()
    gt_pts = as_points(gt)
    det_pts = as_points(det)
    matched_gt = {gi for gi, _, _ in match.pairs}
    for gi, (r, c) in enumerate(gt_pts):
        _draw_ring(canvas, r, c, match.radius, GREEN if gi in matched_gt else BLUE)
    for di in match.fp:
        _draw_ring(canvas, det_pts[di][0], det_pts[di][1], match.radius, RED)
    for r, c in det_pts:
        _draw_dot(canvas, r, c, YELLOW)
    return canvas


def _instance_color(idx: int) -> np.ndarray:
    hue = (idx * 0.61803398875) % 1.0
    i = int(hue * 6.0)
    f = hue * 6.0 - i
    p, q, t = 0.25, 1.0 - 0.75 * f, 0.25 + 0.75 * f
    rgb = [(1.0, t, p), (q, 1.0, p), (p, 1.0, t), (p, q, 1.0), (t, p, 1.0), (1.0, p, q)][i % 6]
    return np.asarray(rgb)


def segmentation_overlay(image, instances, opacity: float = 0.55) -> np.ndarray:
    """Tint every instance with a distinct deterministic color."""
    canvas = check_image(image).copy()
    instances = np.asarray(instances)
    for idx in range(1, int(instances.max()) + 1):
        mask = instances == idx
        if not mask.any():
            continue
        color = _instance_color(idx)
        canvas[mask] = (1.0 - opacity) * canvas[mask] + opacity * color
    return np.clip(canvas, 0.0, 1.0)

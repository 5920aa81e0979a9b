"""Evaluation metrics: detection matching and statistics, pixel accuracy/F1,
object-level Dice, the aggregated Jaccard index, and the two
dataset-difficulty statistics (nucleus/background contrast and intra-nucleus
spread).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyGroundTruth, ShapeMismatch
from .raster import as_points, luminance, morph_disk


@dataclass
class MatchResult:
    """Greedy closest-first matching of detections to ground-truth points."""

    pairs: list[tuple[int, int, float]]
    fp: list[int]
    fn: list[int]
    radius: float

    @property
    def tp(self) -> int:
        return len(self.pairs)

    @property
    def distances(self) -> list[float]:
        return [d for _, _, d in self.pairs]


@dataclass
class MetricsReport:
    """Flat bag of metric values; absent entries stay None."""

    precision: float | None = None
    recall: float | None = None
    f1: float | None = None
    mu_d: float | None = None
    sigma_d: float | None = None
    pixel_acc: float | None = None
    pixel_f1: float | None = None
    dice_obj: float | None = None
    aji: float | None = None
    nuclei_bg_diff: float | None = None
    nuclei_std: float | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


def match_detections(gt, det, radius: float) -> MatchResult:
    """Match each detection to at most one ground-truth point within radius.

    Candidate pairs are resolved greedily by ascending (distance, gt index,
    det index), so each ground-truth point keeps its closest still-available
    detection. Unmatched detections are false positives, unmatched
    ground-truth points false negatives.
    """
    if radius <= 0:
        raise ValueError("matching radius must be > 0")
    gt_pts = as_points(gt)
    det_pts = as_points(det)
    candidates = []
    for gi, (gr, gc) in enumerate(gt_pts):
        for di, (dr, dc) in enumerate(det_pts):
            d = float(np.hypot(gr - dr, gc - dc))
            if d <= radius:
                candidates.append((d, gi, di))
    candidates.sort()
    used_gt: set[int] = set()
    used_det: set[int] = set()
    pairs = []
    for d, gi, di in candidates:
        if gi in used_gt or di in used_det:
            continue
        used_gt.add(gi)
        used_det.add(di)
        pairs.append((gi, di, d))
    fp = [di for di in range(det_pts.shape[0]) if di not in used_det]
    fn = [gi for gi in range(gt_pts.shape[0]) if gi not in used_gt]
    return MatchResult(pairs=pairs, fp=fp, fn=fn, radius=radius)


def detection_stats(matches) -> tuple[float, float, float, float | None, float | None]:
    """Pooled precision/recall/F1 and distance-error mean/std.

    ``matches`` is a MatchResult or a list of them; counts and true-positive
    distances are pooled across the list. With zero true positives the
    distance statistics are reported as None. Undefined rates are reported
    as 0 by convention.
    """
    if isinstance(matches, MatchResult):
        matches = [matches]
    tp = sum(m.tp for m in matches)
    fp = sum(len(m.fp) for m in matches)
    fn = sum(len(m.fn) for m in matches)
    if tp + fp + fn == 0:
        raise ValueError("no ground truth or detections to score")
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2.0 * tp / (2.0 * tp + fp + fn) if 2 * tp + fp + fn > 0 else 0.0
    if tp == 0:
        return precision, recall, f1, None, None
    dists = np.concatenate([np.asarray(m.distances, dtype=float) for m in matches if m.tp])
    mu = float(dists.mean())
    sigma = float(np.sqrt(np.mean((dists - mu) ** 2)))
    return precision, recall, f1, mu, sigma


def pixel_stats(pred, gt) -> tuple[float, float]:
    """Pixel accuracy and foreground F1. Both maps empty gives F1 = 1."""
    pred = np.asarray(pred).astype(bool)
    gt = np.asarray(gt).astype(bool)
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"pred {pred.shape} vs gt {gt.shape}")
    accuracy = float((pred == gt).mean())
    denom = int(pred.sum()) + int(gt.sum())
    if denom == 0:
        return accuracy, 1.0
    f1 = 2.0 * float((pred & gt).sum()) / denom
    return accuracy, f1


def _overlap_matrix(gt: np.ndarray, pred: np.ndarray) -> np.ndarray:
    gt = np.asarray(gt)
    pred = np.asarray(pred)
    if gt.shape != pred.shape:
        raise ShapeMismatch(f"gt {gt.shape} vs pred {pred.shape}")
    n_g = int(gt.max())
    n_p = int(pred.max())
    overlap = np.zeros((n_g + 1, n_p + 1), dtype=np.int64)
    np.add.at(overlap, (gt.ravel(), pred.ravel()), 1)
    return overlap


def object_dice(gt, pred, overlap_gate: bool = True) -> float:
    """Area-weighted bidirectional per-object Dice.

    Each ground-truth object is paired with the prediction of maximum
    overlap and vice versa. With ``overlap_gate`` (the default) a pair only
    scores when the overlap exceeds half the source object, as the
    correspondence rule demands; without it the raw Dice of the best-overlap
    pair is always counted.
    """
    gt = np.asarray(gt)
    pred = np.asarray(pred)
    overlap = _overlap_matrix(gt, pred)
    n_g, n_p = overlap.shape[0] - 1, overlap.shape[1] - 1
    if n_g == 0:
        raise EmptyGroundTruth("ground truth has no objects")
    gt_areas = np.bincount(gt.ravel(), minlength=n_g + 1)[1:]
    pred_areas = np.bincount(pred.ravel(), minlength=n_p + 1)[1:]
    total_gt = gt_areas.sum()
    total_pred = pred_areas.sum()

    score = 0.0
    for gi in range(1, n_g + 1):
        row = overlap[gi, 1:]
        if n_p == 0 or row.max() == 0:
            continue
        pj = int(np.argmax(row)) + 1
        inter = row[pj - 1]
        if overlap_gate and not inter * 2 > gt_areas[gi - 1]:
            continue
        dice = 2.0 * inter / (gt_areas[gi - 1] + pred_areas[pj - 1])
        score += 0.5 * (gt_areas[gi - 1] / total_gt) * dice
    for pj in range(1, n_p + 1):
        col = overlap[1:, pj]
        if col.max() == 0:
            continue
        gi = int(np.argmax(col)) + 1
        inter = col[gi - 1]
        if overlap_gate and not inter * 2 > pred_areas[pj - 1]:
            continue
        dice = 2.0 * inter / (gt_areas[gi - 1] + pred_areas[pj - 1])
        score += 0.5 * (pred_areas[pj - 1] / total_pred) * dice
    return float(score)


def aji(gt, pred) -> float:
    """Aggregated Jaccard index.

    Ground-truth objects are visited in id order; each takes the unused
    prediction with the highest Jaccard (ties to the lowest prediction id).
    A ground-truth object with no overlapping unused prediction contributes
    its own area to the union and consumes nothing. Areas of never-used
    predictions are added to the denominator.
    """
    gt = np.asarray(gt)
    pred = np.asarray(pred)
    overlap = _overlap_matrix(gt, pred)
    n_g, n_p = overlap.shape[0] - 1, overlap.shape[1] - 1
    if n_g == 0:
        raise EmptyGroundTruth("ground truth has no objects")
    gt_areas = np.bincount(gt.ravel(), minlength=n_g + 1)[1:]
    pred_areas = np.bincount(pred.ravel(), minlength=n_p + 1)[1:]

    used = np.zeros(n_p + 1, dtype=bool)
    inter_sum = 0
    union_sum = 0
    for gi in range(1, n_g + 1):
        best_j = 0
        best_jac = 0.0
        for pj in range(1, n_p + 1):
            if used[pj]:
                continue
            inter = overlap[gi, pj]
            if inter == 0:
                continue
            union = gt_areas[gi - 1] + pred_areas[pj - 1] - inter
            jac = inter / union
            if jac > best_jac:
                best_jac = jac
                best_j = pj
        if best_j == 0:
            union_sum += int(gt_areas[gi - 1])
        else:
            used[best_j] = True
            inter = int(overlap[gi, best_j])
            inter_sum += inter
            union_sum += int(gt_areas[gi - 1]) + int(pred_areas[best_j - 1]) - inter
    union_sum += int(pred_areas[~used[1:]].sum())
    if union_sum == 0:
        return 0.0
    return inter_sum / union_sum


def dataset_difficulty(image, gt, annulus_radius: float = 3.0) -> tuple[float, float]:
    """Contrast and spread statistics of the labelled nuclei.

    Returns the area-weighted mean of (nucleus luminance - surrounding
    background luminance) and the area-weighted mean of the within-nucleus
    luminance standard deviation. The background of a nucleus is the annulus
    of pixels within ``annulus_radius`` of it that belong to no nucleus;
    nuclei with an empty annulus are skipped from the contrast average and
    the weights renormalized.
    """
    gt = np.asarray(gt)
    n = int(gt.max())
    if n == 0:
        raise EmptyGroundTruth("ground truth has no objects")
    lum = luminance(image)
    if lum.shape != gt.shape:
        raise ShapeMismatch(f"image {lum.shape} vs gt {gt.shape}")
    any_nucleus = gt > 0

    areas = np.zeros(n)
    diffs = np.full(n, np.nan)
    stds = np.zeros(n)
    for i in range(1, n + 1):
        inside = gt == i
        areas[i - 1] = inside.sum()
        vals = lum[inside]
        mu_n = vals.mean()
        stds[i - 1] = float(np.sqrt(np.mean((vals - mu_n) ** 2)))
        ring = morph_disk(inside, annulus_radius, "dilate") & ~any_nucleus
        if ring.any():
            diffs[i - 1] = mu_n - lum[ring].mean()

    total = areas.sum()
    nuclei_std = float(np.sum(areas / total * stds))
    have_ring = ~np.isnan(diffs)
    if not have_ring.any():
        raise EmptyGroundTruth("no nucleus has a non-empty background annulus")
    ring_total = areas[have_ring].sum()
    nuclei_bg_diff = float(np.sum(areas[have_ring] / ring_total * diffs[have_ring]))
    return nuclei_bg_diff, nuclei_std

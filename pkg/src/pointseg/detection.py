"""Stage-1 detection supervision: extended Gaussian regression masks,
weighted MSE loss, detection extraction and the self-training loop.

Regression masks are (H, W) float arrays with values in [0, 1] and the
sentinel -1 marking pixels ignored by the loss. Band boundaries are
half-open: distance in [0, r1) gets the Gaussian bump, [r1, r2) the zero
background annulus, and [r2, inf) the ignore sentinel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptySeeds, EmptySupport, ShapeMismatch
from .raster import as_points, component_centroids, connected_components, distance_transform

IGNORE = -1.0


@dataclass(frozen=True)
class DetectionConfig:
    """Geometry and thresholds of the detection supervision.

    r1 approximates the nuclear radius, r2 bounds the background annulus,
    sigma is the Gaussian bandwidth. w_pos/w_bg weight positive-valued and
    zero-valued mask pixels in the MSE loss. prob_threshold binarizes
    probability maps for detection extraction; bg_low/bg_high are the
    confidence gates of the background-propagation update and rounds is the
    number of self-training rounds.
    """

    r1: float = 8.0
    r2: float = 16.0
    sigma: float = 2.0
    w_pos: float = 10.0
    w_bg: float = 1.0
    prob_threshold: float = 0.5
    bg_low: float = 0.1
    bg_high: float = 0.7
    rounds: int = 3

    def __post_init__(self):
        if not 0 < self.r1 < self.r2:
            raise ValueError("need 0 < r1 < r2")
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")
        if not 0 <= self.bg_low < self.bg_high <= 1:
            raise ValueError("need 0 <= bg_low < bg_high <= 1")
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")


def extended_gaussian_mask(points, height: int, width: int, cfg: DetectionConfig) -> np.ndarray:
    """Gaussian bumps at labeled points, a zero annulus, ignore elsewhere."""
    pts = as_points(points)
    if pts.shape[0] == 0:
        raise EmptySeeds("extended Gaussian mask needs at least one point")
    d = distance_transform(pts, height, width)
    mask = np.full((height, width), IGNORE)
    annulus = (d >= cfg.r1) & (d < cfg.r2)
    mask[annulus] = 0.0
    bump = d < cfg.r1
    mask[bump] = np.exp(-(d[bump] ** 2) / (2.0 * cfg.sigma**2))
    return mask


def simple_gaussian_mask(points, height: int, width: int, cfg: DetectionConfig) -> np.ndarray:
    """Baseline variant: every pixel outside the bumps is plain background."""
    mask = extended_gaussian_mask(points, height, width, cfg)
    mask[mask == IGNORE] = 0.0
    return mask


def weighted_mse_loss(prob, mask, cfg: DetectionConfig) -> tuple[float, np.ndarray]:
    """Pixel-weighted mean squared error over non-ignored pixels.

    Returns the scalar loss and its gradient with respect to the probability
    map (zero on ignored pixels).
    """
    prob = np.asarray(prob, dtype=float)
    mask = np.asarray(mask, dtype=float)
    if prob.shape != mask.shape:
        raise ShapeMismatch(f"prob {prob.shape} vs mask {mask.shape}")
    support = mask != IGNORE
    n = int(support.sum())
    if n == 0:
        raise EmptySupport("all pixels ignored")
    w = np.where(mask > 0.0, cfg.w_pos, cfg.w_bg)
    diff = prob - mask
    loss = float(np.sum(w[support] * diff[support] ** 2) / n)
    grad = np.zeros_like(prob)
    grad[support] = 2.0 * w[support] * diff[support] / n
    return loss, grad


def extract_detections(prob, threshold: float) -> np.ndarray:
    """Centroids of 8-connected components of {prob >= threshold}, in id order."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    prob = np.asarray(prob, dtype=float)
    instances = connected_components(prob >= threshold, connectivity=8)
    return component_centroids(instances)


def propagate_background(prob, points, cfg: DetectionConfig) -> np.ndarray:
    """Extend the Gaussian mask with background pixels inferred from the model.

    Within distance r2 of the original points the mask is unchanged; outside,
    a pixel becomes background when the model is confidently negative
    (p < bg_low) or confidently positive over a blob too large to be a
    nucleus (p > bg_high inside an 8-connected component of {p > bg_high}
    with area strictly greater than pi*r1^2). Everything else stays ignored.
    ``points`` must be the original partial annotation, never an augmented set.
    """
    prob = np.asarray(prob, dtype=float)
    h, w = prob.shape
    pts = as_points(points)
    if pts.shape[0] == 0:
        raise EmptySeeds("background propagation needs the original points")
    mask = extended_gaussian_mask(pts, h, w, cfg)
    d = distance_transform(pts, h, w)
    outside = d >= cfg.r2

    high = prob > cfg.bg_high
    comp = connected_components(high, connectivity=8)
    areas = np.bincount(comp.ravel())
    big = np.zeros_like(high)
    if comp.max() > 0:
        big_ids = np.nonzero(areas > np.pi * cfg.r1**2)[0]
        big_ids = big_ids[big_ids != 0]
        if big_ids.size:
            big = np.isin(comp, big_ids)

    new_bg = outside & ((prob < cfg.bg_low) | (high & big))
    mask[outside] = IGNORE
    mask[new_bg] = 0.0
    return mask


def merge_points(original, detected) -> np.ndarray:
    """Original points plus detections, dropping exact duplicates."""
    orig = as_points(original)
    det = as_points(detected)
    if det.shape[0] == 0:
        return orig.copy()
    merged = [orig]
    existing = {(float(r), float(c)) for r, c in orig}
    fresh = [p for p in det if (float(p[0]), float(p[1])) not in existing]
    if fresh:
        merged.append(np.asarray(fresh))
    return np.concatenate(merged, axis=0)


def self_train(
    images,
    initial_points,
    cfg: DetectionConfig,
    strategy: str,
    trainer,
    predictor,
    initial_model=None,
    warm_start: str = "initial",
):
    """Iteratively retrain a detector, refining supervision each round.

    ``trainer(images, masks, model)`` fits a model (continuing from ``model``
    unless it is None) and ``predictor(model, image)`` returns a probability
    map. Strategy ``ST-bg`` rebuilds masks by background propagation from the
    original points; ``ST-nu`` instead adds the current detections as extra
    Gaussian-mask centres (the background annulus is re-derived from the
    union). Each round restarts training from the initial model's weights;
    ``warm_start`` can be set to ``"previous"`` to continue from the last
    round or ``"cold"`` to re-initialize. Returns the final model, its
    per-image detections, and the per-round mask lists.
    """
    if strategy not in ("ST-bg", "ST-nu"):
        raise ValueError(f"unknown self-training strategy {strategy!r}")
    if warm_start not in ("initial", "previous", "cold"):
        raise ValueError(f"unknown warm_start mode {warm_start!r}")
    points_per_image = [as_points(p) for p in initial_points]
    if len(points_per_image) != len(images):
        raise ShapeMismatch("one point set per image is required")

    model = initial_model
    if model is None:
        masks = [
            extended_gaussian_mask(pts, img.shape[0], img.shape[1], cfg)
            for img, pts in zip(images, points_per_image)
        ]
        model = trainer(images, masks, None)
    first_model = model

    round_masks: list[list[np.ndarray]] = []
    for _ in range(cfg.rounds):
        probs = [predictor(model, img) for img in images]
        if strategy == "ST-bg":
            masks = [
                propagate_background(p, pts, cfg)
                for p, pts in zip(probs, points_per_image)
            ]
        else:
            masks = []
            for img, p, pts in zip(images, probs, points_per_image):
                dets = extract_detections(p, cfg.prob_threshold)
                union = merge_points(pts, dets)
                masks.append(extended_gaussian_mask(union, img.shape[0], img.shape[1], cfg))
        round_masks.append(masks)
        start = {"initial": first_model, "previous": model, "cold": None}[warm_start]
        model = trainer(images, masks, start)

    detections = [extract_detections(predictor(model, img), cfg.prob_threshold) for img in images]
    return model, detections, round_masks

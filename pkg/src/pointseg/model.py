"""Lightweight differentiable per-pixel classifier and its training loops.

The model is a 9 -> hidden -> 1 perceptron with tanh hidden units and a
sigmoid output, applied independently to every pixel's feature vector. It
deliberately has no spatial receptive field beyond the 5x5 window baked into
the features, which keeps the label-synthesis and loss machinery the
interesting part of the pipeline.

All training is full-image batches with one Adam step per image per epoch.
Runs are bitwise deterministic given (data, seed, config).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .crf import AffinityOperator, CrfParams, combined_ce, crf_total_loss
from .detection import DetectionConfig, weighted_mse_loss
from .errors import EmptySupport, ShapeMismatch
from .raster import check_image

N_FEATURES = 9
_WINDOW = 5


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 80
    seed: int = 0
    hidden: int = 16
    batch: str = "full-image"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


def _box_mean(channel: np.ndarray) -> np.ndarray:
    """5x5 window mean with clamped (edge-replicating) padding."""
    r = _WINDOW // 2
    padded = np.pad(channel, r, mode="edge")
    rows = sum(padded[k : k + channel.shape[0], :] for k in range(_WINDOW))
    total = sum(rows[:, k : k + channel.shape[1]] for k in range(_WINDOW))
    return total / (_WINDOW * _WINDOW)


def featurize(image) -> np.ndarray:
    """Per-pixel features: color, 5x5 mean color, 5x5 luminance spread,
    and normalized position. Shape (H, W, 9), all entries in [0, 1]."""
    img = check_image(image)
    h, w = img.shape[:2]
    feats = np.empty((h, w, N_FEATURES))
    feats[..., 0:3] = img
    for c in range(3):
        feats[..., 3 + c] = _box_mean(img[..., c])
    lum = img.mean(axis=2)
    var = _box_mean(lum**2) - _box_mean(lum) ** 2
    feats[..., 6] = np.sqrt(np.maximum(var, 0.0))
    rr, cc = np.mgrid[0:h, 0:w]
    feats[..., 7] = rr / (h - 1) if h > 1 else 0.0
    feats[..., 8] = cc / (w - 1) if w > 1 else 0.0
    return feats


class PixelModel:
    """Two-layer perceptron over per-pixel features."""

    def __init__(self, w1: np.ndarray, b1: np.ndarray, w2: np.ndarray, b2: float):
        self.w1 = np.asarray(w1, dtype=float)
        self.b1 = np.asarray(b1, dtype=float)
        self.w2 = np.asarray(w2, dtype=float)
        self.b2 = float(b2)
        if self.w1.ndim != 2 or self.w1.shape[0] != self.b1.shape[0] or self.w1.shape[0] != self.w2.shape[0]:
            raise ShapeMismatch("inconsistent layer shapes")

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    @property
    def n_features(self) -> int:
        return self.w1.shape[1]

    def copy(self) -> "PixelModel":
        return PixelModel(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2)

    def params(self) -> dict[str, np.ndarray | float]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}


def init_model(seed: int, hidden: int = 16, n_features: int = N_FEATURES) -> PixelModel:
    rng = np.random.default_rng(seed)
    w1 = rng.uniform(-1.0, 1.0, size=(hidden, n_features)) / np.sqrt(n_features)
    b1 = rng.uniform(-0.1, 0.1, size=hidden)
    w2 = rng.uniform(-1.0, 1.0, size=hidden) / np.sqrt(hidden)
    b2 = float(rng.uniform(-0.1, 0.1))
    return PixelModel(w1, b1, w2, b2)


def _forward_parts(model: PixelModel, feats2d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    hidden = np.tanh(feats2d @ model.w1.T + model.b1)
    logit = hidden @ model.w2 + model.b2
    return hidden, 1.0 / (1.0 + np.exp(-logit))


def forward(model: PixelModel, features) -> np.ndarray:
    """Sigmoid output per pixel; input (..., 9) gives output (...)."""
    feats = np.asarray(features, dtype=float)
    if feats.shape[-1] != model.n_features:
        raise ShapeMismatch(f"features have {feats.shape[-1]} channels, model expects {model.n_features}")
    _, prob = _forward_parts(model, feats.reshape(-1, model.n_features))
    return prob.reshape(feats.shape[:-1])


def backward(model: PixelModel, features, upstream_grad, cache=None) -> dict[str, np.ndarray | float]:
    """Exact gradients of sum_i upstream_grad_i * output_i w.r.t. the weights.

    ``cache`` may carry (hidden, prob) from a previous forward pass over the
    same features to skip recomputing the activations.
    """
    feats = np.asarray(features, dtype=float).reshape(-1, model.n_features)
    g = np.asarray(upstream_grad, dtype=float).reshape(-1)
    if g.shape[0] != feats.shape[0]:
        raise ShapeMismatch("upstream gradient does not match feature count")
    hidden, p = _forward_parts(model, feats) if cache is None else cache
    g_logit = g * p.reshape(-1) * (1.0 - p.reshape(-1))
    grad_w2 = hidden.T @ g_logit
    grad_b2 = float(g_logit.sum())
    g_z = (g_logit[:, None] * model.w2[None, :]) * (1.0 - hidden**2)
    grad_w1 = g_z.T @ feats
    grad_b1 = g_z.sum(axis=0)
    return {"w1": grad_w1, "b1": grad_b1, "w2": grad_w2, "b2": grad_b2}


class AdamState:
    """First/second moment accumulators for one model."""

    def __init__(self, model: PixelModel):
        self.m = {k: np.zeros_like(v) if isinstance(v, np.ndarray) else 0.0 for k, v in model.params().items()}
        self.v = {k: np.zeros_like(v) if isinstance(v, np.ndarray) else 0.0 for k, v in model.params().items()}
        self.t = 0


def adam_step(model: PixelModel, state: AdamState, grads: dict, cfg: TrainConfig, learning_rate: float | None = None) -> PixelModel:
    """One bias-corrected Adam update, in place."""
    lr = cfg.learning_rate if learning_rate is None else learning_rate
    state.t += 1
    bc1 = 1.0 - cfg.beta1**state.t
    bc2 = 1.0 - cfg.beta2**state.t
    for key, grad in grads.items():
        state.m[key] = cfg.beta1 * state.m[key] + (1.0 - cfg.beta1) * grad
        state.v[key] = cfg.beta2 * state.v[key] + (1.0 - cfg.beta2) * (grad * grad if isinstance(grad, np.ndarray) else grad**2)
        m_hat = state.m[key] / bc1
        v_hat = state.v[key] / bc2
        step = lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
        if key == "b2":
            model.b2 -= float(step)
        else:
            setattr(model, key, getattr(model, key) - step)
    return model


def predict(model: PixelModel, image) -> np.ndarray:
    """Probability map for an image (featurize + forward)."""
    return forward(model, featurize(image))


def _run_epochs(views, cfg: TrainConfig, init: PixelModel | None, val=None, learning_rate: float | None = None):
    """Generic loop: one Adam step per (features, loss) view per epoch.

    Each view is a (feats2d, loss_fn) pair where loss_fn maps the
    probability vector over those features to (loss, grad).
    """
    model = init.copy() if init is not None else init_model(cfg.seed, cfg.hidden)
    state = AdamState(model)
    best = model.copy()
    best_val = np.inf
    for _ in range(cfg.epochs):
        for feats2d, loss_fn in views:
            cache = _forward_parts(model, feats2d)
            _, grad_prob = loss_fn(cache[1])
            grads = backward(model, feats2d, grad_prob, cache=cache)
            adam_step(model, state, grads, cfg, learning_rate)
        if val is not None:
            val_loss = val(model)
            if val_loss < best_val:
                best_val = val_loss
                best = model.copy()
    if val is not None and cfg.epochs > 0:
        return best
    return model


def train_detection(images, masks, cfg: TrainConfig, det_cfg: DetectionConfig, init: PixelModel | None = None, val=None) -> PixelModel:
    """Fit the regression objective against extended Gaussian masks.

    Only the non-ignored pixels carry loss and gradient, so each training
    view is restricted to the mask support (a large saving for the sparse
    extended masks). ``val`` may be a (val_images, val_masks) pair; the
    model with the lowest validation loss across epochs is returned in that
    case.
    """
    if len(images) == 0:
        raise ValueError("at least one image/mask pair is required")
    views = []
    for img, mask in zip(images, masks):
        mask = np.asarray(mask, dtype=float)
        feats2d = featurize(img).reshape(-1, N_FEATURES)
        support = mask.reshape(-1) != -1.0
        n = int(support.sum())
        if n == 0:
            raise EmptySupport("mask has no usable pixels")
        target = mask.reshape(-1)[support]
        weight = np.where(target > 0.0, det_cfg.w_pos, det_cfg.w_bg)

        def loss_fn(prob, target=target, weight=weight, n=n):
            diff = prob - target
            loss = float(np.sum(weight * diff**2) / n)
            return loss, 2.0 * weight * diff / n

        views.append((feats2d[support], loss_fn))

    val_fn = None
    if val is not None:
        val_feats = [featurize(img) for img in val[0]]
        val_masks = [np.asarray(m, dtype=float) for m in val[1]]

        def val_fn(model):
            return float(
                np.mean([weighted_mse_loss(forward(model, f), m, det_cfg)[0] for f, m in zip(val_feats, val_masks)])
            )

    return _run_epochs(views, cfg, init, val_fn)


def _compact_ce(prob, is_pos, is_neg, n):
    """Cross entropy over a compact view; mirrors the full-map operation."""
    y = np.clip(prob, 1e-7, 1.0 - 1e-7)
    loss = -(np.sum(np.log(y[is_pos])) + np.sum(np.log(1.0 - y[is_neg]))) / n
    grad = np.zeros_like(prob)
    grad[is_pos] = -1.0 / y[is_pos] / n
    grad[is_neg] = 1.0 / (1.0 - y[is_neg]) / n
    return float(loss), grad


def train_segmentation(images, vor_labels, cluster_labels, alpha: float, cfg: TrainConfig, init: PixelModel | None = None, val=None) -> PixelModel:
    """Fit the combined Voronoi/cluster cross-entropy objective.

    Views are restricted to pixels usable by at least one active label; at
    the alpha endpoints the inactive label is skipped entirely.
    """
    if len(images) == 0:
        raise ValueError("at least one labelled image is required")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    views = []
    for img, vor, clu in zip(images, vor_labels, cluster_labels):
        vor = np.asarray(vor).reshape(-1)
        clu = np.asarray(clu).reshape(-1)
        use_vor = alpha > 0.0
        use_clu = alpha < 1.0
        support = np.zeros(vor.shape, dtype=bool)
        if use_vor:
            support |= vor != -1
        if use_clu:
            support |= clu != -1
        if not support.any():
            raise EmptySupport("labels have no usable pixels")
        feats2d = featurize(img).reshape(-1, N_FEATURES)[support]
        terms = []
        for use, label, weight in ((use_vor, vor, alpha), (use_clu, clu, 1.0 - alpha)):
            if not use:
                continue
            sub = label[support]
            n = int((sub != -1).sum())
            if n == 0:
                raise EmptySupport("a label has no usable pixels")
            terms.append((sub == 1, sub == 0, n, weight))

        def loss_fn(prob, terms=terms):
            total = 0.0
            grad = np.zeros_like(prob)
            for is_pos, is_neg, n, weight in terms:
                loss_t, grad_t = _compact_ce(prob, is_pos, is_neg, n)
                total += weight * loss_t
                grad += weight * grad_t
            return total, grad

        views.append((feats2d, loss_fn))

    val_fn = None
    if val is not None:
        val_feats = [featurize(img) for img in val[0]]
        val_vor = [np.asarray(v) for v in val[1]]
        val_clu = [np.asarray(c) for c in val[2]]

        def val_fn(model):
            return float(
                np.mean(
                    [combined_ce(forward(model, f), tv, tc, alpha)[0] for f, tv, tc in zip(val_feats, val_vor, val_clu)]
                )
            )

    return _run_epochs(views, cfg, init, val_fn)


def finetune_crf(
    model: PixelModel,
    images,
    vor_labels,
    cluster_labels,
    alpha: float,
    crf_params: CrfParams,
    cfg: TrainConfig,
    learning_rate: float | None = None,
    affinity_mode: str = "filtered",
    ops: list[AffinityOperator] | None = None,
) -> PixelModel:
    """Continue training with the dense-CRF total loss.

    The default learning rate is one tenth of the configured base rate.
    With beta = 0 the pairwise term vanishes and this is plain continued
    cross-entropy training.
    """
    if learning_rate is None:
        learning_rate = cfg.learning_rate / 10.0
    if crf_params.beta == 0.0:
        slow = replace(cfg, learning_rate=learning_rate)
        return train_segmentation(images, vor_labels, cluster_labels, alpha, slow, init=model)
    vor = [np.asarray(v) for v in vor_labels]
    clu = [np.asarray(c) for c in cluster_labels]
    if ops is None:
        ops = [AffinityOperator(img, crf_params, mode=affinity_mode) for img in images]

    views = []
    for img, v, c, op in zip(images, vor, clu, ops):
        shape = v.shape
        feats2d = featurize(img).reshape(-1, N_FEATURES)

        def loss_fn(prob, v=v, c=c, op=op, shape=shape):
            loss, grad = crf_total_loss(prob.reshape(shape), v, c, alpha, op, crf_params.beta)
            return loss, grad.reshape(-1)

        views.append((feats2d, loss_fn))

    return _run_epochs(views, cfg, model, None, learning_rate)

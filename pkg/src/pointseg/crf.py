"""Stage-2 losses: masked cross entropy, the combined two-label loss, and the
relaxed dense-CRF pairwise loss with exact and fast-filtered evaluation.

The pairwise affinity between pixels i and j is a bilateral Gaussian
``W_ij = sum_m w_m * exp(-||f_i - f_j||^2 / 2)`` over the feature
``f = (row/sigma_pq, col/sigma_pq, r/sigma_rgb, g/sigma_rgb, b/sigma_rgb)``.
Self-affinities (i == j) are excluded from every sum.

``mode="exact"`` evaluates the O(N^2) sum in row chunks and serves as the
oracle. ``mode="filtered"`` approximates multiplication by W with
splat/blur/slice passes over 5-D bilateral grids: values are scattered onto
a lattice sampled at ``grid_step`` standard deviations with multilinear
weights, blurred along each axis with a truncated Gaussian whose variance is
reduced to compensate for the two interpolation steps, and gathered back.
The kernel sum is scaled so the composite response has unit peak. Because
the multilinear basis makes the response wobble with the sub-cell phase of
each pixel, two lattices offset by half a cell are averaged, which cancels
the leading wobble term. Each lattice's own diagonal response is separable
over axes, computed per pixel, and subtracted exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import EmptySupport, ShapeMismatch
from .raster import check_image

CLAMP_EPS = 1e-7


@dataclass(frozen=True)
class CrfParams:
    sigma_pq: float = 9.0
    sigma_rgb: float = 0.2
    beta: float = 0.001
    kernel_weights: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        if self.sigma_pq <= 0 or self.sigma_rgb <= 0:
            raise ValueError("sigma_pq and sigma_rgb must be > 0")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if len(self.kernel_weights) < 1:
            raise ValueError("kernel_weights must contain at least one weight")

    @property
    def weight_sum(self) -> float:
        return float(sum(self.kernel_weights))


def bilateral_features(image, params: CrfParams) -> np.ndarray:
    img = check_image(image)
    h, w = img.shape[:2]
    rr, cc = np.mgrid[0:h, 0:w]
    feats = np.empty((h * w, 5))
    feats[:, 0] = rr.ravel() / params.sigma_pq
    feats[:, 1] = cc.ravel() / params.sigma_pq
    feats[:, 2:] = img.reshape(-1, 3) / params.sigma_rgb
    return feats


class AffinityOperator:
    """Applies v -> W v (diagonal excluded) for a fixed image and parameters."""

    def __init__(self, image, params: CrfParams, mode: str = "exact", grid_step: float = 1.0):
        if mode not in ("exact", "filtered"):
            raise ValueError(f"mode must be 'exact' or 'filtered', got {mode!r}")
        self.params = params
        self.mode = mode
        self.shape = np.asarray(image).shape[:2]
        self.n = self.shape[0] * self.shape[1]
        self._features = bilateral_features(image, params)
        self._row_sums: np.ndarray | None = None
        if mode == "filtered":
            self._lattices = (
                _BilateralGrid(self._features, grid_step, shift=0.0),
                _BilateralGrid(self._features, grid_step, shift=0.5),
            )

    def apply(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        flat = v.reshape(-1)
        if flat.shape[0] != self.n:
            raise ShapeMismatch(f"vector has {flat.shape[0]} entries, image has {self.n} pixels")
        if self.mode == "exact":
            out = self._apply_exact(flat)
        else:
            out = 0.5 * (self._lattices[0].apply(flat) + self._lattices[1].apply(flat))
            out *= self.params.weight_sum
        return out.reshape(v.shape)

    def row_sums(self) -> np.ndarray:
        """W applied to the all-ones vector, cached (it is reused per loss call)."""
        if self._row_sums is None:
            self._row_sums = self.apply(np.ones(self.n))
        return self._row_sums

    def _apply_exact(self, flat: np.ndarray) -> np.ndarray:
        feats = self._features
        out = np.empty(self.n)
        chunk = max(1, int(2**22 // max(self.n, 1)))
        for start in range(0, self.n, chunk):
            stop = min(start + chunk, self.n)
            block = feats[start:stop]
            d2 = (
                np.sum(block**2, axis=1)[:, None]
                + np.sum(feats**2, axis=1)[None, :]
                - 2.0 * block @ feats.T
            )
            np.maximum(d2, 0.0, out=d2)
            w_block = np.exp(-0.5 * d2)
            out[start:stop] = w_block @ flat
        out *= self.params.weight_sum
        # remove the i == j term (unit affinity at zero feature distance)
        out -= self.params.weight_sum * flat
        return out


class _BilateralGrid:
    """One splat/blur/slice lattice; corner indices/weights are precomputed."""

    def __init__(self, features: np.ndarray, step: float, shift: float = 0.0):
        if step <= 0:
            raise ValueError("grid_step must be > 0")
        if step * step >= 3.0:
            raise ValueError("grid_step too coarse for the interpolation variance correction")
        coords = features / step + shift
        lo = np.floor(coords.min(axis=0)).astype(int)
        # blur variance correction: two multilinear interpolations add 1/6
        # grid-cell variance each, the kernel supplies the rest of 1/step^2
        var = 1.0 / step**2 - 1.0 / 3.0
        sigma = float(np.sqrt(var))
        radius = max(1, int(np.ceil(3.0 * sigma)))
        taps = np.exp(-0.5 * (np.arange(-radius, radius + 1) / sigma) ** 2)
        # unit-peak composite response: kernel mass sqrt(2*pi)/step per axis
        self.kernel = taps * (np.sqrt(2.0 * np.pi) / step / taps.sum())

        pad = radius + 1
        base = np.floor(coords).astype(int) - lo + pad
        frac = coords - np.floor(coords)
        self.dims = tuple(base.max(axis=0) + pad + 2)
        strides = np.array([int(np.prod(self.dims[a + 1 :])) for a in range(5)], dtype=np.int64)
        self.size = int(np.prod(self.dims))

        k0 = self.kernel[radius]
        k1 = self.kernel[radius + 1]
        w1 = frac
        w0 = 1.0 - w1
        # the lattice's own response at zero offset factorizes over axes
        per_axis = (w0**2 + w1**2) * k0 + 2.0 * w0 * w1 * k1
        self.diagonal = per_axis.prod(axis=1)

        base_index = base @ strides
        indices = np.empty((32, frac.shape[0]), dtype=np.int64)
        weights = np.empty((32, frac.shape[0]))
        for bits in range(32):
            offs = np.array([(bits >> a) & 1 for a in range(5)], dtype=np.int64)
            weight = np.ones(frac.shape[0])
            for a in range(5):
                weight = weight * (frac[:, a] if offs[a] else 1.0 - frac[:, a])
            indices[bits] = base_index + offs @ strides
            weights[bits] = weight
        self._indices_flat = indices.reshape(-1)
        self._indices = indices
        self._weights = weights

    def apply(self, flat: np.ndarray) -> np.ndarray:
        """Splat, blur, slice, and remove this lattice's own diagonal term."""
        grid = np.bincount(
            self._indices_flat, weights=(self._weights * flat).reshape(-1), minlength=self.size
        )
        grid = grid.reshape(self.dims)
        for axis in range(5):
            grid = ndimage.correlate1d(grid, self.kernel, axis=axis, mode="constant")
        grid = grid.reshape(-1)
        out = np.einsum("cn,cn->n", self._weights, grid[self._indices])
        return out - self.diagonal * flat


def affinity_apply(op: AffinityOperator, v) -> np.ndarray:
    """Sum of W_ij * v_j over j != i for every pixel i."""
    return op.apply(v)


def masked_cross_entropy(prob, label) -> tuple[float, np.ndarray]:
    """Binary cross entropy over non-ignored pixels of a tri-state label."""
    prob = np.asarray(prob, dtype=float)
    label = np.asarray(label)
    if prob.shape != label.shape:
        raise ShapeMismatch(f"prob {prob.shape} vs label {label.shape}")
    support = label != -1
    n = int(support.sum())
    if n == 0:
        raise EmptySupport("label has no usable pixels")
    t = (label == 1).astype(float)
    y = np.clip(prob, CLAMP_EPS, 1.0 - CLAMP_EPS)
    loss = float(-np.sum(t[support] * np.log(y[support]) + (1.0 - t[support]) * np.log(1.0 - y[support])) / n)
    grad = np.zeros_like(prob)
    grad[support] = -(t[support] / y[support] - (1.0 - t[support]) / (1.0 - y[support])) / n
    return loss, grad


def combined_ce(prob, vor_label, cluster_label, alpha: float) -> tuple[float, np.ndarray]:
    """alpha-weighted sum of the Voronoi- and cluster-label cross entropies.

    At the endpoints only the active label is evaluated, so training with
    alpha = 1 behaves exactly as if the cluster label were all-ignored (and
    symmetrically for alpha = 0).
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if alpha == 1.0:
        return masked_cross_entropy(prob, vor_label)
    if alpha == 0.0:
        return masked_cross_entropy(prob, cluster_label)
    loss_v, grad_v = masked_cross_entropy(prob, vor_label)
    loss_c, grad_c = masked_cross_entropy(prob, cluster_label)
    return alpha * loss_v + (1.0 - alpha) * loss_c, alpha * grad_v + (1.0 - alpha) * grad_c


def crf_pair_loss(prob, op: AffinityOperator) -> tuple[float, np.ndarray]:
    """Relaxed pairwise potential sum_{i != j} y_i (1 - y_j) W_ij.

    Evaluated with two affinity applications: u = W 1 and w = W y give
    loss = sum_i y_i (u_i - w_i) and, by symmetry of W,
    grad_i = u_i - 2 w_i.
    """
    y = np.asarray(prob, dtype=float)
    u = op.row_sums().reshape(y.shape)
    w = op.apply(y)
    loss = float(np.sum(y * (u - w)))
    grad = u - 2.0 * w
    return loss, grad


def crf_total_loss(prob, vor_label, cluster_label, alpha: float, op: AffinityOperator, beta: float) -> tuple[float, np.ndarray]:
    """Cross-entropy term plus beta times the relaxed pairwise loss."""
    loss_ce, grad_ce = combined_ce(prob, vor_label, cluster_label, alpha)
    if beta == 0.0:
        return loss_ce, grad_ce
    loss_p, grad_p = crf_pair_loss(prob, op)
    return loss_ce + beta * loss_p, grad_ce + beta * grad_p


def mean_field_refine(prob, op: AffinityOperator, unary, iterations: int) -> np.ndarray:
    """Mean-field updates for the two-class dense CRF, as a post-processing
    baseline. ``unary`` is an (H, W, 2) array of (background, nucleus)
    scores; each iteration sets y to the softmax of the unary minus the
    pairwise message computed through the affinity operator.
    """
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    y = np.asarray(prob, dtype=float)
    unary = np.asarray(unary, dtype=float)
    if unary.shape != y.shape + (2,):
        raise ShapeMismatch(f"unary must have shape {y.shape + (2,)}, got {unary.shape}")
    q_nuc = y.copy()
    for _ in range(iterations):
        m_bg = op.apply(q_nuc)
        m_nuc = op.apply(1.0 - q_nuc)
        s_bg = unary[..., 0] - m_bg
        s_nuc = unary[..., 1] - m_nuc
        top = np.maximum(s_bg, s_nuc)
        e_bg = np.exp(s_bg - top)
        e_nuc = np.exp(s_nuc - top)
        q_nuc = e_nuc / (e_bg + e_nuc)
    return q_nuc

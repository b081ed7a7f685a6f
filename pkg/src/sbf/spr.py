"""Simplified PointRend head.

A point is described by features bilinearly sampled from a feature grid plus
a sinusoidal encoding of its normalized position. A 3-layer ReLU perceptron
maps that to one logistic score per output channel. Training is gradient
descent on point annotations; dense maps come from adaptive subdivision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .annotate import PointAnnotationSet
from .errors import DivergenceDetected, ShapeMismatch
from .grid import sample_bilinear
from .loss import CLAMP

OCTAVES = 6
HIDDEN = 256
PARAM_NAMES = ("w1", "b1", "w2", "b2", "w3", "b3")


@dataclass
class HeadParams:
    w1: np.ndarray  # (hidden, in_dim)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden, hidden)
    b2: np.ndarray
    w3: np.ndarray  # (out_dim, hidden)
    b3: np.ndarray  # (out_dim,)

    def __post_init__(self):
        for name in PARAM_NAMES:
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        hidden, in_dim = self.w1.shape
        if (self.b1.shape != (hidden,) or self.w2.shape != (hidden, hidden)
                or self.b2.shape != (hidden,) or self.w3.shape[1:] != (hidden,)
                or self.b3.shape != self.w3.shape[:1]):
            raise ShapeMismatch("inconsistent head parameter shapes")

    @property
    def in_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    @property
    def out_dim(self) -> int:
        return self.w3.shape[0]

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, n) for n in PARAM_NAMES]

    def copy(self) -> "HeadParams":
        return HeadParams(*(a.copy() for a in self.arrays()))

    def equals(self, other: "HeadParams") -> bool:
        return all(np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays()))

    @classmethod
    def zeros(cls, in_dim: int, hidden: int = HIDDEN, out_dim: int = 1) -> "HeadParams":
        return cls(np.zeros((hidden, in_dim)), np.zeros(hidden), np.zeros((hidden, hidden)),
                   np.zeros(hidden), np.zeros((out_dim, hidden)), np.zeros(out_dim))


def init_params(in_dim: int, hidden: int = HIDDEN, out_dim: int = 1, seed: int = 0) -> HeadParams:
    """He-normal weights for the ReLU layers, zero biases."""
    rng = np.random.default_rng(seed)
    return HeadParams(
        rng.normal(0.0, np.sqrt(2.0 / in_dim), (hidden, in_dim)), np.zeros(hidden),
        rng.normal(0.0, np.sqrt(2.0 / hidden), (hidden, hidden)), np.zeros(hidden),
        rng.normal(0.0, np.sqrt(1.0 / hidden), (out_dim, hidden)), np.zeros(out_dim),
    )


def positional_encoding(u, v, octaves: int = OCTAVES) -> np.ndarray:
    """``[sin(2^k pi u), cos(2^k pi u), sin(2^k pi v), cos(2^k pi v)]`` for k < octaves.

    Scalars give a ``(4K,)`` vector, arrays give ``(n, 4K)``.
    """
    scalar = np.ndim(u) == 0 and np.ndim(v) == 0
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))
    v = np.atleast_1d(np.asarray(v, dtype=np.float64))
    freq = np.pi * 2.0 ** np.arange(octaves)
    au = u[:, None] * freq
    av = v[:, None] * freq
    enc = np.stack([np.sin(au), np.cos(au), np.sin(av), np.cos(av)], axis=-1)
    enc = enc.reshape(len(u), 4 * octaves)
    return enc[0] if scalar else enc


def point_features(grid: np.ndarray, rows, cols, octaves: int = OCTAVES) -> np.ndarray:
    """Features for points at subpixel ``(rows, cols)`` of a ``(D, h, w)`` grid.

    Returns ``(n, D + 4 * octaves)``. Normalized coordinates are taken at
    pixel centres, ``u = (col + 0.5) / w``.
    """
    grid = np.asarray(grid, dtype=np.float64)
    _, h, w = grid.shape
    rows = np.asarray(rows, dtype=np.float64)
    cols = np.asarray(cols, dtype=np.float64)
    u = np.clip((cols + 0.5) / w, 0.0, 1.0)
    v = np.clip((rows + 0.5) / h, 0.0, 1.0)
    return np.concatenate([sample_bilinear(grid, rows, cols), positional_encoding(u, v, octaves)], axis=1)


def _relu(x):
    return np.maximum(x, 0.0)


def _sigmoid(z):
    return np.exp(-np.logaddexp(0.0, -z))


def _forward(params: HeadParams, x: np.ndarray):
    z1 = x @ params.w1.T + params.b1
    a1 = _relu(z1)
    z2 = a1 @ params.w2.T + params.b2
    a2 = _relu(z2)
    z3 = a2 @ params.w3.T + params.b3
    return z1, a1, z2, a2, z3


def head_forward(params: HeadParams, feat) -> np.ndarray:
    """Probabilities, ``(n, out_dim)`` for a feature matrix or ``(out_dim,)`` for one vector."""
    x = np.asarray(feat, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != params.in_dim:
        raise ShapeMismatch(f"feature length {x.shape[1]} != head input {params.in_dim}")
    p = _sigmoid(_forward(params, x)[-1])
    return p[0] if single else p


def _as_targets(params, labels, weights, n):
    y = np.asarray(labels, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape != (n, params.out_dim):
        raise ShapeMismatch(f"labels {y.shape} do not match ({n}, {params.out_dim})")
    if weights is None:
        w = np.full(y.shape, 1.0 / n)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim == 1:
            w = w[:, None]
        w = np.broadcast_to(w, y.shape)
    return y, w


def head_loss(params: HeadParams, feats, labels, weights=None) -> float:
    """Weighted clamped BCE; default weights ``1/n`` give the per-output mean."""
    x = np.atleast_2d(np.asarray(feats, dtype=np.float64))
    y, w = _as_targets(params, labels, weights, len(x))
    p = np.clip(_sigmoid(_forward(params, x)[-1]), CLAMP, 1.0 - CLAMP)
    return float(np.sum(w * -(y * np.log(p) + (1.0 - y) * np.log1p(-p))))


def head_gradient(params: HeadParams, feats, labels, weights=None) -> tuple[float, HeadParams]:
    """Loss and its gradient with respect to every parameter.

    The loss is the clamped BCE of the loss module, so points whose
    probability sits outside the clamp contribute no gradient. The ReLU
    derivative at 0 is taken as 0.
    """
    x = np.atleast_2d(np.asarray(feats, dtype=np.float64))
    if len(x) == 0:
        raise ValueError("empty batch")
    y, w = _as_targets(params, labels, weights, len(x))
    z1, a1, z2, a2, z3 = _forward(params, x)
    p = _sigmoid(z3)
    pc = np.clip(p, CLAMP, 1.0 - CLAMP)
    loss = float(np.sum(w * -(y * np.log(pc) + (1.0 - y) * np.log1p(-pc))))
    inside = (p > CLAMP) & (p < 1.0 - CLAMP)
    dz3 = w * (p - y) * inside
    dw3 = dz3.T @ a2
    db3 = dz3.sum(axis=0)
    dz2 = (dz3 @ params.w3) * (z2 > 0)
    dw2 = dz2.T @ a1
    db2 = dz2.sum(axis=0)
    dz1 = (dz2 @ params.w2) * (z1 > 0)
    dw1 = dz1.T @ x
    db1 = dz1.sum(axis=0)
    return loss, HeadParams(dw1, db1, dw2, db2, dw3, db3)


# --- training ---------------------------------------------------------------

@dataclass
class PointBatch:
    """Precomputed point features with per-output labels and loss weights."""

    feats: np.ndarray  # (n, in_dim)
    labels: np.ndarray  # (n, out_dim)
    weights: np.ndarray  # (n, out_dim)

    def __len__(self):
        return len(self.feats)

    @staticmethod
    def concat(batches: list["PointBatch"], average: bool = True) -> "PointBatch":
        """Stack batches; with ``average`` each batch's weights are divided by the batch count."""
        k = len(batches) if average else 1
        return PointBatch(np.concatenate([b.feats for b in batches]),
                          np.concatenate([b.labels for b in batches]),
                          np.concatenate([b.weights for b in batches]) / k)


def batch_from_annotations(ann: PointAnnotationSet, grid: np.ndarray, alpha: float = 19.0,
                           octaves: int = OCTAVES) -> PointBatch:
    """Turn an annotation set into a weighted point batch.

    Scale annotations map joint j onto output unit j with weight ``1/n_pos``
    for positives and ``alpha/n_neg`` for negatives, so the weighted sum is
    the scale loss. Body and flow annotations get a single output with mean
    weights.
    """
    if ann.head == "scale":
        out_dim = len(ann.groups)
        feats, labels, weights = [], [], []
        for j, g in enumerate(ann.groups):
            lab = g[:, 2]
            n_pos = max(int((lab == 1).sum()), 1)
            n_neg = max(int((lab == 0).sum()), 1)
            y = np.zeros((len(g), out_dim))
            wt = np.zeros((len(g), out_dim))
            y[:, j] = lab
            wt[:, j] = np.where(lab == 1, 1.0 / n_pos, alpha / n_neg)
            feats.append(point_features(grid, g[:, 0], g[:, 1], octaves))
            labels.append(y)
            weights.append(wt)
        return PointBatch(np.concatenate(feats), np.concatenate(labels), np.concatenate(weights))
    (g,) = ann.groups
    return PointBatch(point_features(grid, g[:, 0], g[:, 1], octaves),
                      g[:, 2:3].astype(np.float64), np.full((len(g), 1), 1.0 / len(g)))


@dataclass
class TrainHyper:
    steps: int = 2000
    lr: float = 0.01
    momentum: float = 0.9
    seed: int = 0
    hidden: int = HIDDEN
    batch_size: int | None = 256


@dataclass
class TrainResult:
    params: HeadParams
    init: HeadParams
    losses: list[float] = field(default_factory=list)


def train_head(batch: PointBatch, hyper: TrainHyper = TrainHyper(),
               init: HeadParams | None = None) -> TrainResult:
    """Gradient descent (optionally with heavy-ball momentum) on a point batch.

    With ``batch_size`` set, each step uses a seeded random subset of points,
    reweighted so the expected loss equals the full-batch loss. Everything is
    reproducible from ``hyper.seed``.
    """
    out_dim = batch.labels.shape[1]
    if init is None:
        init = init_params(batch.feats.shape[1], hyper.hidden, out_dim, hyper.seed)
    params = init.copy()
    rng = np.random.default_rng([hyper.seed, 1])
    velocity = [np.zeros_like(a) for a in params.arrays()]
    n = len(batch)
    use_subset = hyper.batch_size is not None and hyper.batch_size < n
    losses = []
    for step in range(hyper.steps):
        if use_subset:
            idx = np.sort(rng.choice(n, size=hyper.batch_size, replace=False))
            x, y = batch.feats[idx], batch.labels[idx]
            w = batch.weights[idx] * (n / hyper.batch_size)
        else:
            x, y, w = batch.feats, batch.labels, batch.weights
        loss, grad = head_gradient(params, x, y, w)
        if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grad.arrays()):
            raise DivergenceDetected(f"non-finite loss at step {step}")
        losses.append(loss)
        for name, v, g in zip(PARAM_NAMES, velocity, grad.arrays()):
            v *= hyper.momentum
            v += g
            getattr(params, name)[...] -= hyper.lr * v
    return TrainResult(params, init, losses)


# --- dense inference --------------------------------------------------------

def _eval_points(params, grid, rows, cols, octaves):
    return head_forward(params, point_features(grid, rows, cols, octaves))


def dense_scores(params: HeadParams, grid: np.ndarray, octaves: int = OCTAVES) -> np.ndarray:
    """Exhaustive evaluation at every pixel; ``(out_dim, h, w)``."""
    _, h, w = grid.shape
    rr, cc = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    p = _eval_points(params, grid, rr.ravel(), cc.ravel(), octaves)
    return p.T.reshape(params.out_dim, h, w)


def _upsample2x(scores: np.ndarray) -> np.ndarray:
    """Corner-aligned 2x bilinear upsampling: fine pixel r sits at coarse coordinate r / 2."""
    c, h, w = scores.shape
    out = np.empty((c, 2 * h, 2 * w))
    nxt_r = np.concatenate([scores[:, 1:], scores[:, -1:]], axis=1)
    rows = np.empty((c, 2 * h, w))
    rows[:, 0::2] = scores
    rows[:, 1::2] = scores + 0.5 * (nxt_r - scores)
    nxt_c = np.concatenate([rows[:, :, 1:], rows[:, :, -1:]], axis=2)
    out[:, :, 0::2] = rows
    out[:, :, 1::2] = rows + 0.5 * (nxt_c - rows)
    return out


def subdivision_scores(params: HeadParams, grid: np.ndarray, start_scale: int = 4, steps: int = 2,
                       points_per_step: int = 1024, octaves: int = OCTAVES) -> np.ndarray:
    """Coarse-to-fine scores via adaptive subdivision; ``(out_dim, h, w)``.

    The head is first evaluated on every ``start_scale``-th pixel of the
    feature grid. Each of ``steps`` rounds upsamples the scores 2x
    bilinearly and re-evaluates the ``points_per_step`` points whose score is
    closest to 0.5 (over all outputs). ``start_scale`` must equal
    ``2 ** steps`` so that the last round lands on the full grid.
    """
    _, h, w = grid.shape
    if start_scale != 2 ** steps:
        raise ValueError(f"start_scale ({start_scale}) must equal 2**steps ({2 ** steps})")
    if h % start_scale or w % start_scale:
        raise ValueError(f"start_scale {start_scale} does not divide grid {h}x{w}")

    def lattice(n, stride):
        return np.arange(n, dtype=np.float64) * stride

    hc, wc = h // start_scale, w // start_scale
    rr, cc = np.meshgrid(lattice(hc, start_scale), lattice(wc, start_scale), indexing="ij")
    scores = _eval_points(params, grid, rr.ravel(), cc.ravel(), octaves).T.reshape(-1, hc, wc)
    for k in range(1, steps + 1):
        stride = start_scale // 2 ** k
        hc, wc = hc * 2, wc * 2
        scores = _upsample2x(scores)
        uncertainty = np.abs(scores - 0.5).min(axis=0).ravel()
        n = min(points_per_step, uncertainty.size)
        if n <= 0:
            continue
        idx = np.sort(np.argsort(uncertainty, kind="stable")[:n])
        r, c = np.divmod(idx, wc)
        p = _eval_points(params, grid, lattice(hc, stride)[r], lattice(wc, stride)[c], octaves)
        flat = scores.reshape(scores.shape[0], -1)
        flat[:, idx] = p.T
    return scores


def binarize(scores: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    return (scores > threshold).astype(np.uint8)


def dense_infer(params: HeadParams, grid: np.ndarray, subdivision: tuple[int, int, int] = (4, 2, 1024),
                threshold: float = 0.5, octaves: int = OCTAVES) -> np.ndarray:
    """Binary map(s) ``(out_dim, h, w)`` by subdivision inference."""
    start_scale, steps, points_per_step = subdivision
    return binarize(subdivision_scores(params, grid, start_scale, steps, points_per_step, octaves),
                    threshold)

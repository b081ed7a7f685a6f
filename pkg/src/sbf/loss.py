"""Binary cross-entropy over sampled points and the composite head losses."""

from __future__ import annotations

import numpy as np

from .errors import LengthMismatch

CLAMP = 1e-7


def bce(scores, labels) -> float:
    """Mean binary cross-entropy; probabilities are clamped to [1e-7, 1 - 1e-7]."""
    p = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels, dtype=np.float64).ravel()
    if p.shape != y.shape:
        raise LengthMismatch(f"{p.size} scores vs {y.size} labels")
    if p.size == 0:
        raise LengthMismatch("empty score batch")
    p = np.clip(p, CLAMP, 1.0 - CLAMP)
    return float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log1p(-p))))


def scale_loss(per_joint, alpha: float) -> float:
    """Sum over joints of ``bce(pos, 1) + alpha * bce(neg, 0)``.

    ``per_joint`` is a sequence of ``(positive_scores, negative_scores)``.
    """
    total = 0.0
    for pos, neg in per_joint:
        pos = np.asarray(pos, dtype=np.float64)
        neg = np.asarray(neg, dtype=np.float64)
        total += bce(pos, np.ones_like(pos)) + alpha * bce(neg, np.zeros_like(neg))
    return total


def body_loss(scores, labels) -> float:
    return bce(scores, labels)


def flow_loss(scores, labels) -> float:
    return bce(scores, labels)


def total_loss(l_scale: float, l_body: float, lambda_body: float = 1.0,
               lambda_joint: float = 1.0) -> float:
    """``lambda_joint * l_scale + lambda_body * l_body``.

    ``lambda_joint`` defaults to 1, i.e. no coefficient on the scale term.
    """
    if l_scale < 0 or l_body < 0:
        raise ValueError("losses must be non-negative")
    if lambda_joint == 1.0:
        return l_scale + lambda_body * l_body
    return lambda_joint * l_scale + lambda_body * l_body

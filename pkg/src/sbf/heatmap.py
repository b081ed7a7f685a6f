"""Joint and limb Gaussian heatmap volumes.

Gaussians are confidence-weighted and unnormalized (peak = confidence), and
are evaluated only inside a window of radius ``3 * sigma`` around the joint
or limb; everything outside the window is zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import LimbGraph, Resolution, SkeletonFrame

TRUNCATE = 3.0


@dataclass(frozen=True)
class HeatVolume:
    data: np.ndarray  # (channels, h, w), float64 in [0, 1]
    variant: str  # "joint" | "limb"

    @property
    def shape(self):
        return self.data.shape


def _window(lo: float, hi: float, radius: float, size: int) -> tuple[int, int]:
    start = max(0, math.ceil(lo - radius))
    stop = min(size - 1, math.floor(hi + radius))
    return start, stop + 1


def _splat_point(out: np.ndarray, x: float, y: float, conf: float, sigma: float) -> None:
    h, w = out.shape
    radius = TRUNCATE * sigma
    r0, r1 = _window(y, y, radius, h)
    c0, c1 = _window(x, x, radius, w)
    if r0 >= r1 or c0 >= c1:
        return
    rows = np.arange(r0, r1, dtype=np.float64)[:, None]
    cols = np.arange(c0, c1, dtype=np.float64)[None, :]
    d2 = (rows - y) ** 2 + (cols - x) ** 2
    patch = conf * np.exp(-d2 / (2.0 * sigma * sigma))
    np.maximum(out[r0:r1, c0:c1], patch, out=out[r0:r1, c0:c1])


def _splat_segment(out, a, b, conf, sigma):
    # canonical endpoint order so (a, b) and (b, a) give bit-identical values
    if (b[0], b[1]) < (a[0], a[1]):
        a, b = b, a
    ax, ay = a
    bx, by = b
    h, w = out.shape
    radius = TRUNCATE * sigma
    r0, r1 = _window(min(ay, by), max(ay, by), radius, h)
    c0, c1 = _window(min(ax, bx), max(ax, bx), radius, w)
    if r0 >= r1 or c0 >= c1:
        return
    rows = np.arange(r0, r1, dtype=np.float64)[:, None]
    cols = np.arange(c0, c1, dtype=np.float64)[None, :]
    dx, dy = bx - ax, by - ay
    length2 = dx * dx + dy * dy
    if length2 == 0.0:
        d2 = (rows - ay) ** 2 + (cols - ax) ** 2
    else:
        t = np.clip(((cols - ax) * dx + (rows - ay) * dy) / length2, 0.0, 1.0)
        d2 = (rows - (ay + t * dy)) ** 2 + (cols - (ax + t * dx)) ** 2
    patch = conf * np.exp(-d2 / (2.0 * sigma * sigma))
    np.maximum(out[r0:r1, c0:c1], patch, out=out[r0:r1, c0:c1])


def joint_heatmap(frame: SkeletonFrame, sigma: float, res: Resolution) -> HeatVolume:
    """One Gaussian channel per joint, merged across persons by max."""
    vol = np.zeros((frame.num_joints, res.h, res.w))
    for p in range(len(frame.persons)):
        kp = frame.grid_coords(p, res)
        for k, (x, y, c) in enumerate(kp):
            if c > 0:
                _splat_point(vol[k], x, y, c, sigma)
    return HeatVolume(vol, "joint")


def limb_heatmap(frame: SkeletonFrame, graph: LimbGraph, sigma: float,
                 res: Resolution) -> HeatVolume:
    """One channel per limb: Gaussian of the point-to-segment distance.

    The limb confidence is the smaller of its two endpoint confidences.
    """
    vol = np.zeros((len(graph.limbs), res.h, res.w))
    for p in range(len(frame.persons)):
        kp = frame.grid_coords(p, res)
        for i, (a, b) in enumerate(graph.limbs):
            conf = min(kp[a, 2], kp[b, 2])
            if conf > 0:
                _splat_segment(vol[i], (kp[a, 0], kp[a, 1]), (kp[b, 0], kp[b, 1]), conf, sigma)
    return HeatVolume(vol, "limb")

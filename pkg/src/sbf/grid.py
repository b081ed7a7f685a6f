"""Small raster helpers shared by several modules."""

from __future__ import annotations

import numpy as np


def _lerp(a, b, t):
    # a + t*(b - a) returns a exactly when a == b, so constants survive
    return a + t * (b - a)


def _axis_coords(n_out: int, n_in: int):
    # half-pixel-centre convention (align_corners=False)
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def resize_bilinear(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinearly resize the last two axes of ``arr``.

    Output is clipped to the input's value range, so convex-combination
    rounding cannot push values outside it.
    """
    arr = np.asarray(arr, dtype=np.float64)
    in_h, in_w = arr.shape[-2:]
    if (in_h, in_w) == (out_h, out_w):
        return arr.copy()
    r0, r1, tr = _axis_coords(out_h, in_h)
    c0, c1, tc = _axis_coords(out_w, in_w)
    rows = _lerp(arr[..., r0, :], arr[..., r1, :], tr[:, None])
    out = _lerp(rows[..., c0], rows[..., c1], tc)
    if arr.size:
        out = np.clip(out, arr.min(), arr.max())
    return out


def sample_bilinear(grid: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Sample a ``(D, h, w)`` grid at subpixel ``(rows, cols)``; returns ``(n, D)``.

    Coordinates are pixel indices; samples outside the grid are clamped to the edge.
    """
    _, h, w = grid.shape
    r = np.clip(np.asarray(rows, dtype=np.float64), 0.0, h - 1)
    c = np.clip(np.asarray(cols, dtype=np.float64), 0.0, w - 1)
    r0 = np.floor(r).astype(np.int64)
    c0 = np.floor(c).astype(np.int64)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    tr = r - r0
    tc = c - c0
    top = _lerp(grid[:, r0, c0], grid[:, r0, c1], tc)
    bottom = _lerp(grid[:, r1, c0], grid[:, r1, c1], tc)
    return _lerp(top, bottom, tr).T


def dilate8(mask: np.ndarray) -> np.ndarray:
    """Binary dilation with the 3x3 (8-neighbourhood) structuring element."""
    mask = np.asarray(mask, dtype=bool)
    padded = np.pad(mask, 1)
    h, w = mask.shape
    out = np.zeros_like(mask)
    for dr in range(3):
        for dc in range(3):
            out |= padded[dr:dr + h, dc:dc + w]
    return out

"""Fixed-length clip sampling and spatial cropping of SBF frame sequences."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CropLargerThanFrame, ShapeMismatch
from .grid import resize_bilinear


@dataclass
class SbfClip:
    frames: np.ndarray  # (T, C, crop, crop)
    indices: np.ndarray  # source frame index of each clip frame
    person: int | None = None
    box: tuple[int, int, int] | None = None  # (top, left, size) of the cropped square

    @property
    def source_range(self) -> tuple[int, int]:
        return int(self.indices.min()), int(self.indices.max())


def sample_clip(seq_len: int, t_clip: int = 48, offset: float = 0.0, stride: int = 1) -> np.ndarray:
    """``t_clip`` frame indices from a window placed at ``offset`` in [0, 1].

    The window spans ``t_clip * stride`` frames (or the whole sequence if
    shorter) and starts at ``floor(offset * (seq_len - window))``. Sequences
    shorter than the clip are repeated cyclically.
    """
    if seq_len < 1:
        raise ValueError("seq_len must be >= 1")
    if not 0.0 <= offset <= 1.0:
        raise ValueError(f"offset must lie in [0, 1], got {offset}")
    window = min(seq_len, t_clip * stride)
    span = seq_len - window
    # the epsilon keeps k/9-style offsets from flooring one frame short
    start = min(span, int(math.floor(offset * span + 1e-9)))
    idx = start + np.arange(t_clip) * stride
    return idx % seq_len if window < t_clip * stride else idx


def ten_clip_offsets(seq_len: int = 0, t_clip: int = 48, n: int = 10) -> list[float]:
    """Uniformly spread window offsets ``k / (n - 1)``; content-independent.

    Downstream prediction scores of the clips are meant to be averaged.
    """
    if n == 1:
        return [0.5]
    return [k / (n - 1) for k in range(n)]


def centre_square(h: int, w: int) -> tuple[int, int, int]:
    size = min(h, w)
    return (h - size) // 2, (w - size) // 2, size


def person_square(keypoints_grid: np.ndarray, h: int, w: int, pad: float = 0.25) -> tuple[int, int, int]:
    """Square ``(top, left, size)`` around grid keypoints ``(n, 2+)`` as ``(x, y, ...)``.

    The tight box is enlarged by ``pad`` of its side, made square and shifted
    (not shrunk) to stay inside the frame where possible.
    """
    x = keypoints_grid[:, 0]
    y = keypoints_grid[:, 1]
    cx, cy = (x.min() + x.max()) / 2, (y.min() + y.max()) / 2
    side = max(x.max() - x.min(), y.max() - y.min()) * (1 + 2 * pad)
    size = int(min(max(math.ceil(side), 1), h, w))
    top = int(round(cy - size / 2))
    left = int(round(cx - size / 2))
    top = min(max(top, 0), h - size)
    left = min(max(left, 0), w - size)
    return top, left, size


def crop_resize(frames: np.ndarray, crop: int = 56, box: tuple[int, int, int] | None = None) -> np.ndarray:
    """Cut a square region from every frame and resize each channel to ``crop`` x ``crop``.

    ``frames`` has shape ``(T, C, h, w)``; ``box`` defaults to the centred
    largest square. Bilinear resizing keeps each channel in its input range.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 4:
        raise ShapeMismatch(f"expected (T, C, h, w) frames, got {frames.shape}")
    h, w = frames.shape[-2:]
    if crop > min(h, w):
        raise CropLargerThanFrame(f"crop {crop} exceeds frame {h}x{w}")
    top, left, size = centre_square(h, w) if box is None else box
    region = frames[..., top:top + size, left:left + size]
    out = np.empty(frames.shape[:2] + (crop, crop))
    for t in range(frames.shape[0]):
        for c in range(frames.shape[1]):
            out[t, c] = resize_bilinear(region[t, c], crop, crop)
    return out


def make_clips(frames: np.ndarray, t_clip: int = 48, crop: int = 56, n_clips: int = 10,
               box=None, person: int | None = None) -> list[SbfClip]:
    """Test-time clips: ``n_clips`` uniformly offset windows, each cropped and resized."""
    frames = np.asarray(frames)
    clips = []
    for off in ten_clip_offsets(len(frames), t_clip, n_clips):
        idx = sample_clip(len(frames), t_clip, off)
        clips.append(SbfClip(crop_resize(frames[idx], crop, box), idx, person,
                             box if box is not None else centre_square(*frames.shape[-2:])))
    return clips

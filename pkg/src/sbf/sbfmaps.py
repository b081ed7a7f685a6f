"""Scale, body and flow maps, their smoothing, fusion with heatmaps and
assembly into the (J+2)-channel frame tensor."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import LimbGraph, as_flow_array
from .errors import LimbCountMismatch, ShapeMismatch, VariantMismatch
from .heatmap import HeatVolume

VARIANTS = ("joint", "limb")


@dataclass(frozen=True)
class ScaleVolume:
    data: np.ndarray  # (J, h, w) uint8 in {0, 1}
    variant: str = "joint"

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ShapeMismatch(f"scale volume must be (J, h, w), got {data.shape}")
        if not np.all((data == 0) | (data == 1)):
            raise ValueError("scale volume must be binary")
        if self.variant not in VARIANTS:
            raise VariantMismatch(f"unknown variant {self.variant!r}")
        object.__setattr__(self, "data", data.astype(np.uint8))


@dataclass(frozen=True)
class SmoothedVolume:
    data: np.ndarray  # (J, h, w) float64 in [0, 1]
    variant: str = "joint"


@dataclass(frozen=True)
class SbfMaps:
    """The binary triple for one frame: scale volume, body map, flow map."""

    scale: ScaleVolume
    body: np.ndarray
    flow: np.ndarray

    def stack(self) -> np.ndarray:
        """``(J+2, h, w)`` uint8 in channel order ``[S_0..S_{J-1}, B, F]``."""
        return np.concatenate([self.scale.data, self.body[None], self.flow[None]]).astype(np.uint8)


@dataclass(frozen=True)
class SbfFrame:
    fused: np.ndarray  # (J, h, w)
    body: np.ndarray  # (h, w)
    flow: np.ndarray  # (h, w)
    variant: str = "joint"

    @property
    def tensor(self) -> np.ndarray:
        return np.concatenate([self.fused, self.body[None], self.flow[None]])

    @property
    def num_channels(self) -> int:
        return self.fused.shape[0] + 2


def limb_scale_volume(sj: ScaleVolume, graph: LimbGraph) -> ScaleVolume:
    """Limb channel i is the pixelwise max of joint channels a_i and b_i."""
    if sj.variant != "joint":
        raise VariantMismatch("limb volumes are derived from a joint scale volume")
    J = sj.data.shape[0]
    if len(graph.limbs) != J:
        raise LimbCountMismatch(f"graph has {len(graph.limbs)} limbs, scale volume has {J} channels")
    if graph.joints != J:
        raise LimbCountMismatch(f"graph has {graph.joints} joints, scale volume has {J} channels")
    a = np.array([l[0] for l in graph.limbs])
    b = np.array([l[1] for l in graph.limbs])
    return ScaleVolume(np.maximum(sj.data[a], sj.data[b]), "limb")


def motion_magnitude(flow) -> np.ndarray:
    """Per-pixel distance of the flow vector from the mean flow vector."""
    uv = as_flow_array(flow)
    # subtracting a reference vector first leaves the result mathematically
    # unchanged but makes a constant field give exactly zero
    d = uv - uv[0, 0]
    mean = d.reshape(-1, 2).mean(axis=0)
    return np.sqrt(((d - mean) ** 2).sum(axis=-1))


def flow_map(flow, epsilon: float) -> np.ndarray:
    """Binary map of pixels whose motion magnitude exceeds ``epsilon * max``."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    omega = motion_magnitude(flow)
    peak = omega.max()
    if peak == 0:
        return np.zeros(omega.shape, dtype=np.uint8)
    return (omega > epsilon * peak).astype(np.uint8)


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    """Sum-normalized 1D Gaussian truncated at radius ``ceil(3 sigma)``."""
    radius = math.ceil(3.0 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _correlate_separable(x: np.ndarray, k: np.ndarray) -> np.ndarray:
    r = len(k) // 2
    pad = [(0, 0)] * (x.ndim - 2) + [(r, r), (r, r)]
    xp = np.pad(x, pad, mode="symmetric")
    h, w = x.shape[-2:]
    rows = sum(k[i] * xp[..., i:i + h, :] for i in range(len(k)))
    return sum(k[i] * rows[..., :, i:i + w] for i in range(len(k)))


def smooth(m, sigma: float):
    """Gaussian-smooth a binary map, or each channel of a ScaleVolume.

    Boundaries are reflected. The result is divided by the smoothed all-ones
    map (mathematically a no-op for a normalized kernel), which keeps
    all-ones maps exactly 1 and every output within [0, 1] under rounding.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if isinstance(m, ScaleVolume):
        return SmoothedVolume(smooth(m.data, sigma), m.variant)
    x = np.asarray(m, dtype=np.float64)
    k = gaussian_kernel1d(sigma)
    num = _correlate_separable(x, k)
    den = _correlate_separable(np.ones_like(x), k)
    return np.clip(num / den, 0.0, 1.0)


def fuse(heat: HeatVolume, s_smooth: SmoothedVolume, mu: float) -> np.ndarray:
    """Fused volume ``H + mu * S'``."""
    if heat.variant != s_smooth.variant:
        raise VariantMismatch(f"cannot fuse {heat.variant} heatmap with {s_smooth.variant} scale volume")
    if heat.data.shape != s_smooth.data.shape:
        raise ShapeMismatch(f"heatmap {heat.data.shape} vs scale volume {s_smooth.data.shape}")
    if mu == 0:
        return heat.data.copy()
    return heat.data + mu * s_smooth.data


def assemble_frame(v: np.ndarray, b: np.ndarray, f: np.ndarray, variant: str = "joint") -> SbfFrame:
    v = np.asarray(v, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    if v.ndim != 3 or b.shape != v.shape[1:] or f.shape != v.shape[1:]:
        raise ShapeMismatch(f"cannot assemble V {v.shape}, B {b.shape}, F {f.shape}")
    return SbfFrame(v, b, f, variant)


def build_frame(maps: SbfMaps, heat: HeatVolume, sigma: float, mu: float) -> SbfFrame:
    """Smooth the binary triple, fuse the scale volume with ``heat`` and assemble."""
    s = smooth(maps.scale, sigma)
    return assemble_frame(fuse(heat, s, mu), smooth(maps.body, sigma), smooth(maps.flow, sigma),
                          heat.variant)

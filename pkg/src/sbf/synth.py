"""Synthetic scenes with analytic ground truth.

Joints are disks of varying radius (larger radius = closer to the camera),
the body is the union of limb capsules and joint disks, and a single disk
"object" moves against a uniform background flow. Every mask is rendered by
an exhaustive per-pixel distance test.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import DOWNSAMPLE, CHAIN5, FlowField, LimbGraph, Resolution, SkeletonFrame, round_half_away
from .errors import SpecInfeasible
from .sbfmaps import ScaleVolume


@dataclass(frozen=True)
class SynthSpec:
    h0: int = 256
    w0: int = 256
    graph: LimbGraph = CHAIN5
    radius_range: tuple[int, int] = (2, 6)
    person_extent: int = 36  # side of the square region holding all joints, grid pixels
    limb_width: float = 1.5  # capsule half-width, grid pixels
    bg_flow_max: float = 1.0
    mover_radius: int = 4
    mover_speed: tuple[float, float] = (3.0, 6.0)  # |mover flow - background flow|
    flow_noise: float = 0.0
    max_tries: int = 200


@dataclass(frozen=True)
class SynthScene:
    seed: int
    res: Resolution
    graph: LimbGraph
    skeleton: SkeletonFrame
    centers: np.ndarray  # (J, 2) integer (row, col) on the grid
    radii: np.ndarray  # (J,)
    joint_masks: np.ndarray  # (J, h, w) uint8
    body_mask: np.ndarray  # (h, w) uint8
    mover_mask: np.ndarray  # (h, w) uint8
    flow: FlowField
    bg_vector: np.ndarray
    mover_vector: np.ndarray

    @property
    def scale_volume(self) -> ScaleVolume:
        return ScaleVolume(self.joint_masks, "joint")


def disk_mask(shape, center, radius) -> np.ndarray:
    """Pixels whose centre lies within ``radius`` of ``center`` (row, col)."""
    rr, cc = np.indices(shape)
    return (((rr - center[0]) ** 2 + (cc - center[1]) ** 2) <= radius * radius).astype(np.uint8)


def capsule_mask(shape, a, b, radius) -> np.ndarray:
    """Pixels within ``radius`` of the segment from ``a`` to ``b`` (row, col)."""
    rr, cc = np.indices(shape).astype(np.float64)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    d = b - a
    l2 = float(d @ d)
    if l2 == 0:
        t = np.zeros(shape)
    else:
        t = np.clip(((rr - a[0]) * d[0] + (cc - a[1]) * d[1]) / l2, 0.0, 1.0)
    d2 = (rr - a[0] - t * d[0]) ** 2 + (cc - a[1] - t * d[1]) ** 2
    return (d2 <= radius * radius).astype(np.uint8)


def _place_joints(rng, spec: SynthSpec, res: Resolution, radii):
    h, w = res.shape
    extent = min(spec.person_extent, h, w)
    top = int(rng.integers(0, h - extent + 1))
    left = int(rng.integers(0, w - extent + 1))
    for _ in range(20):
        centers = _try_place(rng, spec, extent, top, left, radii)
        if centers is not None:
            return np.array(centers, dtype=np.int64)
    raise SpecInfeasible(f"could not place {len(radii)} non-overlapping disks")


def _try_place(rng, spec, extent, top, left, radii):
    centers = []
    for r in radii:
        lo_r, hi_r = top + r, top + extent - 1 - r
        lo_c, hi_c = left + r, left + extent - 1 - r
        if lo_r > hi_r or lo_c > hi_c:
            raise SpecInfeasible(f"radius {r} does not fit a person region of {extent} pixels")
        for _ in range(spec.max_tries):
            c = (int(rng.integers(lo_r, hi_r + 1)), int(rng.integers(lo_c, hi_c + 1)))
            if all((c[0] - o[0]) ** 2 + (c[1] - o[1]) ** 2 > (r + ro + 1) ** 2
                   for o, ro in zip(centers, radii)):
                centers.append(c)
                break
        else:
            return None
    return centers


def gen_scene(seed: int, spec: SynthSpec = SynthSpec()) -> SynthScene:
    lo, hi = spec.radius_range
    if lo < 1 or hi < lo:
        raise SpecInfeasible(f"bad radius range {spec.radius_range}")
    res = Resolution(spec.h0, spec.w0)
    shape = res.shape
    rng = np.random.default_rng(seed)
    J = spec.graph.joints
    radii = rng.integers(lo, hi + 1, size=J)
    centers = _place_joints(rng, spec, res, radii)

    joint_masks = np.stack([disk_mask(shape, c, r) for c, r in zip(centers, radii)])
    body = joint_masks.max(axis=0)
    for a, b in spec.graph.limbs:
        body = np.maximum(body, capsule_mask(shape, centers[a], centers[b], spec.limb_width))

    kps = np.column_stack([centers[:, 1] * DOWNSAMPLE, centers[:, 0] * DOWNSAMPLE, np.ones(J)])
    skeleton = SkeletonFrame((kps.astype(np.float64),), (0,))

    mr = spec.mover_radius
    if 2 * mr + 1 > min(shape):
        raise SpecInfeasible("mover does not fit the frame")
    mc = (int(rng.integers(mr, shape[0] - mr)), int(rng.integers(mr, shape[1] - mr)))
    mover = disk_mask(shape, mc, mr)
    bg = rng.uniform(-spec.bg_flow_max, spec.bg_flow_max, size=2)
    speed = rng.uniform(*spec.mover_speed)
    theta = rng.uniform(0, 2 * np.pi)
    mv = bg + speed * np.array([np.cos(theta), np.sin(theta)])
    uv = np.empty(shape + (2,))
    uv[...] = bg
    if spec.flow_noise > 0:
        uv += rng.uniform(-spec.flow_noise, spec.flow_noise, size=uv.shape)
    uv[mover.astype(bool)] = mv
    return SynthScene(seed, res, spec.graph, skeleton, centers, radii, joint_masks,
                      body, mover, FlowField(uv), bg, mv)


def joint_palette(n: int) -> np.ndarray:
    """``n`` well-separated RGB colours in [0, 1]."""
    return np.array([colorsys.hsv_to_rgb(i / n, 0.9, 0.95) for i in range(n)])


BACKGROUND_RGB = np.array([0.35, 0.35, 0.35])
BODY_RGB = np.array([0.8, 0.75, 0.6])


def render_image(scene: SynthScene, body: bool = False, noise: float = 0.02,
                 seed: int | None = None) -> np.ndarray:
    """A ``(3, h, w)`` RGB feature image of the scene.

    Joint disks are drawn in per-joint colours over a grey background; with
    ``body`` the limb capsules are drawn first in a skin tone.
    """
    h, w = scene.res.shape
    img = np.empty((3, h, w))
    img[...] = BACKGROUND_RGB[:, None, None]
    if body:
        img[:, scene.body_mask.astype(bool)] = BODY_RGB[:, None]
    pal = joint_palette(len(scene.radii))
    for k, m in enumerate(scene.joint_masks):
        img[:, m.astype(bool)] = pal[k][:, None]
    rng = np.random.default_rng([scene.seed if seed is None else seed, 7])
    return img + rng.normal(0.0, noise, img.shape)


def flow_features(flow) -> np.ndarray:
    """``(3, h, w)``: flow minus its mean, and the deviation magnitude."""
    uv = flow.uv if isinstance(flow, FlowField) else np.asarray(flow, dtype=np.float64)
    d = uv - uv.reshape(-1, 2).mean(axis=0)
    mag = np.sqrt((d ** 2).sum(axis=-1))
    return np.stack([d[..., 0], d[..., 1], mag])


def standin_maps(frame: SkeletonFrame, graph: LimbGraph, res: Resolution, radius: float = 2.0,
                 limb_width: float = 1.5) -> tuple[ScaleVolume, np.ndarray]:
    """Analytic scale volume and body map from a skeleton alone.

    Each joint becomes a disk of fixed ``radius`` around its rounded grid
    position, the body a capsule union along the limbs. Persons are merged by
    max. Joints with zero confidence are left empty.
    """
    J = frame.num_joints
    scale = np.zeros((J,) + res.shape, dtype=np.uint8)
    body = np.zeros(res.shape, dtype=np.uint8)
    for p in range(len(frame.persons)):
        kp = frame.grid_coords(p, res)
        centers = np.column_stack([round_half_away(kp[:, 1]), round_half_away(kp[:, 0])])
        for k in range(J):
            if kp[k, 2] > 0:
                np.maximum(scale[k], disk_mask(res.shape, centers[k], radius), out=scale[k])
        for a, b in graph.limbs:
            if kp[a, 2] > 0 and kp[b, 2] > 0:
                np.maximum(body, capsule_mask(res.shape, centers[a], centers[b], limb_width), out=body)
        body = np.maximum(body, scale.max(axis=0))
    return ScaleVolume(scale, "joint"), body


def write_sequence(out_dir, seed: int, n_frames: int, spec: SynthSpec = SynthSpec(),
                   fps: float = 30.0) -> list[SynthScene]:
    """Write ``n_frames`` independent scenes as real-data files.

    Layout: ``keypoints.json``, ``flow/{t:06d}.flo`` (flow from frame t to
    t+1, on the map grid) and ``images/{t:06d}.png``.
    """
    from . import io as sbf_io
    from .annotate import derive_seed

    out = Path(out_dir)
    (out / "flow").mkdir(parents=True, exist_ok=True)
    (out / "images").mkdir(parents=True, exist_ok=True)
    scenes = [gen_scene(derive_seed(seed, t, 0, "scale"), spec) for t in range(n_frames)]
    seq = sbf_io.KeypointSequence(spec.w0, spec.h0, fps, spec.graph.name,
                                  [s.skeleton for s in scenes], list(range(n_frames)))
    sbf_io.write_keypoints(out / "keypoints.json", seq)
    for t, s in enumerate(scenes):
        sbf_io.write_flo(out / "flow" / f"{t:06d}.flo", s.flow)
        sbf_io.write_image(out / "images" / f"{t:06d}.png", render_image(s, body=True))
    return scenes

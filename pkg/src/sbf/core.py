"""Domain types, configuration defaults and input validation."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    EmptyFrame,
    JointCountMismatch,
    NonFiniteCoordinate,
    OrderingViolation,
    RangeViolation,
    ShapeMismatch,
    UnknownLayout,
)

DOWNSAMPLE = 4


@dataclass(frozen=True)
class Resolution:
    """Source frame size ``(h0, w0)``; maps live on the ``(h, w)`` grid, 4x smaller."""

    h0: int
    w0: int

    def __post_init__(self):
        if self.h0 <= 0 or self.w0 <= 0:
            raise RangeViolation(f"resolution must be positive, got {self.h0}x{self.w0}")
        if self.h0 % DOWNSAMPLE or self.w0 % DOWNSAMPLE:
            raise RangeViolation(
                f"source resolution {self.h0}x{self.w0} is not divisible by {DOWNSAMPLE}")

    @property
    def h(self) -> int:
        return self.h0 // DOWNSAMPLE

    @property
    def w(self) -> int:
        return self.w0 // DOWNSAMPLE

    @property
    def shape(self) -> tuple[int, int]:
        return self.h, self.w

    @classmethod
    def from_grid(cls, h: int, w: int) -> "Resolution":
        return cls(h * DOWNSAMPLE, w * DOWNSAMPLE)


@dataclass(frozen=True)
class LimbGraph:
    joints: int
    limbs: tuple[tuple[int, int], ...]
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "limbs", tuple((int(a), int(b)) for a, b in self.limbs))
        if self.joints <= 0:
            raise RangeViolation("a limb graph needs at least one joint")
        for a, b in self.limbs:
            if not (0 <= a < self.joints and 0 <= b < self.joints):
                raise RangeViolation(f"limb ({a}, {b}) references a joint outside [0, {self.joints})")
            if a == b:
                raise RangeViolation(f"limb ({a}, {b}) is a self-loop")

    def __len__(self):
        return len(self.limbs)


# 17 edges so that the limb variant keeps J channels.
COCO17 = LimbGraph(17, (
    (0, 1), (0, 2), (1, 3), (2, 4), (0, 5), (5, 7), (7, 9), (0, 6), (6, 8),
    (8, 10), (5, 11), (11, 13), (13, 15), (6, 12), (12, 14), (14, 16), (11, 12),
), name="coco17")

# Closed ring, used by the synthetic scenes.
CHAIN5 = LimbGraph(5, ((0, 1), (1, 2), (2, 3), (3, 4), (4, 0)), name="chain5")

LAYOUTS = {g.name: g for g in (COCO17, CHAIN5)}


def get_layout(name: str) -> LimbGraph:
    try:
        return LAYOUTS[name]
    except KeyError:
        raise UnknownLayout(f"unknown keypoint layout {name!r}; known: {sorted(LAYOUTS)}") from None


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SkeletonFrame:
    """Keypoints of every person in one frame.

    Each entry of ``persons`` is a ``(J, 3)`` array of ``(x, y, confidence)``
    in source-resolution pixels.
    """

    persons: tuple[np.ndarray, ...]
    person_ids: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "persons", tuple(_frozen(p) for p in self.persons))
        if self.person_ids is None:
            object.__setattr__(self, "person_ids", tuple(range(len(self.persons))))
        else:
            object.__setattr__(self, "person_ids", tuple(int(i) for i in self.person_ids))

    @property
    def num_joints(self) -> int:
        return self.persons[0].shape[0] if self.persons else 0

    def grid_coords(self, person: int, res: Resolution) -> np.ndarray:
        """``(J, 3)`` keypoints of one person on the downsampled grid (unrounded)."""
        kp = self.persons[person].copy()
        kp[:, 0] = np.clip(kp[:, 0] / DOWNSAMPLE, 0.0, res.w - 1)
        kp[:, 1] = np.clip(kp[:, 1] / DOWNSAMPLE, 0.0, res.h - 1)
        return kp


@dataclass(frozen=True)
class FlowField:
    """Dense displacement field, ``uv`` has shape ``(h, w, 2)``."""

    uv: np.ndarray

    def __post_init__(self):
        uv = _frozen(self.uv)
        if uv.ndim != 3 or uv.shape[2] != 2:
            raise ShapeMismatch(f"flow must have shape (h, w, 2), got {uv.shape}")
        if not np.all(np.isfinite(uv)):
            raise NonFiniteCoordinate("flow field contains non-finite values")
        object.__setattr__(self, "uv", uv)

    @property
    def shape(self) -> tuple[int, int]:
        return self.uv.shape[0], self.uv.shape[1]


def as_flow_array(flow) -> np.ndarray:
    if isinstance(flow, FlowField):
        return flow.uv
    return FlowField(flow).uv


@dataclass(frozen=True)
class Config:
    rho: int = 10
    n_pos: int = 32
    n_neg: int = 128
    n_body: int = 256
    n_flow: int = 256
    alpha: float = 19.0
    beta: float = 0.8
    gamma: float = 0.2
    epsilon: float = 0.5
    mu: float = 0.1
    sigma: float = 0.4
    lambda_body: float = 1.0
    lambda_joint: float = 1.0
    t_clip: int = 48
    crop: int = 56

    def replace(self, **changes) -> "Config":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Config":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise RangeViolation(f"unknown config fields: {sorted(unknown)}")
        return validate_config(cls(**d))

    @classmethod
    def load(cls, path: str | Path) -> "Config":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def validate_config(cfg: Config) -> Config:
    """Return ``cfg`` unchanged if every field is in range, else raise."""
    for name in ("n_pos", "n_neg", "n_body", "n_flow", "t_clip", "crop"):
        v = getattr(cfg, name)
        if int(v) != v or v < 1:
            raise RangeViolation(f"{name} must be a positive integer, got {v!r}")
    if int(cfg.rho) != cfg.rho or cfg.rho < 0:
        raise RangeViolation(f"rho must be a non-negative integer, got {cfg.rho!r}")
    for name in ("alpha", "mu", "lambda_body", "lambda_joint"):
        v = getattr(cfg, name)
        if not math.isfinite(v) or v < 0:
            raise RangeViolation(f"{name} must be finite and >= 0, got {v!r}")
    if not math.isfinite(cfg.sigma) or cfg.sigma <= 0:
        raise RangeViolation(f"sigma must be > 0, got {cfg.sigma!r}")
    for name in ("beta", "gamma", "epsilon"):
        v = getattr(cfg, name)
        if not 0.0 < v < 1.0:
            raise RangeViolation(f"{name} must lie in (0, 1), got {v!r}")
    if not cfg.gamma < cfg.epsilon < cfg.beta:
        raise OrderingViolation(
            f"need gamma < epsilon < beta, got gamma={cfg.gamma}, "
            f"epsilon={cfg.epsilon}, beta={cfg.beta}")
    return cfg


def validate_skeleton(frame: SkeletonFrame, graph: LimbGraph, res: Resolution) -> SkeletonFrame:
    """Check joint counts and finiteness, then clamp keypoints into the frame.

    Out-of-frame points are clamped rather than rejected; confidences are
    clipped to [0, 1].
    """
    if not frame.persons:
        raise EmptyFrame("frame has no persons")
    out = []
    for pid, kp in zip(frame.person_ids, frame.persons):
        if kp.ndim != 2 or kp.shape[1] != 3:
            raise JointCountMismatch(f"person {pid}: keypoints must be (J, 3), got {kp.shape}")
        if kp.shape[0] != graph.joints:
            raise JointCountMismatch(
                f"person {pid}: {kp.shape[0]} joints, layout expects {graph.joints}")
        if not np.all(np.isfinite(kp)):
            raise NonFiniteCoordinate(f"person {pid}: non-finite keypoint value")
        kp = kp.copy()
        kp[:, 0] = np.clip(kp[:, 0], 0.0, res.w0 - 1)
        kp[:, 1] = np.clip(kp[:, 1], 0.0, res.h0 - 1)
        kp[:, 2] = np.clip(kp[:, 2], 0.0, 1.0)
        out.append(kp)
    return SkeletonFrame(tuple(out), frame.person_ids)


def round_half_away(x):
    """Round half away from zero (``np.round`` rounds half to even)."""
    x = np.asarray(x, dtype=np.float64)
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)


def single_person(points: Sequence[Sequence[float]], person_id: int = 0) -> SkeletonFrame:
    """Convenience constructor for a one-person frame."""
    return SkeletonFrame((np.asarray(points, dtype=np.float64),), (person_id,))

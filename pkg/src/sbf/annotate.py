"""Point annotations for the scale, body and flow heads.

Positive and negative pixel sets are derived from the skeleton (scale, body)
or from an estimated flow field (flow); a fixed number of points is then
drawn from each set, with replacement, by a seeded generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Config, LimbGraph, Resolution, SkeletonFrame, round_half_away
from .errors import DegenerateFlow, EmptyNegativeSet, EmptyPositiveSet
from .grid import dilate8
from .sbfmaps import motion_magnitude

HEADS = ("scale", "body", "flow")


class PixelSet:
    """A set of in-bounds ``(row, col)`` pixels, stored as a boolean mask."""

    __slots__ = ("mask",)

    def __init__(self, mask):
        mask = np.array(mask, dtype=bool)
        mask.setflags(write=False)
        self.mask = mask

    @classmethod
    def empty(cls, shape) -> "PixelSet":
        return cls(np.zeros(shape, dtype=bool))

    @classmethod
    def from_points(cls, points, shape) -> "PixelSet":
        m = np.zeros(shape, dtype=bool)
        pts = np.asarray(points, dtype=np.int64).reshape(-1, 2)
        m[pts[:, 0], pts[:, 1]] = True
        return cls(m)

    @property
    def shape(self):
        return self.mask.shape

    def points(self) -> np.ndarray:
        """Members as an ``(n, 2)`` int array in row-major order."""
        return np.argwhere(self.mask)

    def __len__(self):
        return int(self.mask.sum())

    def __contains__(self, rc):
        r, c = rc
        h, w = self.mask.shape
        return 0 <= r < h and 0 <= c < w and bool(self.mask[r, c])

    def __or__(self, other):
        return PixelSet(self.mask | other.mask)

    def __and__(self, other):
        return PixelSet(self.mask & other.mask)

    def __sub__(self, other):
        return PixelSet(self.mask & ~other.mask)

    def __eq__(self, other):
        return isinstance(other, PixelSet) and np.array_equal(self.mask, other.mask)

    def __repr__(self):
        return f"PixelSet({len(self)} of {self.mask.shape[0]}x{self.mask.shape[1]})"


@dataclass(frozen=True)
class PointAnnotationSet:
    """Sampled labeled points for one head.

    ``groups`` holds ``(n, 3)`` int arrays of ``(row, col, label)``. The scale
    head has one group per joint (``n_pos`` positives, then ``n_neg``
    negatives); body and flow heads have a single group of positives followed
    by negatives.
    """

    head: str
    groups: tuple[np.ndarray, ...]
    seed: int | None = None
    frame: int = 0
    person: int | None = 0

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(np.asarray(g, dtype=np.int64) for g in self.groups))

    @property
    def num_points(self) -> int:
        return sum(len(g) for g in self.groups)

    def records(self) -> list[dict]:
        """Serializable records, one per group."""
        out = []
        for j, g in enumerate(self.groups):
            out.append({
                "head": self.head,
                "frame": self.frame,
                "person": self.person,
                "joint": j if self.head == "scale" else None,
                "seed": self.seed,
                "points": g.tolist(),
            })
        return out


def derive_seed(base_seed: int, frame: int, person: int | None, head: str) -> int:
    """Independent per-(frame, person, head) seed, stable across runs and platforms."""
    key = [int(base_seed), int(frame), -1 if person is None else int(person), HEADS.index(head)]
    ss = np.random.SeedSequence([k + 1 for k in key])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _rng(rng) -> tuple[np.random.Generator, int | None]:
    if isinstance(rng, np.random.Generator):
        return rng, None
    return np.random.default_rng(rng), None if rng is None else int(rng)


def _sample(s: PixelSet, n: int, label: int, rng: np.random.Generator) -> np.ndarray:
    pts = s.points()
    idx = rng.integers(0, len(pts), size=n)
    chosen = pts[idx]
    return np.column_stack([chosen, np.full(n, label, dtype=np.int64)])


# --- scale head -------------------------------------------------------------

def joint_sets(frame: SkeletonFrame, res: Resolution, person: int = 0) -> list[PixelSet]:
    """The 3x3 block around each rounded joint position, clipped to the grid."""
    kp = frame.grid_coords(person, res)
    cols = round_half_away(kp[:, 0])
    rows = round_half_away(kp[:, 1])
    sets = []
    for r, c in zip(rows, cols):
        m = np.zeros(res.shape, dtype=bool)
        m[max(r - 1, 0):r + 2, max(c - 1, 0):c + 2] = True
        sets.append(PixelSet(m))
    return sets


def padded_box(frame: SkeletonFrame, rho: int, res: Resolution, person: int = 0):
    """Inclusive ``(r0, r1, c0, c1)`` keypoint extent padded by ``rho``, clipped."""
    kp = frame.grid_coords(person, res)
    c0 = max(math.floor(kp[:, 0].min()) - rho, 0)
    c1 = min(math.ceil(kp[:, 0].max()) + rho, res.w - 1)
    r0 = max(math.floor(kp[:, 1].min()) - rho, 0)
    r1 = min(math.ceil(kp[:, 1].max()) + rho, res.h - 1)
    return r0, r1, c0, c1


def background_set(frame: SkeletonFrame, rho: int, res: Resolution, person: int = 0) -> PixelSet:
    """All pixels strictly outside the padded keypoint box of ``person``."""
    r0, r1, c0, c1 = padded_box(frame, rho, res, person)
    m = np.ones(res.shape, dtype=bool)
    m[r0:r1 + 1, c0:c1 + 1] = False
    return PixelSet(m)


def scale_sets(jsets: list[PixelSet], bg: PixelSet) -> list[tuple[PixelSet, PixelSet]]:
    """Per joint: (positives, negatives = other joints and background minus positives)."""
    out = []
    for i, pos in enumerate(jsets):
        others = PixelSet.empty(bg.shape)
        for j, s in enumerate(jsets):
            if j != i:
                others = others | s
        out.append((pos, (others | bg) - pos))
    return out


def scale_annotations(jsets: list[PixelSet], bg: PixelSet, cfg: Config, rng=None,
                      frame: int = 0, person: int | None = 0) -> PointAnnotationSet:
    gen, seed = _rng(rng)
    groups = []
    for i, (pos, neg) in enumerate(scale_sets(jsets, bg)):
        if len(pos) == 0:
            raise EmptyPositiveSet(f"joint {i}: empty positive set")
        if len(neg) == 0:
            raise EmptyNegativeSet(f"joint {i}: empty negative set")
        groups.append(np.concatenate([_sample(pos, cfg.n_pos, 1, gen), _sample(neg, cfg.n_neg, 0, gen)]))
    return PointAnnotationSet("scale", tuple(groups), seed, frame, person)


# --- body head --------------------------------------------------------------

def bresenham(r0: int, c0: int, r1: int, c1: int) -> list[tuple[int, int]]:
    """Integer raster of the segment from ``(r0, c0)`` to ``(r1, c1)``, inclusive."""
    points = []
    dr = abs(r1 - r0)
    dc = abs(c1 - c0)
    sr = 1 if r1 >= r0 else -1
    sc = 1 if c1 >= c0 else -1
    err = dc - dr
    r, c = r0, c0
    while True:
        points.append((r, c))
        if r == r1 and c == c1:
            break
        e2 = 2 * err
        if e2 > -dr:
            err -= dr
            c += sc
        if e2 < dc:
            err += dc
            r += sr
    return points


def limb_raster(frame: SkeletonFrame, graph: LimbGraph, res: Resolution, person: int = 0) -> PixelSet:
    kp = frame.grid_coords(person, res)
    cols = round_half_away(kp[:, 0])
    rows = round_half_away(kp[:, 1])
    m = np.zeros(res.shape, dtype=bool)
    for a, b in graph.limbs:
        for r, c in bresenham(int(rows[a]), int(cols[a]), int(rows[b]), int(cols[b])):
            m[r, c] = True
    return PixelSet(m)


def body_positive_set(frame: SkeletonFrame, graph: LimbGraph, res: Resolution,
                      person: int = 0) -> PixelSet:
    """Bresenham limb rasters dilated by one pixel (8-neighbourhood)."""
    return PixelSet(dilate8(limb_raster(frame, graph, res, person).mask))


def _binary_annotations(head, pos, neg, n, rng, frame, person):
    gen, seed = _rng(rng)
    # a pixel labeled both ways would contradict itself; only possible for rho = 0
    neg = neg - pos
    if len(pos) == 0:
        raise EmptyPositiveSet(f"{head} head: empty positive set")
    if len(neg) == 0:
        raise EmptyNegativeSet(f"{head} head: empty negative set")
    g = np.concatenate([_sample(pos, n, 1, gen), _sample(neg, n, 0, gen)])
    return PointAnnotationSet(head, (g,), seed, frame, person)


def body_annotations(pos: PixelSet, bg: PixelSet, cfg: Config, rng=None,
                     frame: int = 0, person: int | None = 0) -> PointAnnotationSet:
    return _binary_annotations("body", pos, bg, cfg.n_body, rng, frame, person)


# --- flow head --------------------------------------------------------------

def flow_sets(flow, beta: float, gamma: float) -> tuple[PixelSet, PixelSet]:
    """Pixels moving clearly (> beta * max) and clearly static (< gamma * max)."""
    if not 0 < gamma < beta < 1:
        raise ValueError(f"need 0 < gamma < beta < 1, got gamma={gamma}, beta={beta}")
    omega = motion_magnitude(flow)
    peak = omega.max()
    if peak == 0:
        raise DegenerateFlow("flow field is constant; motion magnitude is zero everywhere")
    return PixelSet(omega > beta * peak), PixelSet(omega < gamma * peak)


def flow_annotations(sets: tuple[PixelSet, PixelSet], cfg: Config, rng=None,
                     frame: int = 0) -> PointAnnotationSet:
    pos, neg = sets
    return _binary_annotations("flow", pos, neg, cfg.n_flow, rng, frame, None)


def annotate_frame(frame: SkeletonFrame, graph: LimbGraph, res: Resolution, cfg: Config,
                   head: str, base_seed: int, frame_index: int = 0, flow=None) -> list[PointAnnotationSet]:
    """All annotation sets of one head for one frame (one per person; one total for flow)."""
    if head == "flow":
        if flow is None:
            raise ValueError("flow head needs a flow field")
        seed = derive_seed(base_seed, frame_index, None, head)
        return [flow_annotations(flow_sets(flow, cfg.beta, cfg.gamma), cfg, seed, frame_index)]
    out = []
    for p, pid in enumerate(frame.person_ids):
        seed = derive_seed(base_seed, frame_index, pid, head)
        bg = background_set(frame, cfg.rho, res, p)
        if head == "scale":
            ann = scale_annotations(joint_sets(frame, res, p), bg, cfg, seed, frame_index, pid)
        elif head == "body":
            ann = body_annotations(body_positive_set(frame, graph, res, p), bg, cfg, seed, frame_index, pid)
        else:
            raise ValueError(f"unknown head {head!r}")
        out.append(ann)
    return out

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from sbf.annotate import (
    PixelSet,
    annotate_frame,
    background_set,
    body_annotations,
    body_positive_set,
    bresenham,
    derive_seed,
    flow_annotations,
    flow_sets,
    joint_sets,
    limb_raster,
    scale_annotations,
    scale_sets,
)
from sbf.core import CHAIN5, COCO17, Config, LimbGraph, Resolution, round_half_away, single_person
from sbf.errors import DegenerateFlow, EmptyNegativeSet
from sbf.sbfmaps import motion_magnitude

RES = Resolution(256, 256)  # 64x64 grid
CFG = Config()

FIELD3 = np.zeros((3, 3, 2))
FIELD3[1, 1] = (9.0, 0.0)


def grid_frame(xy):
    xy = np.asarray(xy, dtype=np.float64) * 4
    return single_person(np.column_stack([xy, np.ones(len(xy))]))


def block(rows, cols, shape=(64, 64)):
    m = np.zeros(shape, dtype=bool)
    m[rows[0]:rows[1] + 1, cols[0]:cols[1] + 1] = True
    return m


def test_joint_set_rounding():
    (s,) = joint_sets(grid_frame([[5.4, 7.8]]), RES)
    assert len(s) == 9
    np.testing.assert_array_equal(s.mask, block((7, 9), (4, 6)))


def test_joint_set_corner_clipped():
    (s,) = joint_sets(grid_frame([[0, 0]]), RES)
    assert len(s) == 4
    np.testing.assert_array_equal(s.mask, block((0, 1), (0, 1)))


def test_identical_joints_identical_sets():
    a, b = joint_sets(grid_frame([[20.2, 31.6], [20.2, 31.6]]), RES)
    assert a == b


def test_background_count():
    bg = background_set(grid_frame([[10, 10]] * 5), 10, RES)
    assert len(bg) == 4096 - 441 == 3655
    assert not bg.mask[:21, :21].any() and bg.mask[21:, :].all() and bg.mask[:, 21:].all()


def test_background_empty_cases():
    assert len(background_set(grid_frame([[32, 32]] * 5), 40, RES)) == 0
    assert len(background_set(grid_frame([[0, 0], [63, 63], [5, 5], [6, 6], [7, 7]]), 0, RES)) == 0


def test_background_uses_fractional_extent():
    # extent [10.5, 10.5] pads to [0, 21]
    bg = background_set(grid_frame([[10.5, 10.5]] * 5), 10, RES)
    assert len(bg) == 4096 - 22 * 22


def test_scale_positive_points_near_joint():
    frame = grid_frame([[30.2, 20.7], [5, 5], [50, 50], [40, 10], [10, 40]])
    ann = scale_annotations(joint_sets(frame, RES), background_set(frame, CFG.rho, RES), CFG, 0)
    pos = ann.groups[0][:32]
    assert len(ann.groups) == 5 and all(len(g) == 160 for g in ann.groups)
    assert (pos[:, 2] == 1).all() and (ann.groups[0][32:, 2] == 0).all()
    assert np.abs(pos[:, 0] - 21).max() <= 1 and np.abs(pos[:, 1] - 30).max() <= 1


def test_scale_shared_pixels_excluded_from_negatives():
    frame = grid_frame([[20, 20], [21, 20], [40, 40], [42, 40], [30, 30]])
    jsets = joint_sets(frame, RES)
    bg = background_set(frame, CFG.rho, RES)
    for pos, neg in scale_sets(jsets, bg):
        assert len(pos & neg) == 0
    # joint 1's block overlaps joint 0's; the overlap is absent from joint 0's negatives
    pos0, neg0 = scale_sets(jsets, bg)[0]
    overlap = jsets[0] & jsets[1]
    assert len(overlap) == 6 and len(overlap & neg0) == 0
    ann = scale_annotations(jsets, bg, CFG, 4)
    for i, g in enumerate(ann.groups):
        for r, c, lab in g:
            assert ((r, c) in jsets[i]) == (lab == 1)


def test_scale_determinism():
    frame = grid_frame([[20, 20], [25, 20], [40, 40], [42, 45], [30, 30]])
    args = (joint_sets(frame, RES), background_set(frame, CFG.rho, RES), CFG)
    a = scale_annotations(*args, 9)
    b = scale_annotations(*args, 9)
    c = scale_annotations(*args, 10)
    assert all(np.array_equal(x, y) for x, y in zip(a.groups, b.groups))
    assert not all(np.array_equal(x, y) for x, y in zip(a.groups, c.groups))


def test_empty_negatives_raise():
    frame = grid_frame([[32, 32]] * 5)
    with pytest.raises(EmptyNegativeSet):
        scale_annotations(joint_sets(frame, RES), background_set(frame, 40, RES), CFG, 0)


def test_bresenham_examples():
    assert bresenham(0, 0, 2, 2) == [(0, 0), (1, 1), (2, 2)]
    assert bresenham(0, 0, 3, 0) == [(0, 0), (1, 0), (2, 0), (3, 0)]


def test_bresenham_against_line_oracle():
    pts = bresenham(0, 0, 5, 2)
    # row-major line: for each row r the true column is 2r/5, none of them a tie
    assert pts == [(r, int(np.floor(2 * r / 5 + 0.5))) for r in range(6)]
    for r, c in pts:
        assert abs(c - 2 * r / 5) <= 0.5


@settings(max_examples=200, deadline=None)
@given(st.integers(-20, 20), st.integers(-20, 20), st.integers(-20, 20), st.integers(-20, 20))
def test_bresenham_properties(r0, c0, r1, c1):
    pts = bresenham(r0, c0, r1, c1)
    assert pts[0] == (r0, c0) and pts[-1] == (r1, c1)
    assert len(pts) == max(abs(r1 - r0), abs(c1 - c0)) + 1
    for (ra, ca), (rb, cb) in zip(pts, pts[1:]):
        assert max(abs(ra - rb), abs(ca - cb)) == 1
    # every pixel lies within half a pixel of the true line along the minor axis
    dr, dc = r1 - r0, c1 - c0
    for r, c in pts:
        if abs(dr) >= abs(dc) and dr:
            assert abs(c - (c0 + dc * (r - r0) / dr)) <= 0.5 + 1e-12
        elif dc:
            assert abs(r - (r0 + dr * (c - c0) / dc)) <= 0.5 + 1e-12


def test_body_positive_set_dilated():
    g = LimbGraph(2, ((0, 1),))
    frame = grid_frame([[10, 10], [20, 10]])
    raster = limb_raster(frame, g, RES)
    assert len(raster) == 11
    body = body_positive_set(frame, g, RES)
    np.testing.assert_array_equal(body.mask, block((9, 11), (9, 21)))


def test_body_contains_joints_and_avoids_background(coco_frame):
    pos = body_positive_set(coco_frame, COCO17, RES)
    kp = coco_frame.grid_coords(0, RES)
    for c, r in zip(round_half_away(kp[:, 0]), round_half_away(kp[:, 1])):
        assert (r, c) in pos
    assert len(pos & background_set(coco_frame, CFG.rho, RES)) == 0


def test_body_annotations_counts(coco_frame):
    pos = body_positive_set(coco_frame, COCO17, RES)
    bg = background_set(coco_frame, CFG.rho, RES)
    ann = body_annotations(pos, bg, CFG, 3)
    (g,) = ann.groups
    assert g.shape == (512, 3) and (g[:256, 2] == 1).all() and (g[256:, 2] == 0).all()
    assert all(((r, c) in pos) == (lab == 1) for r, c, lab in g)
    again = body_annotations(pos, bg, CFG, 3)
    np.testing.assert_array_equal(g, again.groups[0])


def test_flow_sets_example():
    pos, neg = flow_sets(FIELD3, 0.8, 0.2)
    assert pos.points().tolist() == [[1, 1]]
    expect = np.ones((3, 3), dtype=bool)
    expect[1, 1] = False
    np.testing.assert_array_equal(neg.mask, expect)


def test_flow_sets_degenerate():
    with pytest.raises(DegenerateFlow):
        flow_sets(np.ones((4, 4, 2)), 0.8, 0.2)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (5, 6, 2), elements=st.floats(-10, 10)), st.integers(-3, 3), st.integers(-3, 3),
       st.sampled_from([0.25, 0.5, 2.0, 4.0]))
def test_flow_sets_disjoint_and_invariant(uv, cx, cy, s):
    uv = np.round(uv * 4) / 4
    try:
        pos, neg = flow_sets(uv, 0.8, 0.2)
    except DegenerateFlow:
        return
    assert len(pos & neg) == 0 and len(pos) > 0
    pos2, neg2 = flow_sets(s * uv + np.array([cx, cy]), 0.8, 0.2)
    assert pos == pos2 and neg == neg2


def test_flow_annotations_recheck():
    rng = np.random.default_rng(1)
    uv = rng.normal(0, 1, (64, 64, 2))
    uv[20:30, 20:30] += (6.0, 2.0)
    ann = flow_annotations(flow_sets(uv, CFG.beta, CFG.gamma), CFG, 5)
    (g,) = ann.groups
    assert g.shape == (512, 3) and ann.person is None
    omega = motion_magnitude(uv)
    peak = omega.max()
    for r, c, lab in g:
        if lab:
            assert omega[r, c] > CFG.beta * peak
        else:
            assert omega[r, c] < CFG.gamma * peak
    np.testing.assert_array_equal(g, flow_annotations(flow_sets(uv, 0.8, 0.2), CFG, 5).groups[0])


def test_annotate_frame_per_person():
    a = np.column_stack([np.linspace(40, 100, 5), np.linspace(40, 80, 5), np.ones(5)])
    b = a + 120
    from sbf.core import SkeletonFrame

    frame = SkeletonFrame((a, b), (7, 9))
    anns = annotate_frame(frame, CHAIN5, RES, CFG, "scale", 1, 3)
    assert [x.person for x in anns] == [7, 9] and all(x.frame == 3 for x in anns)
    assert anns[0].seed == derive_seed(1, 3, 7, "scale")
    body = annotate_frame(frame, CHAIN5, RES, CFG, "body", 1, 3)
    assert [x.num_points for x in body] == [512, 512]


def test_derive_seed_distinct():
    seeds = {derive_seed(0, f, p, h) for f in range(5) for p in (None, 0, 1) for h in ("scale", "body", "flow")}
    assert len(seeds) == 45
    assert derive_seed(3, 1, 2, "body") == derive_seed(3, 1, 2, "body")


def test_pixel_set_ops():
    a = PixelSet.from_points([(0, 0), (1, 1)], (3, 3))
    b = PixelSet.from_points([(1, 1), (2, 2)], (3, 3))
    assert len(a | b) == 3 and len(a & b) == 1 and (a - b).points().tolist() == [[0, 0]]
    assert (5, 5) not in a and (1, 1) in a

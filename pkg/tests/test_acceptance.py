"""Acceptance criteria, one test each.

Every test records a ``PASS``/``FAIL`` line (shown in the pytest summary and
printed when the module is run as a script).
"""

import math
import time

import numpy as np
import pytest

from _oracles import numeric_gradient, relative_error, small_problem
from sbf import io
from sbf.annotate import annotate_frame, background_set, body_positive_set, flow_sets, joint_sets, scale_sets
from sbf.core import Config, LimbGraph
from sbf.errors import BadMagic, ChecksumError
from sbf.heatmap import HeatVolume
from sbf.loss import scale_loss, total_loss
from sbf.sbfmaps import ScaleVolume, SmoothedVolume, assemble_frame, flow_map, fuse, limb_scale_volume, smooth
from sbf.spr import TrainHyper, dense_infer, dense_scores, head_gradient, init_params, train_head
from sbf.synth import gen_scene
from sbf.tasks import build_task, heldout_iou

RESULTS: list[str] = []


def report(name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def test_limb_volume_oracle():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    mismatches = 0
    for _ in range(1000):
        J = int(rng.integers(2, 18))
        sj = rng.integers(0, 2, (J, 8, 8)).astype(np.uint8)
        a = rng.integers(0, J, J)
        b = (a + rng.integers(1, J, J)) % J
        graph = LimbGraph(J, tuple(zip(a.tolist(), b.tolist())))
        out = limb_scale_volume(ScaleVolume(sj), graph).data
        ref = np.zeros_like(out)
        for i, (ai, bi) in enumerate(graph.limbs):
            for r in range(8):
                for c in range(8):
                    ref[i, r, c] = max(sj[ai, r, c], sj[bi, r, c])
        mismatches += not np.array_equal(out, ref)
    dt = time.perf_counter() - t0
    report("limb volume oracle", mismatches == 0 and dt < 5.0,
           f"1000 cases, {mismatches} mismatches, {dt:.2f} s (< 5 s)")


def test_flow_map_invariance():
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    bad = 0
    for _ in range(500):
        h, w = rng.integers(2, 33, 2)
        uv = rng.normal(0, rng.uniform(0.1, 5), (h, w, 2))
        if rng.random() < 0.5:  # a moving blob on a noisy background
            r, c = rng.integers(0, h), rng.integers(0, w)
            uv[r:r + 4, c:c + 4] += rng.normal(0, 10, 2)
        s = rng.uniform(0.1, 10)
        shift = rng.uniform(-100, 100, 2)
        eps = rng.uniform(0.05, 0.95)
        bad += not np.array_equal(flow_map(s * uv + shift, eps), flow_map(uv, eps))
    dt = time.perf_counter() - t0
    report("flow map invariance", bad == 0 and dt < 5.0, f"500 fields, {bad} differ, {dt:.2f} s (< 5 s)")


def _check_labels(ann, sets) -> int:
    """Count points whose label disagrees with their generating sets."""
    wrong = 0
    for g, (pos, neg) in zip(ann.groups, sets):
        for r, c, lab in g:
            wrong += not ((r, c) in (pos if lab == 1 else neg))
    return wrong


def test_annotation_contracts(tmp_path):
    cfg = Config()
    wrong = bad_counts = overlaps = 0
    nondeterministic = 0
    for k in range(200):
        s = gen_scene(10_000 + k)
        sk, res = s.skeleton, s.res
        bg = background_set(sk, cfg.rho, res)
        ssets = scale_sets(joint_sets(sk, res), bg)
        overlaps += sum(len(p & n) for p, n in ssets)
        bpos = body_positive_set(sk, s.graph, res)
        fsets = flow_sets(s.flow, cfg.beta, cfg.gamma)
        files = []
        for rep in range(2):
            anns = []
            for head, flow in (("scale", None), ("body", None), ("flow", s.flow)):
                anns += annotate_frame(sk, s.graph, res, cfg, head, 5, k, flow)
            path = tmp_path / f"a{rep}.jsonl"
            io.write_annotations(path, anns)
            files.append(path.read_bytes())
        nondeterministic += files[0] != files[1]
        scale, body, flow = anns
        wrong += _check_labels(scale, ssets)
        wrong += _check_labels(body, [(bpos, bg - bpos)])
        wrong += _check_labels(flow, [fsets])
        for g in scale.groups:
            bad_counts += (g[:, 2] == 1).sum() != 32 or (g[:, 2] == 0).sum() != 128
        for ann in (body, flow):
            (g,) = ann.groups
            bad_counts += (g[:, 2] == 1).sum() != 256 or (g[:, 2] == 0).sum() != 256
    ok = wrong == 0 and bad_counts == 0 and overlaps == 0 and nondeterministic == 0
    report("annotation contracts", ok,
           f"200 scenes, {wrong} mislabeled points, {bad_counts} bad counts, {overlaps} pos/neg overlaps, "
           f"{nondeterministic} non-reproducible files")


def test_loss_analytic_values():
    v = scale_loss([(np.full(32, 0.5), np.full(128, 0.5))], 19)
    err1 = abs(v - 20 * math.log(2))
    rng = np.random.default_rng(3)
    err2 = max(abs(total_loss(a, b, 1.0) - (a + b)) for a, b in rng.uniform(0, 50, (1000, 2)))
    report("loss analytic values", err1 <= 1e-9 and err2 <= 1e-12,
           f"|scale_loss - 20 ln 2| = {err1:.1e} (<= 1e-9), max |total - sum| = {err2:.1e} (<= 1e-12)")


def test_gradient_check():
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(10):
        params, x, y, w = small_problem(seed)
        _, grad = head_gradient(params, x, y, w)
        num = numeric_gradient(params, x, y, w, h=1e-6)
        worst = max(worst, max(relative_error(a, b) for a, b in zip(grad.arrays(), num.arrays())))
    dt = time.perf_counter() - t0
    report("gradient check", worst <= 1e-5 and dt < 10.0,
           f"10 seeds, max relative error {worst:.2e} (<= 1e-5), {dt:.2f} s (< 10 s)")


def test_spr_learning():
    t0 = time.perf_counter()
    task = build_task("synth-disk", 0)
    result = train_head(task.batch, TrainHyper(seed=0))
    score = heldout_iou(task, result.params)
    dt = time.perf_counter() - t0
    again = train_head(build_task("synth-disk", 0).batch, TrainHyper(seed=0))
    same = again.params.equals(result.params)
    report("SPR learning", score >= 0.85 and dt < 60.0 and same,
           f"synth-disk 64x64, 2000 steps, held-out IoU {score:.3f} (>= 0.85), {dt:.1f} s (< 60 s), "
           f"rerun bit-identical: {same}")


def test_subdivision_equivalence():
    rng = np.random.default_rng(11)
    differ = 0
    for k in range(50):
        steps = int(rng.integers(0, 4))
        scale = 2 ** steps
        h = scale * int(rng.integers(1, 5)) * 2
        w = scale * int(rng.integers(1, 5)) * 2
        d = int(rng.integers(1, 5))
        grid = rng.normal(0, 1, (d, h, w))
        params = init_params(d + 24, int(rng.integers(4, 33)), int(rng.integers(1, 4)), k)
        params.b3[:] = rng.normal(0, 1, params.b3.shape)
        exhaustive = (dense_scores(params, grid) > 0.5).astype(np.uint8)
        differ += not np.array_equal(dense_infer(params, grid, (scale, steps, h * w)), exhaustive)
    report("subdivision equivalence", differ == 0, f"50 random heads/grids, {differ} differ from exhaustive")


def test_fusion_shape_contract():
    rng = np.random.default_rng(5)
    frame = assemble_frame(rng.random((17, 16, 16)), rng.random((16, 16)), rng.random((16, 16)))
    channels_ok = frame.num_channels == 19 and frame.tensor.shape[0] == 19
    exact = bounded = True
    for _ in range(100):
        mu = float(rng.uniform(0, 2))
        h = HeatVolume(rng.random((17, 8, 8)), "joint")
        s = SmoothedVolume(rng.random((17, 8, 8)))
        s.data[0, 0, 0] = 1.0
        h.data[0, 0, 0] = 1.0
        exact &= np.array_equal(fuse(h, s, 0.0), h.data)
        bounded &= fuse(h, s, mu).max() <= 1 + mu
    report("fusion/shape contract", channels_ok and exact and bounded,
           f"J=17 -> {frame.num_channels} channels, mu=0 exact: {exact}, bounded by 1+mu: {bounded}")


def test_format_fidelity(tmp_path):
    rng = np.random.default_rng(9)
    mismatches = 0
    for k in range(100):
        h, w = rng.integers(1, 40, 2)
        io.write_flo(tmp_path / "a.flo", rng.normal(0, 10, (h, w, 2)).astype(np.float32))
        io.write_flo(tmp_path / "b.flo", io.read_flo(tmp_path / "a.flo"))
        mismatches += (tmp_path / "a.flo").read_bytes() != (tmp_path / "b.flo").read_bytes()

        T, J = rng.integers(1, 4), rng.integers(1, 18)
        shape = (T, J + 2, rng.integers(1, 20), rng.integers(1, 20))
        frames = rng.integers(0, 2, shape).astype(np.uint8) if k % 2 else rng.random(shape).astype(np.float32)
        io.write_sbf(tmp_path / "a.sbf", frames, ("joint", "limb")[k % 2], frame_base=k)
        back = io.read_sbf(tmp_path / "a.sbf")
        io.write_sbf(tmp_path / "b.sbf", back.frames, back.header.variant, back.header.kind, back.header.frame_base)
        mismatches += not np.array_equal(back.frames, frames)
        mismatches += (tmp_path / "a.sbf").read_bytes() != (tmp_path / "b.sbf").read_bytes()

        params = init_params(int(rng.integers(1, 30)), int(rng.integers(1, 20)), int(rng.integers(1, 6)), k)
        io.write_head_params(tmp_path / "a.bin", params)
        io.write_head_params(tmp_path / "b.bin", io.read_head_params(tmp_path / "a.bin"))
        mismatches += (tmp_path / "a.bin").read_bytes() != (tmp_path / "b.bin").read_bytes()

    data = bytearray((tmp_path / "a.sbf").read_bytes())
    data[-1] ^= 0xFF  # last CRC byte
    (tmp_path / "c.sbf").write_bytes(bytes(data))
    with pytest.raises(ChecksumError):
        io.read_sbf(tmp_path / "c.sbf")
    typed = 1
    for name, reader in (("a.flo", io.read_flo), ("a.sbf", io.read_sbf), ("a.bin", io.read_head_params)):
        raw = bytearray((tmp_path / name).read_bytes())
        raw[0] ^= 0xFF
        (tmp_path / ("bad_" + name)).write_bytes(bytes(raw))
        with pytest.raises(BadMagic):
            reader(tmp_path / ("bad_" + name))
        typed += 1
    report("format fidelity", mismatches == 0 and typed == 4,
           f"100 payloads x 3 formats, {mismatches} round-trip mismatches; CRC and magic corruption typed: {typed}/4")


def test_smoothing_contract():
    rng = np.random.default_rng(13)
    const_ok = True
    for sigma in (0.4, 1.0, 2.5):
        for shape in ((1, 1), (5, 7), (64, 64), (3, 16, 16)):
            const_ok &= not smooth(np.zeros(shape), sigma).any()
            const_ok &= bool((smooth(np.ones(shape), sigma) == 1.0).all())
    in_range = 0
    for _ in range(500):
        h, w = rng.integers(1, 48, 2)
        m = (rng.random((h, w)) < rng.random()).astype(np.uint8)
        s = smooth(m, float(rng.choice([0.4, rng.uniform(0.1, 3.0)])))
        in_range += bool(s.min() >= 0.0 and s.max() <= 1.0)
    report("smoothing contract", const_ok and in_range == 500,
           f"constant maps preserved: {const_ok}; {in_range}/500 random maps within [0, 1]")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))

"""Command-line front end: ``sbf <command> [flags]``.

Every Config field has a flag of the same name (underscores become dashes).
``SBF_CONFIG`` may name a JSON config file; explicit flags override it.
Exit codes: 0 success, 2 usage, 3 config, 4 input, 5 shape, 6 annotation,
7 format, 8 training, 9 I/O, 1 anything else.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import annotate, clip, io, loss, sbfmaps, spr, synth, tasks
from .core import Config, FlowField, Resolution, validate_config, validate_skeleton
from .errors import LengthMismatch, MissingInput, SbfError, SchemaError, ShapeMismatch
from .heatmap import joint_heatmap, limb_heatmap

EXIT_IO = 9

_CONFIG_HELP = {
    "rho": "background padding around the keypoint box, grid pixels",
    "n_pos": "positive points per joint",
    "n_neg": "negative points per joint",
    "n_body": "body points per person",
    "n_flow": "flow points per frame",
    "alpha": "weight of the scale negatives",
    "beta": "flow positive threshold (fraction of max motion)",
    "gamma": "flow negative threshold (fraction of max motion)",
    "epsilon": "flow map threshold (fraction of max motion)",
    "mu": "weight of the smoothed scale volume in the fusion",
    "sigma": "Gaussian std, grid pixels",
    "lambda_body": "weight of the body loss",
    "lambda_joint": "weight of the scale loss",
    "t_clip": "frames per clip",
    "crop": "clip crop size",
}


def _config_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("config (flags override SBF_CONFIG)")
    for f in dataclasses.fields(Config):
        flags = ["--" + f.name.replace("_", "-")]
        if f.name == "t_clip":
            flags.append("--T")
        g.add_argument(*flags, dest=f.name, type=type(f.default), default=None, metavar="N",
                       help=f"{_CONFIG_HELP[f.name]} (default: {f.default})")
    return p


def resolve_config(args) -> Config:
    src = os.environ.get("SBF_CONFIG")
    cfg = Config.load(src) if src else Config()
    changes = {f.name: getattr(args, f.name) for f in dataclasses.fields(Config)
               if getattr(args, f.name, None) is not None}
    return validate_config(cfg.replace(**changes))


def _scale_src(s: str) -> str:
    if s == "synth" or (s.startswith("spr:") and len(s) > 4):
        return s
    raise argparse.ArgumentTypeError("expected 'synth' or 'spr:PARAMS'")


# --- shared input helpers ---------------------------------------------------


def load_flow(flow_dir, t: int, res: Resolution) -> FlowField:
    """Flow from frame ``t`` to ``t+1``, at grid resolution.

    Files at source resolution are block-averaged and scaled by 1/4.
    """
    path = Path(flow_dir) / f"{t:06d}.flo"
    if not path.is_file():
        raise MissingInput(f"frame {t}: missing flow file {path}")
    uv = io.read_flo(path).astype(np.float64)
    if uv.shape[:2] == res.shape:
        return FlowField(uv)
    if uv.shape[:2] == (res.h0, res.w0):
        blocks = uv.reshape(res.h, 4, res.w, 4, 2).mean(axis=(1, 3))
        return FlowField(blocks / 4.0)
    raise ShapeMismatch(f"frame {t}: flow {uv.shape[:2]} matches neither grid {res.shape} "
                        f"nor source {(res.h0, res.w0)}")


def _read_sequence(path):
    seq = io.read_keypoints(path)
    return seq, Resolution(seq.height, seq.width)


def _spr_maps(params, image_dir, t, res, J):
    path = Path(image_dir) / f"{t:06d}.png"
    if not path.is_file():
        raise MissingInput(f"frame {t}: missing image {path}")
    pred = spr.dense_infer(params, io.read_image(path, res.shape))
    if pred.shape[0] not in (J, J + 1):
        raise ShapeMismatch(f"head predicts {pred.shape[0]} channels, need {J} or {J + 1}")
    return pred[:J], (pred[J] if pred.shape[0] == J + 1 else None)


def _extract_frame(k, t, frame, seq, res, cfg, args, params):
    t0 = time.perf_counter()
    graph = seq.graph
    frame = validate_skeleton(frame, graph, res)
    flow = load_flow(args.flow, t, res)
    s_joint, body = synth.standin_maps(frame, graph, res)
    if params is not None:
        scale, spr_body = _spr_maps(params, args.images, t, res, graph.joints)
        s_joint = sbfmaps.ScaleVolume(scale, "joint")
        if spr_body is not None:
            body = spr_body
    if args.variant == "limb":
        scale = sbfmaps.limb_scale_volume(s_joint, graph)
        heat = limb_heatmap(frame, graph, cfg.sigma, res)
    else:
        scale = s_joint
        heat = joint_heatmap(frame, cfg.sigma, res)
    maps = sbfmaps.SbfMaps(scale, body, sbfmaps.flow_map(flow, cfg.epsilon))
    out = maps.stack() if args.payload == "binary" else sbfmaps.build_frame(maps, heat, cfg.sigma, cfg.mu).tensor
    return k, out, time.perf_counter() - t0


# --- commands ---------------------------------------------------------------


def cmd_extract(args) -> int:
    cfg = resolve_config(args)
    seq, res = _read_sequence(args.kps)
    params = None
    if args.scale_src.startswith("spr:"):
        params = io.read_head_params(args.scale_src[4:])
        if args.images is None:
            raise MissingInput("--scale-src spr needs --images")
    jobs = list(enumerate(zip(seq.times, seq.frames)))
    if not jobs:
        raise MissingInput(f"{args.kps}: no frames")
    run = lambda job: _extract_frame(job[0], job[1][0], job[1][1], seq, res, cfg, args, params)  # noqa: E731
    t0 = time.perf_counter()
    if args.threads > 1:
        with ThreadPoolExecutor(args.threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    results.sort(key=lambda r: r[0])
    frames = [r[1] for r in results]
    header = io.write_sbf(args.out, frames, args.variant, frame_base=seq.times[0])
    for (k, _, dt), t in zip(results, seq.times):
        print(f"frame {t}: {1000 * dt:.1f} ms")
    times = np.array([r[2] for r in results])
    print(f"{header.T} frames, {header.channels} channels, {header.H}x{header.W}; "
          f"mean {1000 * times.mean():.1f} ms/frame, total {time.perf_counter() - t0:.2f} s")
    return 0


def cmd_annotate(args) -> int:
    cfg = resolve_config(args)
    seq, res = _read_sequence(args.kps)
    sets = []
    for t, frame in zip(seq.times, seq.frames):
        frame = validate_skeleton(frame, seq.graph, res)
        flow = None
        if args.head == "flow":
            if args.flow is None:
                raise MissingInput("--head flow needs --flow")
            flow = load_flow(args.flow, t, res)
        sets += annotate.annotate_frame(frame, seq.graph, res, cfg, args.head, args.seed, t, flow)
    n = io.write_annotations(args.out, sets)
    print(f"{n} records, {sum(a.num_points for a in sets)} points -> {args.out}")
    return 0


def _read_scores(path) -> list[np.ndarray]:
    out = []
    for i, line in enumerate(Path(path).read_text().splitlines()):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            out.append(np.asarray(rec["scores"], dtype=np.float64))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise SchemaError(f"{path}:{i + 1}: expected {{\"scores\": [...]}} ({e})") from None
    return out


def compute_losses(records: list[dict], scores: list[np.ndarray], cfg: Config) -> dict:
    """Loss summary for annotation records and aligned per-point scores.

    ``l_scale`` averages the per-(frame, person) scale losses, ``l_body`` and
    ``l_flow`` average the per-record BCE.
    """
    if len(records) != len(scores):
        raise LengthMismatch(f"{len(records)} annotation records vs {len(scores)} score lines")
    scale_groups: dict = {}
    body, flow = [], []
    for rec, s in zip(records, scores):
        pts = np.asarray(rec["points"], dtype=np.int64).reshape(-1, 3)
        if len(s) != len(pts):
            raise LengthMismatch(f"record frame {rec['frame']}: {len(pts)} points vs {len(s)} scores")
        lab = pts[:, 2]
        if rec["head"] == "scale":
            scale_groups.setdefault((rec["frame"], rec["person"]), []).append((s[lab == 1], s[lab == 0]))
        elif rec["head"] == "body":
            body.append(loss.body_loss(s, lab))
        elif rec["head"] == "flow":
            flow.append(loss.flow_loss(s, lab))
        else:
            raise SchemaError(f"unknown head {rec['head']!r}")
    out = {}
    if scale_groups:
        out["l_scale"] = float(np.mean([loss.scale_loss(g, cfg.alpha) for g in scale_groups.values()]))
    if body:
        out["l_body"] = float(np.mean(body))
    if flow:
        out["l_flow"] = float(np.mean(flow))
    if scale_groups or body:
        out["total"] = loss.total_loss(out.get("l_scale", 0.0), out.get("l_body", 0.0),
                                       cfg.lambda_body, cfg.lambda_joint)
    return out


def cmd_loss(args) -> int:
    cfg = resolve_config(args)
    print(json.dumps(compute_losses(io.read_annotations(args.ann), _read_scores(args.scores), cfg)))
    return 0


def cmd_train_head(args) -> int:
    cfg = resolve_config(args)
    t0 = time.perf_counter()
    task = tasks.build_task(args.task, args.seed, n_train=args.n_train, n_heldout=args.n_heldout, cfg=cfg)
    hyper = spr.TrainHyper(steps=args.steps, lr=args.lr, momentum=args.momentum, seed=args.seed)
    result = spr.train_head(task.batch, hyper)
    io.write_head_params(args.out, result.params)
    score = tasks.heldout_iou(task, result.params)
    final = result.losses[-1] if result.losses else float("nan")
    print(f"task {args.task}: {args.steps} steps, final loss {final:.6f}, "
          f"held-out IoU {score:.4f} ({time.perf_counter() - t0:.1f} s)")
    return 0


def cmd_infer_head(args) -> int:
    params = io.read_head_params(args.params)
    if args.image is not None:
        grid = io.read_image(args.image)
        slot = args.slot or "scale"
    elif args.flow_file is not None:
        grid = synth.flow_features(io.read_flo(args.flow_file).astype(np.float64))
        slot = args.slot or "flow"
    else:
        grid = tasks.feature_grid(args.task, synth.gen_scene(args.seed))
        slot = args.slot or {"synth-disk": "scale", "synth-body": "body", "synth-flow": "flow"}[args.task]
    pred = spr.dense_infer(params, grid)
    J = args.joints if args.joints is not None else (pred.shape[0] if slot == "scale" else 5)
    out = np.zeros((J + 2,) + pred.shape[1:], dtype=np.uint8)
    if slot == "scale":
        if pred.shape[0] != J:
            raise ShapeMismatch(f"head predicts {pred.shape[0]} channels, container has {J} joints")
        out[:J] = pred
    else:
        if pred.shape[0] != 1:
            raise ShapeMismatch(f"{slot} slot needs a 1-output head, got {pred.shape[0]}")
        out[J if slot == "body" else J + 1] = pred[0]
    io.write_sbf(args.out, [out], "joint")
    print(f"{slot} prediction {pred.shape[1]}x{pred.shape[2]}, {int(pred.sum())} positive pixels -> {args.out}")
    return 0


def cmd_clip(args) -> int:
    cfg = resolve_config(args)
    cont = io.read_sbf(args.sbf)
    clips = clip.make_clips(cont.frames.astype(np.float64), cfg.t_clip, cfg.crop, args.nclips)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for k, c in enumerate(clips):
        io.write_sbf(out / f"clip_{k:02d}.sbf", c.frames, cont.header.variant, io.KIND_FLOAT,
                     cont.header.frame_base + int(c.indices[0]))
    print(f"{len(clips)} clips of {cfg.t_clip} frames at {cfg.crop}x{cfg.crop} -> {out}")
    return 0


def cmd_render(args) -> int:
    cont = io.read_sbf(args.sbf)
    if not 0 <= args.frame < cont.header.T:
        raise MissingInput(f"frame {args.frame} not in container with {cont.header.T} frames")
    io.render_png(cont.frames[args.frame], args.out, scale=args.scale)
    print(f"frame {args.frame} -> {args.out}")
    return 0


def cmd_synth(args) -> int:
    scenes = synth.write_sequence(args.out, args.seed, args.frames)
    print(f"{len(scenes)} synthetic frames -> {args.out}")
    return 0


# --- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    cfgp = _config_parser()
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="sbf", description="Scale-Body-Flow maps and point supervision.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", parents=[cfgp], help="build an SBF container from keypoints and flow")
    p.add_argument("--kps", required=True, help="keypoint JSON")
    p.add_argument("--flow", required=True, help="directory of {t:06d}.flo files")
    p.add_argument("--out", required=True)
    p.add_argument("--variant", choices=sbfmaps.VARIANTS, default="joint")
    p.add_argument("--scale-src", type=_scale_src, default="synth",
                   help="'synth' (skeleton stand-in disks) or 'spr:PARAMS' (trained head, needs --images)")
    p.add_argument("--images", help="directory of {t:06d}.png feature images for --scale-src spr")
    p.add_argument("--payload", choices=("float", "binary"), default="float",
                   help="fused float frames or the raw binary S/B/F maps")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("annotate", parents=[cfgp], help="sample point annotations")
    p.add_argument("--kps", required=True)
    p.add_argument("--flow", help="flow directory (required for --head flow)")
    p.add_argument("--head", choices=annotate.HEADS, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("loss", parents=[cfgp], help="losses of scores against annotations")
    p.add_argument("--ann", required=True, help="annotation JSONL")
    p.add_argument("--scores", required=True, help='JSONL of {"scores": [...]}, one line per record')
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("train-head", parents=[cfgp], help="train the point head on a synthetic task")
    p.add_argument("--task", choices=tasks.TASKS, default="synth-disk", help="(default: %(default)s)")
    p.add_argument("--steps", type=int, default=spr.TrainHyper.steps, help="gradient steps (default: %(default)s)")
    p.add_argument("--lr", type=float, default=spr.TrainHyper.lr, help="learning rate (default: %(default)s)")
    p.add_argument("--momentum", type=float, default=spr.TrainHyper.momentum, help="momentum (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-train", type=int, default=32, help="training scenes (default: %(default)s)")
    p.add_argument("--n-heldout", type=int, default=4, help="held-out scenes (default: %(default)s)")
    p.add_argument("--out", required=True, help="head parameter file")
    p.set_defaults(func=cmd_train_head)

    p = sub.add_parser("infer-head", formatter_class=fmt, help="dense inference into a binary SBF container")
    p.add_argument("--params", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--image", help="PNG feature image")
    p.add_argument("--flow-file", help=".flo file; features are the flow deviation")
    p.add_argument("--task", choices=tasks.TASKS, default="synth-disk",
                   help="synthetic scene used when no --image/--flow-file is given")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--slot", choices=annotate.HEADS, help="container slot for the prediction")
    p.add_argument("--joints", type=int, help="scale channels in the container")
    p.set_defaults(func=cmd_infer_head)

    p = sub.add_parser("clip", parents=[cfgp], help="cut test clips from a container")
    p.add_argument("--sbf", required=True)
    p.add_argument("--nclips", type=int, default=10)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_clip)

    p = sub.add_parser("render", formatter_class=fmt, help="render one container frame as PNG")
    p.add_argument("--sbf", required=True)
    p.add_argument("--frame", type=int, default=0)
    p.add_argument("--scale", type=int, default=4, help="nearest-neighbour enlargement")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("synth", formatter_class=fmt, help="write a synthetic keypoint/flow/image sequence")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=8)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SbfError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

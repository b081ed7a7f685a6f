"""Desk-scale training tasks for the point head on synthetic scenes.

Each task pairs a feature grid per scene with annotations generated exactly
as for real data, and keeps held-out scenes with analytic masks for scoring.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import annotate
from .core import Config
from .spr import (
    HeadParams,
    OCTAVES,
    PointBatch,
    TrainHyper,
    TrainResult,
    batch_from_annotations,
    dense_infer,
    train_head,
)
from .synth import SynthScene, SynthSpec, flow_features, gen_scene, render_image

TASKS = ("synth-disk", "synth-body", "synth-flow")


@dataclass
class HeadTask:
    name: str
    train_scenes: list[SynthScene]
    train_grids: list[np.ndarray]
    heldout_scenes: list[SynthScene]
    heldout_grids: list[np.ndarray]
    batch: PointBatch

    def truth(self, scene: SynthScene) -> np.ndarray:
        """Analytic ``(out_dim, h, w)`` masks the head should reproduce."""
        if self.name == "synth-disk":
            return scene.joint_masks
        if self.name == "synth-body":
            return scene.body_mask[None]
        return scene.mover_mask[None]


def feature_grid(name: str, scene: SynthScene) -> np.ndarray:
    """Feature grid the head sees for ``scene`` under task ``name``."""
    if name == "synth-disk":
        return render_image(scene)
    if name == "synth-body":
        return render_image(scene, body=True)
    return flow_features(scene.flow)


def _annotations(name: str, scene: SynthScene, cfg: Config, seed: int):
    sk, res = scene.skeleton, scene.res
    bg = annotate.background_set(sk, cfg.rho, res)
    if name == "synth-disk":
        return annotate.scale_annotations(annotate.joint_sets(sk, res), bg, cfg, seed)
    if name == "synth-body":
        return annotate.body_annotations(annotate.body_positive_set(sk, scene.graph, res), bg, cfg, seed)
    return annotate.flow_annotations(annotate.flow_sets(scene.flow, cfg.beta, cfg.gamma), cfg, seed)


def build_task(name: str = "synth-disk", seed: int = 0, n_train: int = 32, n_heldout: int = 4,
               cfg: Config = Config(), spec: SynthSpec = SynthSpec(), octaves: int = OCTAVES) -> HeadTask:
    if name not in TASKS:
        raise ValueError(f"unknown task {name!r}; choose from {TASKS}")
    seeds = np.random.SeedSequence([seed, TASKS.index(name)]).generate_state(n_train + n_heldout)
    scenes = [gen_scene(int(s), spec) for s in seeds]
    train, held = scenes[:n_train], scenes[n_train:]
    grids = [feature_grid(name, s) for s in train]
    batches = [batch_from_annotations(_annotations(name, s, cfg, s.seed), g, cfg.alpha, octaves)
               for s, g in zip(train, grids)]
    return HeadTask(name, train, grids, held, [feature_grid(name, s) for s in held], PointBatch.concat(batches))


def iou(pred: np.ndarray, truth: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    union = np.logical_or(pred, truth).sum()
    return 1.0 if union == 0 else float(np.logical_and(pred, truth).sum() / union)


def heldout_iou(task: HeadTask, params: HeadParams, subdivision=(4, 2, 1024), octaves: int = OCTAVES) -> float:
    """Mean IoU over held-out scenes and output channels."""
    scores = []
    for scene, grid in zip(task.heldout_scenes, task.heldout_grids):
        pred = dense_infer(params, grid, subdivision, octaves=octaves)
        truth = task.truth(scene)
        scores.extend(iou(p, t) for p, t in zip(pred, truth))
    return float(np.mean(scores))


def run_task(name: str = "synth-disk", hyper: TrainHyper = TrainHyper(), task_seed: int = 0,
             **task_kwargs) -> tuple[HeadTask, TrainResult, float]:
    task = build_task(name, task_seed, **task_kwargs)
    result = train_head(task.batch, hyper)
    return task, result, heldout_iou(task, result.params)

"""mIoU evaluation and ablation sweeps.

Per-class IoU accumulates intersection and union pixel counts across all
of a class's episodes before dividing; mIoU is the arithmetic mean over
classes. Episode evaluation is read-only on the parameters and can run
on a thread pool (PROTOSEG_THREADS caps the worker count).
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .episodes import episode_seed, sample_episode
from .errors import ConfigError, FoldOverlapError, ShapeMismatchError
from .model import ModelConfig, TrainConfig, episode_forward, train


def iou(pred, gt):
    """Intersection over union of two binary masks; 1.0 when both are empty."""
    pred = np.asarray(pred) >= 0.5
    gt = np.asarray(gt) >= 0.5
    if pred.shape != gt.shape:
        raise ShapeMismatchError(f"iou: {pred.shape} vs {gt.shape}")
    union = np.logical_or(pred, gt).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(pred, gt).sum() / union)


@dataclass
class EvalReport:
    per_class_iou: dict  # class_id -> accumulated IoU
    miou: float
    episode_count: int
    config_digest: str = ""

    def as_text(self):
        lines = [f"{'class':>8} {'iou':>8}"]
        for cid in sorted(self.per_class_iou):
            lines.append(f"{cid:>8} {self.per_class_iou[cid]:>8.4f}")
        lines.append(f"{'mIoU':>8} {self.miou:>8.4f}  ({self.episode_count} episodes)")
        return "\n".join(lines)

    def as_csv(self):
        rows = ["class,iou"]
        for cid in sorted(self.per_class_iou):
            rows.append(f"{cid},{self.per_class_iou[cid]:.6f}")
        rows.append(f"miou,{self.miou:.6f}")
        return "\n".join(rows) + "\n"


def _worker_count():
    env = os.environ.get("PROTOSEG_THREADS")
    if env:
        return max(1, int(env))
    return 1


def evaluate(params, pool, class_ids, k=1, episodes=200, seed=0, train_classes=None):
    """Accumulated per-class IoU and mIoU over seeded evaluation episodes."""
    if train_classes is not None and set(train_classes) & set(class_ids):
        raise FoldOverlapError(
            f"evaluation classes overlap training classes: {set(train_classes) & set(class_ids)}"
        )
    plans = []
    for e in range(episodes):
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0xE7A1, e)))
        class_id = class_ids[rng.integers(len(class_ids))]
        plans.append((class_id, episode_seed(seed, e)))

    def run(plan):
        class_id, ep_seed = plan
        ep = sample_episode(pool, class_id, k, ep_seed)
        _, mask, _, _ = episode_forward(params, ep)
        gt = np.asarray(ep.query_mask) >= 0.5
        pred = np.asarray(mask) >= 0.5
        return class_id, int(np.logical_and(pred, gt).sum()), int(np.logical_or(pred, gt).sum())

    workers = _worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(run, plans))
    else:
        results = [run(p) for p in plans]

    inter = {c: 0 for c in class_ids}
    union = {c: 0 for c in class_ids}
    for class_id, i, u in results:
        inter[class_id] += i
        union[class_id] += u
    per_class = {c: (inter[c] / union[c] if union[c] else 1.0) for c in class_ids}
    miou = float(np.mean(list(per_class.values())))
    return EvalReport(per_class_iou=per_class, miou=miou, episode_count=episodes)


STANDARD_ARMS = ("full", "no-fg-prior", "no-bg-prior", "no-prior", "no-erase", "single-level")


def arm_config(base, arm):
    """Model configuration for one ablation arm; identical seed across arms."""
    if arm == "full":
        return base
    if arm == "no-fg-prior":
        return replace(base, use_fg_prior=False)
    if arm == "no-bg-prior":
        return replace(base, use_bg_prior=False)
    if arm == "no-prior":
        return replace(base, use_fg_prior=False, use_bg_prior=False)
    if arm == "no-erase":
        return replace(base, erase=False)
    if arm == "single-level":
        return replace(base, levels=2)
    if arm.startswith("protos-"):
        return replace(base, prototypes=int(arm.split("-")[1]))
    if arm.startswith("levels-"):
        return replace(base, levels=int(arm.split("-")[1]))
    raise ConfigError(f"unknown ablation arm {arm!r}")


def ablate(pool, train_classes, test_classes, base_cfg, train_cfg, arms=STANDARD_ARMS,
           k=1, episodes=100, eval_seed=0):
    """Train and evaluate each arm with identical seeds; returns {arm: EvalReport}."""
    reports = {}
    for arm in arms:
        cfg = arm_config(base_cfg, arm)
        params, _ = train(pool, train_classes, cfg, train_cfg)
        reports[arm] = evaluate(
            params, pool, test_classes, k=k, episodes=episodes, seed=eval_seed,
            train_classes=train_classes,
        )
    return reports


def ablation_table(reports):
    lines = [f"{'arm':>14} {'miou':>8}"]
    for arm, rep in reports.items():
        lines.append(f"{arm:>14} {rep.miou:>8.4f}")
    return "\n".join(lines)

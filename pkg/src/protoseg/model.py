"""Network assembly and training.

A small from-scratch convolutional backbone feeds the prior generation,
prototype fusion, and the coarse-to-fine decoder. Support-derived
guidance (priors and prototypes) is computed without gradient tracking;
gradients flow through the query path and the decoder heads only.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import priors as priors_mod
from . import prototypes as proto_mod
from .decoder import HeadParams, decode_pyramid, init_head, predict
from .episodes import episode_seed, horizontal_flip, recolor, rotate90, sample_episode
from .errors import (ConfigError, EmptyListError, ImageTooSmallError,
                     MissingGradientError, ShapeMismatchError)
from .snapshot import load_checkpoint, save_checkpoint
from .tensor import Tensor, bilinear_resize, conv2d, cross_entropy_2class, init_uniform, relu

BACKBONE_CHANNEL_PLAN = (16, 32, 64, 64, 64)
BACKBONE_STRIDE_PLAN = (2, 2, 2, 1, 1)


@dataclass
class ModelConfig:
    levels: int = 4
    prototypes: int = 3
    head_width: int = 64
    kmeans_iters: int = 10
    use_fg_prior: bool = True
    use_bg_prior: bool = True
    erase: bool = True
    lr: float = 1e-3
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch: int = 4
    seed: int = 0

    def __post_init__(self):
        if not 2 <= self.levels <= len(BACKBONE_CHANNEL_PLAN):
            raise ConfigError(f"levels must be in 2..{len(BACKBONE_CHANNEL_PLAN)}")
        if self.prototypes < 1 or self.head_width < 1:
            raise ConfigError("prototypes and head_width must be positive")


@dataclass
class ModelParams:
    backbone: list  # per stage: (weight Tensor, bias Tensor)
    heads: list  # per level, deepest-first: HeadParams
    config: ModelConfig

    def named(self):
        out = {}
        for i, (w, b) in enumerate(self.backbone):
            out[f"backbone.{i}.w"] = w
            out[f"backbone.{i}.b"] = b
        for i, head in enumerate(self.heads):
            out.update(head.named(prefix=f"head.{i}."))
        return out

    def zero_grad(self):
        for t in self.named().values():
            t.grad = None


@dataclass
class LossReport:
    per_level: list  # scalar Tensors, deepest-first
    total: Tensor

    def values(self):
        return [float(l.data) for l in self.per_level]


def init_params(cfg):
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0xB0)))
    channels = BACKBONE_CHANNEL_PLAN[: cfg.levels]
    backbone = []
    c_in = 3
    for c_out in channels:
        fan_in = c_in * 9
        backbone.append(
            (init_uniform(rng, (c_out, c_in, 3, 3), fan_in), init_uniform(rng, (c_out,), fan_in))
        )
        c_in = c_out
    heads = []
    for c_feat in reversed(channels):
        heads.append(init_head(rng, c_feat + cfg.prototypes + 2, cfg.head_width))
    return ModelParams(backbone=backbone, heads=heads, config=cfg)


def backbone_forward(image, params):
    """Feature pyramid, shallow→deep, one relu conv stage per level."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ImageTooSmallError(f"expected 3×H×W image, got {image.shape}")
    if image.shape[1] < 16 or image.shape[2] < 16:
        raise ImageTooSmallError(f"image {image.shape[1]}×{image.shape[2]} below 16×16")
    strides = BACKBONE_STRIDE_PLAN[: len(params.backbone)]
    x = Tensor(image)
    pyramid = []
    for (w, b), stride in zip(params.backbone, strides):
        x = relu(conv2d(x, w, b, stride=stride, padding=1))
        pyramid.append(x)
    return pyramid


@dataclass
class Guidance:
    """Support-derived, gradient-free guidance for one episode.

    Both lists run deepest-first and are computed per level with that
    level's own features: the pixelwise foreground/background comparison
    is baseline-free at every resolution, not a resized coarse map.
    """

    priors: list  # per level, deepest-first: DualPriorMask at level resolution
    prototypes: list  # per level, deepest-first: PrototypeSet

    @property
    def prior(self):
        """Deepest-level dual prior (the coarsest, most semantic map)."""
        return self.priors[0]


def compute_guidance(params, episode):
    cfg = params.config
    support_pyramids = []
    aligned_masks = []
    for img, mask in episode.support:
        pyr = [t.detach().data for t in backbone_forward(img, params)]
        support_pyramids.append(pyr)
        aligned_masks.append(
            [priors_mod.align_mask(mask, f.shape[1], f.shape[2]) for f in pyr]
        )
    query_pyramid = [t.detach().data for t in backbone_forward(episode.query_image, params)]

    level_priors = []
    protos = []
    n_levels = len(params.backbone)
    for level in reversed(range(n_levels)):
        per_shot = [
            priors_mod.dual_prior(query_pyramid[level], pyr[level], masks[level])
            for pyr, masks in zip(support_pyramids, aligned_masks)
        ]
        level_priors.append(priors_mod.kshot_average(per_shot))
        shots = [(pyr[level], masks[level]) for pyr, masks in zip(support_pyramids, aligned_masks)]
        protos.append(proto_mod.pool_prototypes(shots, cfg.prototypes, cfg.kmeans_iters))
    return Guidance(priors=level_priors, prototypes=protos)


def _prior_channels(prior, h, w, cfg):
    stacked = prior.stacked()
    if stacked.shape[1:] != (h, w):
        stacked = bilinear_resize(Tensor(stacked), h, w).data
    if not cfg.use_fg_prior:
        stacked[0] = 0.0
    if not cfg.use_bg_prior:
        stacked[1] = 0.0
    return stacked


def episode_forward(params, episode, guidance=None):
    """Full forward pass: returns (per-level logits, predicted mask, LossReport, guidance).

    Pass a precomputed `guidance` to hold priors/prototypes fixed (used by
    the finite-difference oracle and by ablation arms reusing support state).
    """
    cfg = params.config
    if guidance is None:
        guidance = compute_guidance(params, episode)
    query_pyramid = backbone_forward(episode.query_image, params)
    fused = []
    for protos, prior, feat in zip(guidance.prototypes, guidance.priors, reversed(query_pyramid)):
        pr = _prior_channels(prior, feat.shape[1], feat.shape[2], cfg)
        fused.append(proto_mod.fuse(feat, protos, pr))
    logits = decode_pyramid(fused, params.heads, erase=cfg.erase)
    gt = np.asarray(episode.query_mask, dtype=np.float64)
    per_level = []
    for r in logits:
        up = bilinear_resize(r, gt.shape[0], gt.shape[1])
        per_level.append(cross_entropy_2class(up, gt))
    total = per_level[0]
    for l in per_level[1:]:
        total = total + l
    final_up = bilinear_resize(logits[-1], gt.shape[0], gt.shape[1])
    mask = predict(final_up)
    return logits, mask, LossReport(per_level=per_level, total=total), guidance


def predict_mask(params, episode):
    """Inference-only wrapper returning (mask H×W, guidance)."""
    _, mask, _, guidance = episode_forward(params, episode)
    return mask, guidance


# -- optimization -------------------------------------------------------------


@dataclass
class OptimState:
    velocity: dict = field(default_factory=dict)  # name -> np.ndarray


def average_params(models):
    """Elementwise mean of several ModelParams with identical configs.

    Averaging the endpoints of a noisy SGD trajectory (e.g. the main run
    and a low-rate fine-tune) gives a flatter, more stable model than any
    single checkpoint.
    """
    if not models:
        raise EmptyListError("average_params needs at least one model")
    cfgs = {(m.config.levels, m.config.prototypes, m.config.head_width) for m in models}
    if len(cfgs) != 1:
        raise ShapeMismatchError(f"average_params: mixed architectures {cfgs}")
    out = init_params(models[0].config)
    for name, t in out.named().items():
        t.data = np.mean([m.named()[name].data for m in models], axis=0)
    return out


def sgd_step(params, state, scale=1.0, skip=None, lr=None):
    """SGD with momentum and weight decay: v ← m·v + g + wd·p; p ← p − lr·v.

    Parameters whose name satisfies `skip` are left untouched and their
    velocity is cleared (used to freeze the feature extractor so the
    gradient-free guidance stays stationary).
    """
    cfg = params.config
    if lr is None:
        lr = cfg.lr
    for name, p in params.named().items():
        if skip is not None and skip(name):
            state.velocity.pop(name, None)
            continue
        if p.grad is None:
            raise MissingGradientError(f"parameter {name} has no gradient")
        g = p.grad * scale + cfg.weight_decay * p.data
        v = state.velocity.get(name)
        v = g if v is None else cfg.momentum * v + g
        state.velocity[name] = v
        p.data = p.data - lr * v


# -- training loop ------------------------------------------------------------


@dataclass
class TrainConfig:
    iterations: int = 1000
    k_shot: int = 1
    sample_k: bool = False  # draw the shot count uniformly from 1..k_shot per episode
    log_every: int = 50
    snapshot_every: int = 0  # 0: only final
    lr_drop_at: int = 0  # 0: constant lr; else multiply lr by lr_drop_factor from this iteration on
    lr_drop_factor: float = 1.0
    flip_augment: bool = True
    rotate_augment: bool = True
    color_augment: bool = True
    freeze_backbone: bool = False


def _checkpoint_arrays(params, state, iteration):
    arrays = {name: t.data for name, t in params.named().items()}
    arrays.update({f"velocity.{name}": v for name, v in state.velocity.items()})
    return arrays, {"iteration": str(iteration)}


def save_model(directory, params, state=None, iteration=0):
    state = state or OptimState()
    arrays, extra = _checkpoint_arrays(params, state, iteration)
    cfg = params.config
    extra.update(
        {
            "levels": str(cfg.levels),
            "prototypes": str(cfg.prototypes),
            "head_width": str(cfg.head_width),
            "seed": str(cfg.seed),
        }
    )
    save_checkpoint(directory, arrays, extra)


def load_model(directory, cfg=None):
    arrays, extra = load_checkpoint(directory)
    if cfg is None:
        cfg = ModelConfig(
            levels=int(extra.get("levels", 4)),
            prototypes=int(extra.get("prototypes", 3)),
            head_width=int(extra.get("head_width", 64)),
            seed=int(extra.get("seed", 0)),
        )
    params = init_params(cfg)
    state = OptimState()
    for name, t in params.named().items():
        t.data = arrays[name].copy()
        vel = arrays.get(f"velocity.{name}")
        if vel is not None:
            state.velocity[name] = vel.copy()
    iteration = int(extra.get("iteration", 0))
    return params, state, iteration


def train(pool, class_ids, cfg, train_cfg, out_dir=None, resume=None, log_lines=None):
    """Episodic SGD training; returns (params, state).

    Deterministic under (cfg.seed, train_cfg): the episode at global index
    i is sampled with seed `cfg.seed ^ i`, so resumed runs replay exactly.
    """
    if resume is not None:
        params, state, start = load_model(resume, cfg)
    else:
        params, state, start = init_params(cfg), OptimState(), 0
    from pathlib import Path

    log_path = Path(out_dir) / "train_log.txt" if out_dir else None
    if out_dir:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
    for it in range(start, train_cfg.iterations):
        params.zero_grad()
        level_losses = None
        for j in range(cfg.batch):
            seed = episode_seed(cfg.seed, it * cfg.batch + j)
            rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, it, j)))
            class_id = class_ids[rng.integers(len(class_ids))]
            k = int(rng.integers(1, train_cfg.k_shot + 1)) if train_cfg.sample_k else train_cfg.k_shot
            ep = sample_episode(pool, class_id, k, seed)
            if train_cfg.flip_augment and rng.random() < 0.5:
                support = [horizontal_flip(i, m) for i, m in ep.support]
                q_img, q_mask = horizontal_flip(ep.query_image, ep.query_mask)
                ep = type(ep)(support=support, query_image=q_img, query_mask=q_mask, class_id=ep.class_id)
            if train_cfg.rotate_augment:
                q = int(rng.integers(4))
                if q:
                    support = [rotate90(i, m, q) for i, m in ep.support]
                    q_img, q_mask = rotate90(ep.query_image, ep.query_mask, q)
                    ep = type(ep)(support=support, query_image=q_img, query_mask=q_mask,
                                  class_id=ep.class_id)
            if train_cfg.color_augment:
                perm = rng.permutation(3)
                invert = rng.random(3) < 0.5
                support = [(recolor(i, perm, invert), m) for i, m in ep.support]
                q_img = recolor(ep.query_image, perm, invert)
                ep = type(ep)(support=support, query_image=q_img, query_mask=ep.query_mask,
                              class_id=ep.class_id)
            _, _, report, _ = episode_forward(params, ep)
            report.total.backward()
            vals = np.array(report.values())
            level_losses = vals if level_losses is None else level_losses + vals
        skip = (lambda n: n.startswith("backbone.")) if train_cfg.freeze_backbone else None
        lr = cfg.lr
        if train_cfg.lr_drop_at and it >= train_cfg.lr_drop_at:
            lr *= train_cfg.lr_drop_factor
        sgd_step(params, state, scale=1.0 / cfg.batch, skip=skip, lr=lr)
        level_losses = level_losses / cfg.batch
        if (it + 1) % train_cfg.log_every == 0 or it == train_cfg.iterations - 1:
            line = f"{it + 1} " + " ".join(f"{v:.6f}" for v in [level_losses.sum()] + list(level_losses))
            if log_lines is not None:
                log_lines.append(line)
            if log_path:
                with open(log_path, "a") as f:
                    f.write(line + "\n")
        if out_dir and train_cfg.snapshot_every and (it + 1) % train_cfg.snapshot_every == 0:
            save_model(Path(out_dir) / f"ckpt_{it + 1:06d}", params, state, it + 1)
    if out_dir:
        save_model(Path(out_dir) / "checkpoint", params, state, train_cfg.iterations)
    return params, state

"""Episode sampling, class-fold arithmetic, and the synthetic shapes dataset.

Class ids are 1-based throughout. A pool is a list of (class_id, image
C×H×W float64, mask H×W binary) records; episodes draw k supports plus
one query for a single class, without replacement.
"""

import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    EmptyForegroundError,
    IndivisibleClassCountError,
    InsufficientSamplesError,
    IoError,
    UnknownClassError,
)
from . import pnm

# Ordered so a contiguous fold split mixes solid and thin geometries on
# both sides (disc/cross/triangle vs square/ring/bar).
SHAPE_FAMILIES = ("disc", "cross", "triangle", "square", "ring", "bar")


@dataclass
class Episode:
    support: list  # k pairs (image C×H×W, mask H×W)
    query_image: np.ndarray
    query_mask: np.ndarray
    class_id: int

    def __post_init__(self):
        for _, mask in self.support:
            if not (np.asarray(mask) >= 0.5).any():
                raise EmptyForegroundError("support mask without foreground")


@dataclass
class SplitConfig:
    num_classes: int
    fold_index: int
    role: str = "test"  # "train" keeps the other folds' classes
    num_folds: int = 4
    mode: str = "pascal"  # "pascal": contiguous blocks; "coco": interleaved


@dataclass
class SyntheticSpec:
    image_size: int = 64
    families: tuple = SHAPE_FAMILIES
    distractors: int = 1
    noise: float = 0.02
    seed: int = 0


def fold_classes(cfg):
    """Class ids belonging to the configured fold (or its complement for training)."""
    if cfg.num_classes % cfg.num_folds != 0:
        raise IndivisibleClassCountError(
            f"{cfg.num_classes} classes not divisible into {cfg.num_folds} folds"
        )
    if not 0 <= cfg.fold_index < cfg.num_folds:
        raise IndivisibleClassCountError(f"fold_index {cfg.fold_index} out of range")
    per = cfg.num_classes // cfg.num_folds
    if cfg.mode == "coco":
        fold = [c for c in range(1, cfg.num_classes + 1) if (c - 1) % cfg.num_folds == cfg.fold_index]
    else:
        fold = list(range(cfg.fold_index * per + 1, (cfg.fold_index + 1) * per + 1))
    if cfg.role == "train":
        return [c for c in range(1, cfg.num_classes + 1) if c not in set(fold)]
    return fold


def sample_episode(pool, class_id, k, seed):
    """Draw k support pairs plus one query for `class_id`, uniformly, seeded."""
    candidates = [i for i, (cid, _, _) in enumerate(pool) if cid == class_id]
    if len(candidates) < k + 1:
        raise InsufficientSamplesError(
            f"class {class_id}: need {k + 1} samples, pool has {len(candidates)}"
        )
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(candidates), size=k + 1, replace=False)
    records = [pool[candidates[i]] for i in picked]
    support = [(img, mask) for _, img, mask in records[:k]]
    _, q_img, q_mask = records[k]
    return Episode(support=support, query_image=q_img, query_mask=q_mask, class_id=class_id)


def horizontal_flip(image, mask):
    """Width-axis reversal of an image and its mask, jointly."""
    return np.ascontiguousarray(image[..., ::-1]), np.ascontiguousarray(mask[..., ::-1])


def rotate90(image, mask, quarters):
    """Joint counter-clockwise rotation by `quarters` quarter turns."""
    q = int(quarters) % 4
    return (np.ascontiguousarray(np.rot90(image, q, axes=(-2, -1))),
            np.ascontiguousarray(np.rot90(mask, q, axes=(-2, -1))))


def recolor(image, perm, invert):
    """Permute color channels and invert the flagged ones (v -> 1-v).

    Applied with the same (perm, invert) to every image of an episode,
    this scrambles absolute color while keeping support/query appearance
    consistent, so matching classes by color memorized at training time
    stops working but matching against the support set still does.
    """
    out = np.ascontiguousarray(image[list(perm)])
    for c in range(out.shape[0]):
        if invert[c]:
            out[c] = 1.0 - out[c]
    return out


# -- synthetic shapes ---------------------------------------------------------


def _rasterize(family, size, cy, cx, s, rng):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    if family == "disc":
        return dy * dy + dx * dx <= s * s
    if family == "square":
        return (np.abs(dy) <= s) & (np.abs(dx) <= s)
    if family == "triangle":
        # upward isoceles triangle inscribed in a 2s-tall box
        return (dy >= -s) & (dy <= s) & (np.abs(dx) <= (dy + s) / 2.0)
    if family == "ring":
        r2 = dy * dy + dx * dx
        inner = 0.55 * s
        return (r2 <= s * s) & (r2 >= inner * inner)
    if family == "cross":
        arm = max(1.0, 0.35 * s)
        return ((np.abs(dy) <= arm) & (np.abs(dx) <= s)) | ((np.abs(dx) <= arm) & (np.abs(dy) <= s))
    if family == "bar":
        return (np.abs(dy) <= max(1.0, 0.3 * s)) & (np.abs(dx) <= s)
    raise UnknownClassError(f"unknown shape family {family!r}")


def _background(size, rng):
    base = rng.uniform(0.0, 1.0, size=3)
    coarse = rng.uniform(-0.15, 0.15, size=(3, 4, 4))
    from .tensor import Tensor, bilinear_resize

    texture = bilinear_resize(Tensor(coarse), size, size).data
    return np.clip(base[:, None, None] + texture, 0.0, 1.0)


def family_color(family):
    """Deterministic base color per shape family.

    Instances of a class share appearance up to jitter, the way real
    category instances do; support/query matching has a cue beyond bare
    geometry, and unseen classes come with unseen colors.
    """
    digest = hashlib.sha256(family.encode()).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    return rng.uniform(0.15, 0.95, size=3)


def _place_shape(image, family, rng, size):
    s = rng.uniform(0.15 * size, 0.28 * size)
    margin = s + 2
    cy = rng.uniform(margin, size - margin)
    cx = rng.uniform(margin, size - margin)
    mask = _rasterize(family, size, cy, cx, s, rng)
    color = np.clip(family_color(family) + rng.uniform(-0.08, 0.08, size=3), 0.0, 1.0)
    image[:, mask] = color[:, None]
    return mask


def generate_synthetic(spec, class_id, count, start_index=0):
    """Generate (image, mask) pairs for one shape class; fully seed-determined."""
    if not 1 <= class_id <= len(spec.families):
        raise UnknownClassError(f"class_id {class_id} not in 1..{len(spec.families)}")
    family = spec.families[class_id - 1]
    out = []
    for i in range(count):
        rng = np.random.default_rng(np.random.SeedSequence((spec.seed, class_id, start_index + i)))
        size = spec.image_size
        image = _background(size, rng)
        others = [f for f in spec.families if f != family]
        for _ in range(spec.distractors):
            _place_shape(image, others[rng.integers(len(others))], rng, size)
        target = _place_shape(image, family, rng, size)
        if spec.noise > 0:
            image = np.clip(image + rng.normal(0.0, spec.noise, size=image.shape), 0.0, 1.0)
        out.append((image, target.astype(np.float64)))
    return out


def synthetic_pool(spec, class_ids, per_class):
    pool = []
    for cid in class_ids:
        for img, mask in generate_synthetic(spec, cid, per_class):
            pool.append((cid, img, mask))
    return pool


# -- on-disk datasets ---------------------------------------------------------


def save_pool(directory, pool):
    """Write a pool as PPM/PGM pairs plus a tab-separated index file."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = []
    for i, (cid, img, mask) in enumerate(pool):
        img_name = f"img_{i:05d}.ppm"
        mask_name = f"mask_{i:05d}.pgm"
        pnm.write_ppm(directory / img_name, np.transpose(img, (1, 2, 0)))
        pnm.write_pgm(directory / mask_name, pnm.mask_to_gray(mask))
        lines.append(f"{cid}\t{img_name}\t{mask_name}")
    (directory / "index.txt").write_text("\n".join(lines) + ("\n" if lines else ""))


def load_pool(directory):
    """Read a dataset directory back into memory; masks threshold at 128."""
    directory = Path(directory)
    index = directory / "index.txt"
    if not index.is_file():
        raise IoError(f"{directory}: missing index.txt")
    pool = []
    for line in index.read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        try:
            cid, img_path, mask_path = line.split("\t")
        except ValueError as exc:
            raise IoError(f"{index}: bad index line {line!r}") from exc
        img = np.transpose(pnm.read_ppm(directory / img_path), (2, 0, 1))
        mask = (pnm.read_pgm(directory / mask_path) >= 128).astype(np.float64)
        pool.append((int(cid), img, mask))
    return pool


def episode_seed(base_seed, episode_index):
    """Documented seed-splitting rule for concurrent samplers."""
    return int(base_seed) ^ int(episode_index)

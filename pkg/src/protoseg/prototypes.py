"""Support prototypes and class-aware feature fusion.

The foreground descriptor set is decomposed into P prototypes by a small
deterministic k-means (cosine assignment, arithmetic-mean update,
centroids seeded from evenly spaced foreground pixels in scan order).
Fusion appends P prototype-similarity maps and the 2 prior channels to
the query features, so the fused width is always C + P + 2.
"""

from dataclasses import dataclass

import numpy as np

from .errors import EmptyForegroundError, ShapeMismatchError
from .priors import COSINE_EPS, DualPriorMask
from .tensor import Tensor, concat_channels, cosine_map

DEFAULT_PROTOTYPES = 3
DEFAULT_KMEANS_ITERS = 10


@dataclass
class PrototypeSet:
    prototypes: np.ndarray  # P×C

    @property
    def count(self):
        return self.prototypes.shape[0]


def _normalize_rows(m, eps=COSINE_EPS):
    return m / np.maximum(np.linalg.norm(m, axis=1, keepdims=True), eps)


def kmeans_descriptors(descriptors, p, iters=DEFAULT_KMEANS_ITERS):
    """Cluster N×C descriptors into p centroids; deterministic."""
    descriptors = np.asarray(descriptors, dtype=np.float64)
    n = descriptors.shape[0]
    if n < p:
        mean = descriptors.mean(axis=0)
        return np.concatenate([descriptors, np.tile(mean, (p - n, 1))])
    idx = (np.arange(p) * n) // p
    centroids = descriptors[idx].copy()
    for _ in range(iters):
        sims = _normalize_rows(descriptors) @ _normalize_rows(centroids).T
        assign = sims.argmax(axis=1)
        for j in range(p):
            members = descriptors[assign == j]
            if members.shape[0] > 0:
                centroids[j] = members.mean(axis=0)
    return centroids


def extract_prototypes(f_s, m_s, p=DEFAULT_PROTOTYPES, iters=DEFAULT_KMEANS_ITERS):
    """P prototypes from the masked foreground of one support shot."""
    from .priors import partition_support

    part = partition_support(f_s, m_s)
    return PrototypeSet(prototypes=kmeans_descriptors(part.foreground, p, iters))


def pool_prototypes(shots, p=DEFAULT_PROTOTYPES, iters=DEFAULT_KMEANS_ITERS):
    """One PrototypeSet per episode: concatenate per-shot foreground sets, then cluster.

    `shots` is a list of (features C×H×W, aligned binary mask H×W) pairs.
    """
    from .priors import partition_support

    sets = [partition_support(f, m).foreground for f, m in shots]
    merged = np.concatenate(sets, axis=0)
    if merged.shape[0] == 0:
        raise EmptyForegroundError("no foreground descriptors across shots")
    return PrototypeSet(prototypes=kmeans_descriptors(merged, p, iters))


def fuse(f_q, protos, prior):
    """Class-aware feature: [query C | P similarity maps | fg prior | bg prior]."""
    if not isinstance(f_q, Tensor):
        f_q = Tensor(np.asarray(f_q, dtype=np.float64))
    if protos.prototypes.shape[1] != f_q.shape[0]:
        raise ShapeMismatchError(
            f"prototype dim {protos.prototypes.shape[1]} vs {f_q.shape[0]} channels"
        )
    h, w = f_q.shape[1], f_q.shape[2]
    if isinstance(prior, DualPriorMask):
        prior = prior.stacked()
    prior = np.asarray(prior, dtype=np.float64)
    if prior.shape != (2, h, w):
        raise ShapeMismatchError(f"prior {prior.shape} vs spatial {(h, w)}")
    sims = cosine_map(f_q, protos.prototypes)
    return concat_channels([f_q, sims, Tensor(prior)])

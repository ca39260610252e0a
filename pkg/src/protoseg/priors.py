"""Dual prior mask generation.

Query pixels are scored by their best cosine affinity to the support
foreground and to the support background; the two maps form a 2-channel
prior (channel 0 = foreground, channel 1 = background). Everything here
is gradient-free guidance: plain numpy arrays in, plain numpy arrays out.
"""

from dataclasses import dataclass

import numpy as np

from .errors import EmptyDescriptorSetError, EmptyForegroundError, EmptyListError, ShapeMismatchError
from .tensor import Tensor, bilinear_resize

COSINE_EPS = 1e-8


@dataclass
class PixelPartition:
    foreground: np.ndarray  # Nf×C descriptors, row-major scan order
    background: np.ndarray  # Nb×C


@dataclass
class DualPriorMask:
    foreground_prior: np.ndarray  # H×W cosines in [-1,1]
    background_prior: np.ndarray  # H×W

    def stacked(self):
        """2×H×W array, channel 0 = foreground."""
        return np.stack([self.foreground_prior, self.background_prior])


def align_mask(mask, target_h, target_w):
    """Bilinear-downsample a binary mask to feature resolution, threshold at 0.5.

    A thin object can average below 0.5 everywhere at coarse resolution;
    when the source mask has foreground but the thresholded result is
    empty, the strongest-response pixel is kept so downstream code always
    sees at least one foreground descriptor.
    """
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape == (target_h, target_w):
        return (mask >= 0.5).astype(np.float64)
    resized = bilinear_resize(Tensor(mask), target_h, target_w).data
    out = (resized >= 0.5).astype(np.float64)
    if not out.any() and (mask >= 0.5).any():
        out.reshape(-1)[int(np.argmax(resized))] = 1.0
    return out


def partition_support(f_s, m_s):
    """Split support descriptors into foreground/background sets by the mask."""
    f_s = np.asarray(f_s, dtype=np.float64)
    m_s = np.asarray(m_s)
    if f_s.shape[1:] != m_s.shape:
        raise ShapeMismatchError(f"features {f_s.shape} vs mask {m_s.shape}")
    flat = f_s.reshape(f_s.shape[0], -1).T  # N×C, row-major
    fg_sel = m_s.reshape(-1) >= 0.5
    if not fg_sel.any():
        raise EmptyForegroundError("support mask has no foreground pixels")
    return PixelPartition(foreground=flat[fg_sel], background=flat[~fg_sel])


def cosine(a, b, eps=COSINE_EPS):
    """Cosine similarity with epsilon-guarded norms, clamped to [-1,1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"cosine: {a.shape} vs {b.shape}")
    denom = max(np.linalg.norm(a), eps) * max(np.linalg.norm(b), eps)
    return float(np.clip(a @ b / denom, -1.0, 1.0))


def prior_map(f_q, descriptors, eps=COSINE_EPS):
    """Per-pixel max cosine between query features and a descriptor set."""
    f_q = np.asarray(f_q, dtype=np.float64)
    descriptors = np.asarray(descriptors, dtype=np.float64)
    if descriptors.size == 0:
        raise EmptyDescriptorSetError("prior_map needs at least one descriptor")
    c = f_q.shape[0]
    if descriptors.ndim != 2 or descriptors.shape[1] != c:
        raise ShapeMismatchError(f"descriptors {descriptors.shape} vs {c} channels")
    q = f_q.reshape(c, -1).T
    qn = np.maximum(np.linalg.norm(q, axis=1), eps)
    dn = np.maximum(np.linalg.norm(descriptors, axis=1), eps)
    sims = np.clip((q @ descriptors.T) / (qn[:, None] * dn[None, :]), -1.0, 1.0)
    return sims.max(axis=1).reshape(f_q.shape[1:])


def dual_prior(f_q, f_s, m_s):
    """Foreground and background prior maps for one support shot.

    An all-foreground support mask leaves no background evidence; the
    background prior then falls back to the cosine floor of -1.
    """
    f_q = np.asarray(f_q, dtype=np.float64)
    f_s = np.asarray(f_s, dtype=np.float64)
    if f_q.shape[0] != f_s.shape[0]:
        raise ShapeMismatchError(f"channel mismatch: query {f_q.shape} vs support {f_s.shape}")
    part = partition_support(f_s, m_s)
    fg = prior_map(f_q, part.foreground)
    if part.background.shape[0] == 0:
        bg = np.full(f_q.shape[1:], -1.0)
    else:
        bg = prior_map(f_q, part.background)
    return DualPriorMask(foreground_prior=fg, background_prior=bg)


def kshot_average(masks):
    """Channelwise mean of per-shot dual priors."""
    if not masks:
        raise EmptyListError("kshot_average needs at least one mask")
    shapes = {m.foreground_prior.shape for m in masks}
    if len(shapes) != 1:
        raise ShapeMismatchError(f"kshot_average: mixed shapes {shapes}")
    fg = np.mean([m.foreground_prior for m in masks], axis=0)
    bg = np.mean([m.background_prior for m in masks], axis=0)
    return DualPriorMask(foreground_prior=fg, background_prior=bg)

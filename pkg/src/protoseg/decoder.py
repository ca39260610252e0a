"""Progressive coarse-to-fine decoding with foreground erasing.

Each level owns a residual head: two residual blocks (3×3 conv → relu →
3×3 conv, skip) followed by a 1×1 projection to the 2-channel
foreground/background logits. The coarse result of level t-1 is
upsampled, its softmax-foreground is reversed into an erasing weight,
the erased class-aware features go through the level-t head, and the two
logit maps are summed. Channel 0 is foreground everywhere.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError, WrongLevelCountError
from .tensor import (
    Tensor,
    bilinear_resize,
    conv2d,
    expand_channels,
    init_uniform,
    relu,
    softmax_channel,
    take_channel,
)

DEFAULT_HEAD_WIDTH = 64
FOREGROUND = 0
BACKGROUND = 1


@dataclass
class HeadParams:
    """Parameters of one per-level residual head."""

    w1a: Tensor
    b1a: Tensor
    w1b: Tensor
    b1b: Tensor
    w2a: Tensor
    b2a: Tensor
    w2b: Tensor
    b2b: Tensor
    w_out: Tensor
    b_out: Tensor

    def named(self, prefix=""):
        return {prefix + f.name: getattr(self, f.name) for f in self.__dataclass_fields__.values()}


def init_head(rng, in_channels, width=DEFAULT_HEAD_WIDTH):
    def conv_init(c_out, c_in, k):
        fan_in = c_in * k * k
        return (
            init_uniform(rng, (c_out, c_in, k, k), fan_in),
            init_uniform(rng, (c_out,), fan_in),
        )

    w1a, b1a = conv_init(width, in_channels, 3)
    w1b, b1b = conv_init(in_channels, width, 3)
    w2a, b2a = conv_init(width, in_channels, 3)
    w2b, b2b = conv_init(in_channels, width, 3)
    w_out, b_out = conv_init(2, in_channels, 1)
    return HeadParams(w1a, b1a, w1b, b1b, w2a, b2a, w2b, b2b, w_out, b_out)


def _residual_block(x, w_a, b_a, w_b, b_b):
    return x + conv2d(relu(conv2d(x, w_a, b_a, padding=1)), w_b, b_b, padding=1)


def coarse_head(x, params):
    """Residual head producing 2×H×W parsing logits; spatial size preserved."""
    if not isinstance(x, Tensor):
        x = Tensor(np.asarray(x, dtype=np.float64))
    h = _residual_block(x, params.w1a, params.b1a, params.w1b, params.b1b)
    h = _residual_block(h, params.w2a, params.b2a, params.w2b, params.b2b)
    return conv2d(h, params.w_out, params.b_out)


def negative_weight(r):
    """Reverse the softmax-foreground of parsing logits: values strictly in (0,1).

    With two channels, 1 - softmax_fg is exactly the background softmax;
    reading that channel directly avoids the cancellation that would
    round the weight to 0 under saturated foreground logits.
    """
    return take_channel(softmax_channel(r), BACKGROUND)


def erase_and_activate(x, e, params):
    """Multiply every feature channel by the erasing weight, then run the head."""
    if e.shape != x.shape[1:]:
        raise ShapeMismatchError(f"erase weight {e.shape} vs features {x.shape}")
    return coarse_head(x * expand_channels(e, x.shape[0]), params)


def merge(r_i, r_ii):
    """Channelwise sum of coarse and detail logits."""
    return r_i + r_ii


def predict(r):
    """Binary mask from logits: foreground iff its score strictly exceeds background."""
    data = r.data if isinstance(r, Tensor) else np.asarray(r)
    return (data[FOREGROUND] > data[BACKGROUND]).astype(np.float64)


def decode_pyramid(features, params, erase=True):
    """Run the hierarchy deepest-first; returns the per-level merged logits.

    `features` and `params` are parallel lists ordered deepest (coarsest)
    first. With `erase=False` the erasing weight is forced to all-ones,
    which reduces to a plain top-down refinement (the no-erase ablation).
    """
    if len(features) != len(params) or not features:
        raise WrongLevelCountError(f"{len(features)} feature levels vs {len(params)} heads")
    out = [coarse_head(features[0], params[0])]
    for x, head in zip(features[1:], params[1:]):
        up = bilinear_resize(out[-1], x.shape[1], x.shape[2])
        if erase:
            e = negative_weight(up)
        else:
            e = Tensor(np.ones(x.shape[1:]))
        out.append(merge(up, erase_and_activate(x, e, head)))
    return out

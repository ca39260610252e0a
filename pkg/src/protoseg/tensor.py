"""Dense float64 tensors with reverse-mode gradient accumulation.

Every tensor wraps a numpy array. Operations build an implicit tape
(parents + backward closures); calling `backward()` on a scalar loss
topologically sorts the tape and accumulates gradients into `.grad` of
every tensor that tracks them. No broadcasting beyond scalar-with-tensor;
the one structured exception is `expand_channels`, which lifts an H×W map
to C×H×W with a sum-reducing backward.
"""

import numpy as np

from . import kernels
from .errors import NonFiniteError, NotScalarError, ShapeMismatchError


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def detach(self):
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def check_finite(self):
        if not np.all(np.isfinite(self.data)):
            raise NonFiniteError("tensor contains NaN or Inf")
        return self

    def backward(self):
        if self.data.size != 1:
            raise NotScalarError(f"backward() needs a scalar, got shape {self.data.shape}")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node.grad = g if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not _tracks(parent):
                    continue
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg

    # -- arithmetic sugar -------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __neg__(self):
        return neg(self)

    def sum(self):
        return tsum(self)

    def mean(self):
        return tmean(self)


def _tracks(t):
    return t.requires_grad or t._parents


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_same_shape(a, b, op):
    if a.data.shape != b.data.shape:
        raise ShapeMismatchError(f"{op}: {a.data.shape} vs {b.data.shape}")


def _is_scalar(x):
    return np.isscalar(x) or (isinstance(x, np.ndarray) and x.ndim == 0)


def _binary(a, b, op):
    """Normalize operands: tensor-with-tensor (same shape) or tensor-with-scalar."""
    if _is_scalar(b):
        b = Tensor(np.full_like(as_tensor(a).data, float(b)))
    elif _is_scalar(a):
        a = Tensor(np.full_like(as_tensor(b).data, float(a)))
    a, b = as_tensor(a), as_tensor(b)
    _check_same_shape(a, b, op)
    return a, b


def add(a, b):
    a, b = _binary(a, b, "add")
    return Tensor(a.data + b.data, _parents=(a, b), _backward=lambda g: (g, g))


def sub(a, b):
    a, b = _binary(a, b, "sub")
    return Tensor(a.data - b.data, _parents=(a, b), _backward=lambda g: (g, -g))


def mul(a, b):
    a, b = _binary(a, b, "mul")
    return Tensor(a.data * b.data, _parents=(a, b), _backward=lambda g: (g * b.data, g * a.data))


def neg(a):
    a = as_tensor(a)
    return Tensor(-a.data, _parents=(a,), _backward=lambda g: (-g,))


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0
    return Tensor(a.data * mask, _parents=(a,), _backward=lambda g: (g * mask,))


def tsum(a):
    a = as_tensor(a)
    return Tensor(a.data.sum(), _parents=(a,), _backward=lambda g: (np.full_like(a.data, float(g)),))


def tmean(a):
    a = as_tensor(a)
    n = a.data.size
    return Tensor(a.data.mean(), _parents=(a,), _backward=lambda g: (np.full_like(a.data, float(g) / n),))


def expand_channels(e, channels):
    """Lift an H×W map to channels×H×W (shared across channels)."""
    e = as_tensor(e)
    if e.data.ndim != 2:
        raise ShapeMismatchError(f"expand_channels expects H×W, got {e.data.shape}")
    out = np.broadcast_to(e.data, (channels,) + e.data.shape).copy()
    return Tensor(out, _parents=(e,), _backward=lambda g: (g.sum(axis=0),))


def concat_channels(parts):
    """Concatenate C_i×H×W tensors along the channel axis."""
    parts = [as_tensor(p) for p in parts]
    spatial = {p.data.shape[1:] for p in parts}
    if len(spatial) != 1:
        raise ShapeMismatchError(f"concat_channels: mismatched spatial sizes {spatial}")
    sizes = [p.data.shape[0] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=0))

    return Tensor(np.concatenate([p.data for p in parts], axis=0), _parents=tuple(parts), _backward=backward)


def take_channel(x, index):
    """Select one H×W channel of a K×H×W tensor."""
    x = as_tensor(x)
    if x.data.ndim != 3:
        raise ShapeMismatchError(f"take_channel expects K×H×W, got {x.data.shape}")

    def backward(g):
        full = np.zeros_like(x.data)
        full[index] = g
        return (full,)

    return Tensor(x.data[index].copy(), _parents=(x,), _backward=backward)


def conv2d(x, weight, bias=None, stride=1, padding=0):
    """2-D cross-correlation over a C×H×W tensor, zero padding."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.data.ndim != 3 or weight.data.ndim != 4:
        raise ShapeMismatchError("conv2d expects C×H×W input and Cout×Cin×kh×kw weight")
    if weight.data.shape[1] != x.data.shape[0]:
        raise ShapeMismatchError(
            f"conv2d: input has {x.data.shape[0]} channels, weight expects {weight.data.shape[1]}"
        )
    if bias is not None:
        bias = as_tensor(bias)
        if bias.data.shape != (weight.data.shape[0],):
            raise ShapeMismatchError(f"conv2d: bias shape {bias.data.shape}")
    y = kernels.conv2d_forward(x.data, weight.data, None if bias is None else bias.data, stride, padding)
    if y.shape[1] < 1 or y.shape[2] < 1:
        raise ShapeMismatchError(f"conv2d: empty output for input {x.data.shape}")
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        gx = kernels.conv2d_backward_input(g, weight.data, x.data.shape, stride, padding)
        gw = kernels.conv2d_backward_weight(g, x.data, weight.data.shape, stride, padding)
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(1, 2))

    return Tensor(y, _parents=parents, _backward=backward)


def _resize_matrix(n_in, n_out):
    """Dense 1-D interpolation matrix, align-corners-false with edge clamping."""
    m = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for o in range(n_out):
        src = (o + 0.5) * scale - 0.5
        i0 = int(np.floor(src))
        t = src - i0
        lo = min(max(i0, 0), n_in - 1)
        hi = min(max(i0 + 1, 0), n_in - 1)
        m[o, lo] += 1.0 - t
        m[o, hi] += t
    return m


def bilinear_resize(x, target_h, target_w):
    """Bilinear interpolation of a C×H×W (or H×W) tensor; identity when sizes match."""
    x = as_tensor(x)
    squeeze = x.data.ndim == 2
    data = x.data[None] if squeeze else x.data
    if data.ndim != 3:
        raise ShapeMismatchError(f"bilinear_resize expects C×H×W or H×W, got {x.data.shape}")
    if target_h < 1 or target_w < 1:
        raise ShapeMismatchError("bilinear_resize: target sizes must be >= 1")
    c, h, w = data.shape
    if (h, w) == (target_h, target_w):
        out = data.copy()

        def backward_id(g):
            return ((g[0] if squeeze else g).copy(),)

        return Tensor(out[0] if squeeze else out, _parents=(x,), _backward=backward_id)
    ay = _resize_matrix(h, target_h)
    ax = _resize_matrix(w, target_w)
    out = np.einsum("oi,cij,pj->cop", ay, data, ax, optimize=True)

    def backward(g):
        g3 = g[None] if squeeze else g
        gx = np.einsum("oi,cop,pj->cij", ay, g3, ax, optimize=True)
        return ((gx[0] if squeeze else gx),)

    return Tensor(out[0] if squeeze else out, _parents=(x,), _backward=backward)


def softmax_channel(x):
    """Channel softmax of a K×H×W tensor, computed with max subtraction."""
    x = as_tensor(x)
    if x.data.ndim != 3 or x.data.shape[0] < 2:
        raise ShapeMismatchError(f"softmax_channel expects K×H×W with K>=2, got {x.data.shape}")
    z = x.data - x.data.max(axis=0, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=0, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=0, keepdims=True)),)

    return Tensor(s, _parents=(x,), _backward=backward)


def cross_entropy_2class(logits, target):
    """Mean pixel cross-entropy of 2×H×W logits against a binary H×W target.

    Target convention: 1 selects channel 0 (foreground), 0 selects channel 1.
    """
    logits = as_tensor(logits)
    target = np.asarray(target.data if isinstance(target, Tensor) else target)
    if logits.data.ndim != 3 or logits.data.shape[0] != 2:
        raise ShapeMismatchError(f"cross_entropy_2class expects 2×H×W logits, got {logits.data.shape}")
    if target.shape != logits.data.shape[1:]:
        raise ShapeMismatchError(f"target {target.shape} vs logits {logits.data.shape}")
    fg = target >= 0.5
    z = logits.data - logits.data.max(axis=0, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=0))
    picked = np.where(fg, z[0], z[1])
    n = target.size
    loss = (lse - picked).sum() / n

    def backward(g):
        soft = np.exp(z - lse[None])
        onehot = np.stack([fg, ~fg]).astype(np.float64)
        return ((soft - onehot) * (float(g) / n),)

    return Tensor(loss, _parents=(logits,), _backward=backward)


def cosine_map(x, descriptors, eps=1e-8):
    """Cosine similarity of every pixel of C×H×W `x` against P fixed descriptors.

    Returns P×H×W similarities in [-1, 1]; differentiable w.r.t. `x` only
    (descriptors are treated as constants).
    """
    x = as_tensor(x)
    protos = np.asarray(descriptors, dtype=np.float64)
    if x.data.ndim != 3 or protos.ndim != 2 or protos.shape[1] != x.data.shape[0]:
        raise ShapeMismatchError(f"cosine_map: x {x.data.shape} vs descriptors {protos.shape}")
    c, h, w = x.data.shape
    q = x.data.reshape(c, -1).T
    qn = np.maximum(np.linalg.norm(q, axis=1), eps)
    pn = np.maximum(np.linalg.norm(protos, axis=1), eps)
    raw = (q @ protos.T) / (qn[:, None] * pn[None, :])
    sims = np.clip(raw, -1.0, 1.0)

    def backward(g):
        gn = g.reshape(g.shape[0], -1).T  # N×P
        a = gn / (qn[:, None] * pn[None, :])
        term1 = a @ protos
        active = (np.linalg.norm(q, axis=1) > eps).astype(np.float64)
        coeff = (gn * raw).sum(axis=1) / (qn * qn) * active
        gq = term1 - coeff[:, None] * q
        return (gq.T.reshape(c, h, w),)

    return Tensor(sims.T.reshape(-1, h, w), _parents=(x,), _backward=backward)


def init_uniform(rng, shape, fan_in, requires_grad=True):
    """Uniform init in [-s, s] with s = 1/sqrt(fan_in)."""
    s = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-s, s, size=shape), requires_grad=requires_grad)

"""Primitive catalog with hand-written reverse-mode rules.

Every public op takes Tensors (or array-likes, which become constants),
returns a Tensor, and records its backward closure when a parent requires
grad. Sequence tensors are laid out as (batch, time, channels); masks are
(batch, time) arrays of 0/1.
"""

import contextlib
import math

import numpy as np

from ..errors import InvalidShapeError, NumericDomainError
from .tensor import Tensor, make_result

MASK_FILL = -1e9

# When a list, non-smooth primitives append their branch pattern to it so a
# finite-difference check can tell whether two evaluations took the same
# branches (see kink_trace).
_KINKS = None


@contextlib.contextmanager
def kink_trace():
    """Collect the branch pattern of every relu/clip/maximum/minimum call."""
    global _KINKS
    prev = _KINKS
    _KINKS = []
    try:
        yield _KINKS
    finally:
        _KINKS = prev


def _record(pattern):
    if _KINKS is not None:
        _KINKS.append(np.packbits(pattern).tobytes())


def as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x)
    if like is not None:
        arr = arr.astype(like.dtype, copy=False)
    elif arr.dtype.kind != "f":
        arr = arr.astype(np.float32)
    return Tensor(arr)


def _pair(a, b):
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    b = as_tensor(b)
    return as_tensor(a, like=b), b


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _broadcast_shape(op, *shapes):
    try:
        return np.broadcast_shapes(*shapes)
    except ValueError:
        raise InvalidShapeError(op, f"cannot broadcast shapes {list(shapes)}") from None


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a, b):
    a, b = _pair(a, b)
    _broadcast_shape("add", a.shape, b.shape)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_result(a.data + b.data, (a, b), bw)


def sub(a, b):
    a, b = _pair(a, b)
    _broadcast_shape("sub", a.shape, b.shape)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return make_result(a.data - b.data, (a, b), bw)


def mul(a, b):
    a, b = _pair(a, b)
    _broadcast_shape("mul", a.shape, b.shape)

    def bw(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_result(a.data * b.data, (a, b), bw)


def div(a, b):
    a, b = _pair(a, b)
    _broadcast_shape("div", a.shape, b.shape)
    out = a.data / b.data

    def bw(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_result(out, (a, b), bw)


def neg(x):
    x = as_tensor(x)
    return make_result(-x.data, (x,), lambda g: (-g,))


def power(x, p):
    """x ** p for a constant exponent p."""
    x = as_tensor(x)
    out = x.data ** p

    def bw(g):
        return (g * p * x.data ** (p - 1),)

    return make_result(out, (x,), bw)


def exp(x):
    x = as_tensor(x)
    out = np.exp(x.data)
    return make_result(out, (x,), lambda g: (g * out,))


def log(x):
    x = as_tensor(x)
    if np.any(x.data <= 0):
        raise NumericDomainError("log", "input must be positive")
    return make_result(np.log(x.data), (x,), lambda g: (g / x.data,))


def relu(x):
    x = as_tensor(x)
    out = np.maximum(x.data, 0)
    _record(out > 0)
    return make_result(out, (x,), lambda g: (g * (out > 0),))


def sigmoid(x):
    x = as_tensor(x)
    z = np.exp(-np.abs(x.data))
    out = np.where(x.data >= 0, 1.0 / (1.0 + z), z / (1.0 + z)).astype(x.dtype)
    return make_result(out, (x,), lambda g: (g * out * (1.0 - out),))


def clip(x, lo, hi):
    x = as_tensor(x)
    inside = (x.data >= lo) & (x.data <= hi)
    _record(np.stack([x.data >= lo, x.data <= hi]))
    out = np.clip(x.data, lo, hi)
    return make_result(out, (x,), lambda g: (g * inside,))


def maximum(a, b):
    a, b = _pair(a, b)
    _broadcast_shape("maximum", a.shape, b.shape)
    take_a = a.data >= b.data
    _record(take_a)

    def bw(g):
        return _unbroadcast(g * take_a, a.shape), _unbroadcast(g * ~take_a, b.shape)

    return make_result(np.maximum(a.data, b.data), (a, b), bw)


def minimum(a, b):
    a, b = _pair(a, b)
    _broadcast_shape("minimum", a.shape, b.shape)
    take_a = a.data <= b.data
    _record(take_a)

    def bw(g):
        return _unbroadcast(g * take_a, a.shape), _unbroadcast(g * ~take_a, b.shape)

    return make_result(np.minimum(a.data, b.data), (a, b), bw)


# ---------------------------------------------------------------------------
# reductions and shape manipulation
# ---------------------------------------------------------------------------

def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum(x, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)
    axes = _norm_axes(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return make_result(np.asarray(out, dtype=x.dtype), (x,), bw)


def mean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    axes = _norm_axes(axis, x.ndim)
    n = 1
    for a in axes:
        n *= x.shape[a]
    return mul(sum(x, axis=axes, keepdims=keepdims), 1.0 / max(n, 1))


def reshape(x, shape):
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise InvalidShapeError("reshape", f"cannot reshape {x.shape} into {tuple(shape)}") from None
    return make_result(out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes=None):
    x = as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    if sorted(a % x.ndim for a in axes) != list(range(x.ndim)):
        raise InvalidShapeError("transpose", f"axes {tuple(axes)} invalid for rank {x.ndim}")
    inv = np.argsort([a % x.ndim for a in axes])
    return make_result(x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),))


def broadcast_to(x, shape):
    x = as_tensor(x)
    _broadcast_shape("broadcast_to", x.shape, tuple(shape))
    out = np.broadcast_to(x.data, shape).copy()
    return make_result(out, (x,), lambda g: (_unbroadcast(g, x.shape),))


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise InvalidShapeError("concat", "no inputs")
    ref = tensors[0]
    ax = axis % ref.ndim
    for t in tensors[1:]:
        if t.ndim != ref.ndim or any(
            s != r for i, (s, r) in enumerate(zip(t.shape, ref.shape)) if i != ax
        ):
            raise InvalidShapeError("concat", f"shapes {[t.shape for t in tensors]} differ off axis {ax}")
    sizes = [t.shape[ax] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=ax))

    return make_result(np.concatenate([t.data for t in tensors], axis=ax), tensors, bw)


def _is_basic_index(idx):
    if not isinstance(idx, tuple):
        idx = (idx,)
    return all(isinstance(i, (slice, int, type(None), type(Ellipsis))) for i in idx)


def getitem(x, idx):
    x = as_tensor(x)
    out = x.data[idx]
    basic = _is_basic_index(idx)

    def bw(g):
        gx = np.zeros_like(x.data)
        if basic:
            gx[idx] += g
        else:
            np.add.at(gx, idx, g)
        return (gx,)

    return make_result(np.array(out, copy=True), (x,), bw)


def apply_mask(x, mask):
    """Zero the padded time steps of a (B, T, ...) tensor; mask is (B, T)."""
    x = as_tensor(x)
    m = np.asarray(mask, dtype=x.dtype)
    if m.shape != x.shape[:2]:
        raise InvalidShapeError("apply_mask", f"mask {m.shape} does not match sequence {x.shape[:2]}")
    m = m.reshape(m.shape + (1,) * (x.ndim - 2))
    return make_result(x.data * m, (x,), lambda g: (g * m,))


def masked_mean(x, mask, axis=1):
    """Mean of x over ``axis`` counting only positions where mask == 1."""
    x = as_tensor(x)
    m = np.asarray(mask, dtype=x.dtype)
    ax = axis % x.ndim
    if m.shape != x.shape[: ax + 1]:
        raise InvalidShapeError("masked_mean", f"mask {m.shape} does not match leading dims of {x.shape}")
    m = m.reshape(m.shape + (1,) * (x.ndim - ax - 1))
    count = np.maximum(m.sum(axis=ax, keepdims=True), 1.0)
    out = (x.data * m).sum(axis=ax) / np.squeeze(count, axis=ax)
    w = m / count
    return make_result(out.astype(x.dtype), (x,), lambda g: (np.expand_dims(g, ax) * w,))


# ---------------------------------------------------------------------------
# linear algebra and normalization
# ---------------------------------------------------------------------------

def matmul(a, b):
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise InvalidShapeError("matmul", f"inner dims mismatch: {a.shape} @ {b.shape}")
    _broadcast_shape("matmul", a.shape[:-2], b.shape[:-2])
    out = a.data @ b.data

    def bw(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        if b.requires_grad:
            if b.ndim == 2:
                gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb

    return make_result(out, (a, b), bw)


def linear(x, weight, bias=None):
    """x @ weight + bias over the last axis; weight is (in, out)."""
    x = as_tensor(x)
    if weight.ndim != 2 or x.shape[-1] != weight.shape[0]:
        raise InvalidShapeError("linear", f"input width {x.shape[-1]} vs weight {weight.shape}")
    x2 = x.data.reshape(-1, x.shape[-1])
    out = x2 @ weight.data
    if bias is not None:
        out = out + bias.data
    out = out.reshape(x.shape[:-1] + (weight.shape[1],))
    parents = (x, weight) if bias is None else (x, weight, bias)

    def bw(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = (g2 @ weight.data.T).reshape(x.shape) if x.requires_grad else None
        gw = x2.T @ g2 if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return make_result(out, parents, bw)


def softmax(x, axis=-1, mask=None):
    """Softmax with an optional additive 0/1 mask (masked entries get -1e9)."""
    x = as_tensor(x)
    z = x.data
    if mask is not None:
        m = np.asarray(mask, dtype=x.dtype)
        _broadcast_shape("softmax", m.shape, x.shape)
        z = z + (1.0 - m) * MASK_FILL
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make_result(out, (x,), bw)


def layernorm(x, gamma=None, beta=None, eps=1e-5):
    """Normalize over the last axis, then apply the optional affine."""
    x = as_tensor(x)
    n = x.shape[-1]
    for name, p in (("gamma", gamma), ("beta", beta)):
        if p is not None and p.shape != (n,):
            raise InvalidShapeError("layernorm", f"{name} shape {p.shape} != ({n},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    out = xhat
    if gamma is not None:
        out = out * gamma.data
    if beta is not None:
        out = out + beta.data
    parents = [x]
    if gamma is not None:
        parents.append(gamma)
    if beta is not None:
        parents.append(beta)

    def bw(g):
        lead = tuple(range(g.ndim - 1))
        gxhat = g * gamma.data if gamma is not None else g
        gx = rstd * (
            gxhat
            - gxhat.mean(axis=-1, keepdims=True)
            - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True)
        )
        grads = [gx]
        if gamma is not None:
            grads.append((g * xhat).sum(axis=lead))
        if beta is not None:
            grads.append(g.sum(axis=lead))
        return tuple(grads)

    return make_result(out.astype(x.dtype, copy=False), tuple(parents), bw)


def attention_probs(q, k, key_mask=None):
    """Masked scaled dot-product attention weights, as a plain array.

    q is (..., Tq, d), k is (..., Tk, d), key_mask broadcasts to (..., 1, Tk).
    Masked keys get exactly zero weight; a query row with no valid key gets
    an all-zero row.
    """
    scale = 1.0 / math.sqrt(q.shape[-1])
    s = (q @ np.swapaxes(k, -1, -2)) * scale
    if key_mask is None:
        s = s - s.max(axis=-1, keepdims=True)
        e = np.exp(s)
        return e / e.sum(axis=-1, keepdims=True)
    m = np.asarray(key_mask, dtype=q.dtype)
    s = s + (1.0 - m) * MASK_FILL
    s = s - s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    p = e / e.sum(axis=-1, keepdims=True)
    return p * m


def attention(q, k, v, key_mask=None):
    """softmax(q k^T / sqrt(d) + additive mask) v with masked keys zeroed."""
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise InvalidShapeError("attention", f"q {q.shape}, k {k.shape}, v {v.shape} incompatible")
    if key_mask is not None:
        km = np.asarray(key_mask)
        _broadcast_shape("attention", km.shape, q.shape[:-1] + (k.shape[-2],))
    scale = 1.0 / math.sqrt(q.shape[-1])
    p = attention_probs(q.data, k.data, key_mask)
    out = p @ v.data

    def bw(g):
        gv = _unbroadcast(np.swapaxes(p, -1, -2) @ g, v.shape) if v.requires_grad else None
        gp = g @ np.swapaxes(v.data, -1, -2)
        gs = p * (gp - (gp * p).sum(axis=-1, keepdims=True))
        gq = _unbroadcast((gs @ k.data) * scale, q.shape) if q.requires_grad else None
        gk = _unbroadcast((np.swapaxes(gs, -1, -2) @ q.data) * scale, k.shape) if k.requires_grad else None
        return gq, gk, gv

    return make_result(out, (q, k, v), bw)


# ---------------------------------------------------------------------------
# temporal convolutions, "same" padding, output length ceil(T / stride)
# ---------------------------------------------------------------------------

def conv_out_len(t, stride):
    return -(-t // stride)


def _pad_time(x, k):
    left = (k - 1) // 2
    right = k - 1 - left
    return np.pad(x, ((0, 0), (left, right), (0, 0))), left


def conv1d(x, weight, bias=None, stride=1):
    """Dense 1-D convolution. x (B, T, Cin), weight (K, Cin, Cout)."""
    x = as_tensor(x)
    if x.ndim != 3 or weight.ndim != 3 or x.shape[2] != weight.shape[1]:
        raise InvalidShapeError("conv1d", f"input {x.shape} vs weight {weight.shape}")
    b, t, cin = x.shape
    k, _, cout = weight.shape
    to = conv_out_len(t, stride)
    xp, left = _pad_time(x.data, k)
    span = stride * (to - 1) + 1
    cols = np.stack([xp[:, j:j + span:stride] for j in range(k)], axis=2)
    cols2 = cols.reshape(b * to, k * cin)
    w2 = weight.data.reshape(k * cin, cout)
    out = cols2 @ w2
    if bias is not None:
        out = out + bias.data
    out = out.reshape(b, to, cout)
    parents = (x, weight) if bias is None else (x, weight, bias)

    def bw(g):
        g2 = g.reshape(b * to, cout)
        gx = None
        if x.requires_grad:
            gcols = (g2 @ w2.T).reshape(b, to, k, cin)
            gxp = np.zeros_like(xp)
            for j in range(k):
                gxp[:, j:j + span:stride] += gcols[:, :, j]
            gx = gxp[:, left:left + t]
        gw = (cols2.T @ g2).reshape(weight.shape) if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return make_result(out, parents, bw)


def depthwise_conv1d(x, weight, bias=None, stride=1):
    """Per-channel 1-D convolution. x (B, T, C), weight (K, C)."""
    x = as_tensor(x)
    if x.ndim != 3 or weight.ndim != 2 or x.shape[2] != weight.shape[1]:
        raise InvalidShapeError("depthwise_conv1d", f"input {x.shape} vs weight {weight.shape}")
    b, t, c = x.shape
    k = weight.shape[0]
    to = conv_out_len(t, stride)
    xp, left = _pad_time(x.data, k)
    span = stride * (to - 1) + 1
    taps = [xp[:, j:j + span:stride] for j in range(k)]
    out = taps[0] * weight.data[0]
    for j in range(1, k):
        out = out + taps[j] * weight.data[j]
    if bias is not None:
        out = out + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def bw(g):
        gx = None
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for j in range(k):
                gxp[:, j:j + span:stride] += g * weight.data[j]
            gx = gxp[:, left:left + t]
        gw = None
        if weight.requires_grad:
            gw = np.stack([(g * taps[j]).sum(axis=(0, 1)) for j in range(k)])
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 1))

    return make_result(out, parents, bw)


def downsample_mask(mask, stride):
    """Mask after a stride-``stride`` same-padded conv: keep every stride-th step."""
    mask = np.asarray(mask)
    return mask[:, ::stride].copy()


# ---------------------------------------------------------------------------
# generic dispatch
# ---------------------------------------------------------------------------

PRIMITIVES = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "neg": neg,
    "power": power,
    "exp": exp,
    "log": log,
    "relu": relu,
    "sigmoid": sigmoid,
    "clip": clip,
    "maximum": maximum,
    "minimum": minimum,
    "sum": sum,
    "mean": mean,
    "reshape": reshape,
    "transpose": transpose,
    "broadcast_to": broadcast_to,
    "concat": lambda *ts, axis=-1: concat(ts, axis=axis),
    "getitem": getitem,
    "apply_mask": apply_mask,
    "masked_mean": masked_mean,
    "matmul": matmul,
    "linear": linear,
    "softmax": softmax,
    "layernorm": layernorm,
    "attention": attention,
    "conv1d": conv1d,
    "depthwise_conv1d": depthwise_conv1d,
}

_MASK_ATTRS = ("mask", "key_mask")


def eval_primitive(op, inputs, attrs=None):
    """Run primitive ``op`` on ``inputs`` with keyword ``attrs``.

    Unlike calling the op function directly, this validates that every input
    is finite and that mask attributes contain only 0/1.
    """
    attrs = dict(attrs or {})
    try:
        fn = PRIMITIVES[op]
    except KeyError:
        raise KeyError(f"unknown primitive {op!r}; known: {sorted(PRIMITIVES)}") from None
    inputs = [as_tensor(t) if t is not None else None for t in inputs]
    for t in inputs:
        if t is not None and not np.all(np.isfinite(t.data)):
            raise NumericDomainError(op)
    for key in _MASK_ATTRS:
        if attrs.get(key) is not None:
            m = np.asarray(attrs[key])
            if not np.all((m == 0) | (m == 1)):
                raise InvalidShapeError(op, f"{key} must contain only 0/1")
    return fn(*inputs, **attrs)

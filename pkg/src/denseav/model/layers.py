"""Parameterized building blocks over the numerics primitives.

Each block has an ``init_*`` function that registers its parameters under a
name prefix and an apply function that looks them up by the same prefix, so
a block reused with the same prefix shares one parameter set.
"""

import numpy as np

from ..numerics import ops
from ..numerics.params import fan_in_uniform, trunc_normal


def init_linear(store, prefix, d_in, d_out, rng, bias=True):
    store.add(f"{prefix}.weight", trunc_normal(rng, (d_in, d_out)))
    if bias:
        store.add(f"{prefix}.bias", np.zeros(d_out))


def linear(store, prefix, x):
    return ops.linear(x, store[f"{prefix}.weight"], store.get(f"{prefix}.bias"))


def init_conv(store, prefix, c_in, c_out, kernel, rng):
    fan_in = c_in * kernel
    store.add(f"{prefix}.weight", fan_in_uniform(rng, (kernel, c_in, c_out), fan_in))
    store.add(f"{prefix}.bias", fan_in_uniform(rng, (c_out,), fan_in))


def conv(store, prefix, x, mask, stride=1):
    """Masked dense conv: zero padded steps on the way in and out."""
    out = ops.conv1d(ops.apply_mask(x, mask), store[f"{prefix}.weight"], store[f"{prefix}.bias"], stride=stride)
    return ops.apply_mask(out, ops.downsample_mask(mask, stride))


def init_dwconv(store, prefix, channels, kernel, rng):
    store.add(f"{prefix}.weight", fan_in_uniform(rng, (kernel, channels), kernel))
    store.add(f"{prefix}.bias", np.zeros(channels))


def dwconv(store, prefix, x, mask, stride=1):
    out = ops.depthwise_conv1d(ops.apply_mask(x, mask), store[f"{prefix}.weight"], store[f"{prefix}.bias"], stride=stride)
    return ops.apply_mask(out, ops.downsample_mask(mask, stride))


def init_layernorm(store, prefix, dim):
    store.add(f"{prefix}.gamma", np.ones(dim))
    store.add(f"{prefix}.beta", np.zeros(dim))


def layernorm(store, prefix, x):
    return ops.layernorm(x, store[f"{prefix}.gamma"], store[f"{prefix}.beta"])


def init_attention(store, prefix, dim, rng):
    for part in ("query", "key", "value", "out"):
        init_linear(store, f"{prefix}.{part}", dim, dim, rng)


def _split_heads(x, heads):
    n, t, d = x.shape
    return ops.transpose(ops.reshape(x, (n, t, heads, d // heads)), (0, 2, 1, 3))


def _merge_heads(x):
    n, h, t, dh = x.shape
    return ops.reshape(ops.transpose(x, (0, 2, 1, 3)), (n, t, h * dh))


def attention(store, prefix, query_in, kv_in, key_mask, heads):
    """Multi-head attention over (N, T, D) inputs.

    ``key_mask`` is (N, T_kv) 0/1 or None. Queries come from ``query_in``,
    keys and values from ``kv_in``; self-attention passes the same tensor.
    """
    q = _split_heads(linear(store, f"{prefix}.query", query_in), heads)
    k = _split_heads(linear(store, f"{prefix}.key", kv_in), heads)
    v = _split_heads(linear(store, f"{prefix}.value", kv_in), heads)
    km = None if key_mask is None else np.asarray(key_mask)[:, None, None, :]
    out = _merge_heads(ops.attention(q, k, v, key_mask=km))
    return linear(store, f"{prefix}.out", out)


def init_ffn(store, prefix, dim, ratio, rng):
    init_linear(store, f"{prefix}.fc1", dim, dim * ratio, rng)
    init_linear(store, f"{prefix}.fc2", dim * ratio, dim, rng)


def ffn(store, prefix, x):
    return linear(store, f"{prefix}.fc2", ops.relu(linear(store, f"{prefix}.fc1", x)))


def sinusoidal_positions(length, dim, dtype=np.float32):
    pos = np.arange(length)[:, None]
    i = np.arange(0, dim, 2)[None, :]
    angle = pos / np.power(10000.0, i / dim)
    pe = np.zeros((length, dim))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle[:, : dim // 2])
    return pe.astype(dtype)


def init_transformer_block(store, prefix, dim, ratio, rng):
    """Pre-norm self-attention block: MSA and FFN, each with a residual."""
    init_layernorm(store, f"{prefix}.ln_attn", dim)
    init_attention(store, f"{prefix}.attn", dim, rng)
    init_layernorm(store, f"{prefix}.ln_ffn", dim)
    init_ffn(store, f"{prefix}.ffn", dim, ratio, rng)


def transformer_block(store, prefix, x, key_mask, heads):
    h = layernorm(store, f"{prefix}.ln_attn", x)
    x = ops.add(x, attention(store, f"{prefix}.attn", h, h, key_mask, heads))
    return ops.add(x, ffn(store, f"{prefix}.ffn", layernorm(store, f"{prefix}.ln_ffn", x)))

"""Temporal dependency modeling over hidden classes.

Each pyramid level (T, 2D) is lifted to (T, C', H). The simultaneous branch
attends across the C' hidden classes at every step; the consecutive branch
attends across time within every hidden class. The branch updates are summed
onto the lifted features, which are then projected back to 2D and added to
the input. One parameter set serves every level.
"""

import numpy as np

from ..numerics import ops
from . import layers

PREFIX = "dependency"


def init_dependency(store, cfg, rng):
    width = 2 * cfg.embed_dim
    lifted = cfg.hidden_classes * cfg.dependency_dim
    layers.init_linear(store, f"{PREFIX}.lift", width, lifted, rng)
    layers.init_linear(store, f"{PREFIX}.merge", lifted, width, rng)
    h = cfg.dependency_dim
    if cfg.simultaneous_branch:
        layers.init_transformer_block(store, f"{PREFIX}.simultaneous", h, cfg.ffn_ratio, rng)
    if cfg.consecutive_branch:
        layers.init_transformer_block(store, f"{PREFIX}.consecutive", h, cfg.ffn_ratio, rng)


def _branch_update(store, prefix, x, key_mask, heads):
    return ops.sub(layers.transformer_block(store, prefix, x, key_mask, heads), x)


def model_dependencies(store, cfg, z, mask):
    b, t, width = z.shape
    cp, h = cfg.hidden_classes, cfg.dependency_dim
    lifted = ops.reshape(layers.linear(store, f"{PREFIX}.lift", z), (b, t, cp, h))
    y = lifted
    if cfg.simultaneous_branch:
        xs = ops.reshape(lifted, (b * t, cp, h))
        upd = _branch_update(store, f"{PREFIX}.simultaneous", xs, None, cfg.dependency_heads)
        y = ops.add(y, ops.reshape(upd, (b, t, cp, h)))
    if cfg.consecutive_branch:
        xc = ops.reshape(ops.transpose(lifted, (0, 2, 1, 3)), (b * cp, t, h))
        km = np.repeat(np.asarray(mask), cp, axis=0)
        upd = _branch_update(store, f"{PREFIX}.consecutive", xc, km, cfg.dependency_heads)
        y = ops.add(y, ops.transpose(ops.reshape(upd, (b, cp, t, h)), (0, 2, 1, 3)))
    merged = layers.linear(store, f"{PREFIX}.merge", ops.reshape(y, (b, t, cp * h)))
    return ops.apply_mask(ops.add(z, merged), mask)

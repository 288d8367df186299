"""Classification and class-aware regression heads, shared by all levels."""

import math

from ..numerics import ops
from . import layers


def init_heads(store, cfg, rng):
    width, hd, k, c = 2 * cfg.embed_dim, cfg.head_width, cfg.kernel_size, cfg.num_classes
    for head in ("cls", "reg"):
        layers.init_conv(store, f"heads.{head}.conv0", width, hd, k, rng)
        layers.init_conv(store, f"heads.{head}.conv1", hd, hd, k, rng)
    layers.init_layernorm(store, "heads.cls.ln0", hd)
    layers.init_layernorm(store, "heads.cls.ln1", hd)
    layers.init_conv(store, "heads.cls.out", hd, c, k, rng)
    # start every class at the prior probability so the focal loss is not
    # swamped by easy negatives in the first steps
    store["heads.cls.out.bias"].data[:] = -math.log((1 - cfg.cls_prior_prob) / cfg.cls_prior_prob)
    reg_out = 2 * c if cfg.class_aware_regression else 2
    layers.init_conv(store, "heads.reg.out", hd, reg_out, k, rng)


def classify(store, cfg, z, mask):
    """(B, T_l, 2D) -> class probabilities (B, T_l, C)."""
    x = z
    for i in range(2):
        x = layers.conv(store, f"heads.cls.conv{i}", x, mask)
        x = ops.relu(layers.layernorm(store, f"heads.cls.ln{i}", x))
    return ops.apply_mask(ops.sigmoid(layers.conv(store, "heads.cls.out", x, mask)), mask)


def regress(store, cfg, z, mask):
    """(B, T_l, 2D) -> non-negative distances (B, 2, C, T_l) in level steps."""
    x = z
    for i in range(2):
        x = ops.relu(layers.conv(store, f"heads.reg.conv{i}", x, mask))
    out = ops.relu(layers.conv(store, "heads.reg.out", x, mask))
    b, t, _ = out.shape
    c = cfg.num_classes
    if cfg.class_aware_regression:
        out = ops.reshape(out, (b, t, 2, c))
    else:
        out = ops.broadcast_to(ops.reshape(out, (b, t, 2, 1)), (b, t, 2, c))
    return ops.transpose(out, (0, 2, 3, 1))


def heads_forward(store, cfg, pyramid, masks):
    probs = [classify(store, cfg, z, m) for z, m in zip(pyramid, masks)]
    dists = [regress(store, cfg, z, m) for z, m in zip(pyramid, masks)]
    return probs, dists


"""Input projection, uni-modal transformer blocks and the cross-modal pyramid."""

import numpy as np

from ..numerics import ops
from . import layers


def init_encoder(store, cfg, rng):
    d, k = cfg.embed_dim, cfg.kernel_size
    for name, d_in in (("visual", cfg.visual_dim), ("audio", cfg.audio_dim)):
        layers.init_conv(store, f"proj.{name}.conv0", d_in, d, k, rng)
        layers.init_conv(store, f"proj.{name}.conv1", d, d, k, rng)
        for i in range(cfg.unimodal_layers):
            layers.init_transformer_block(store, f"unimodal.{name}.{i}", d, cfg.ffn_ratio, rng)
    for level in range(cfg.pyramid_levels):
        p = f"pyramid.{level}"
        for stream in ("va", "av"):
            layers.init_dwconv(store, f"{p}.down.{stream}", d, k, rng)
            layers.init_layernorm(store, f"{p}.down_ln.{stream}", d)
            layers.init_layernorm(store, f"{p}.ln_query.{stream}", d)
            layers.init_layernorm(store, f"{p}.ln_kv.{stream}", d)
            layers.init_layernorm(store, f"{p}.ln_ffn.{stream}", d)
            layers.init_ffn(store, f"{p}.ffn.{stream}", d, cfg.ffn_ratio, rng)
        # one W_q/W_k/W_v set serves both directions of the block
        layers.init_attention(store, f"{p}.mca", d, rng)


def project_inputs(store, cfg, audio, visual, mask):
    """Two masked conv+ReLU layers per modality into the shared D-dim space."""
    out = {}
    for name, x in (("visual", visual), ("audio", audio)):
        h = ops.relu(layers.conv(store, f"proj.{name}.conv0", x, mask))
        out[name] = ops.relu(layers.conv(store, f"proj.{name}.conv1", h, mask))
    return out["visual"], out["audio"]


def encode_unimodal(store, cfg, x, mask, name):
    """Positional embedding (optional) then L_s self-attention blocks."""
    if cfg.use_positional:
        pe = layers.sinusoidal_positions(x.shape[1], x.shape[2], dtype=x.dtype)
        x = ops.add(x, pe[None])
    x = ops.apply_mask(x, mask)
    for i in range(cfg.unimodal_layers):
        x = layers.transformer_block(store, f"unimodal.{name}.{i}", x, mask, cfg.num_heads)
        x = ops.apply_mask(x, mask)
    return x


def _cross_direction(store, cfg, prefix, stream, target, guide, mask):
    """One MCA direction: queries from ``guide``, keys and values from ``target``."""
    q = layers.layernorm(store, f"{prefix}.ln_query.{stream}", guide)
    kv = layers.layernorm(store, f"{prefix}.ln_kv.{stream}", target)
    x = ops.add(target, layers.attention(store, f"{prefix}.mca", q, kv, mask, cfg.num_heads))
    x = ops.add(x, layers.ffn(store, f"{prefix}.ffn.{stream}", layers.layernorm(store, f"{prefix}.ln_ffn.{stream}", x)))
    return ops.apply_mask(x, mask)


def cross_modal_pyramid(store, cfg, f_va, f_av, mask):
    """Return (levels, masks): level l is concat(F_Va^l, F_Av^l), width 2D.

    Block 1 keeps the input resolution; every later block first halves the
    sequence with a depth-wise stride-2 convolution.
    """
    levels, masks = [], []
    for level in range(cfg.pyramid_levels):
        p = f"pyramid.{level}"
        stride = 1 if level == 0 else 2
        va = layers.layernorm(store, f"{p}.down_ln.va", layers.dwconv(store, f"{p}.down.va", f_va, mask, stride))
        av = layers.layernorm(store, f"{p}.down_ln.av", layers.dwconv(store, f"{p}.down.av", f_av, mask, stride))
        mask = ops.downsample_mask(mask, stride)
        va, av = ops.apply_mask(va, mask), ops.apply_mask(av, mask)
        f_va = _cross_direction(store, cfg, p, "va", va, av, mask)
        f_av = _cross_direction(store, cfg, p, "av", av, va, mask)
        levels.append(ops.concat([f_va, f_av], axis=-1))
        masks.append(np.asarray(mask))
    return levels, masks

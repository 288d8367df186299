"""Gradient self-checks: every primitive and the tiny end-to-end model."""

import time

import numpy as np

from .data.schema import EventInstance
from .model.config import ModelConfig
from .model.network import forward, init_params
from .numerics import ParamStore, grad_check, ops, seeded_rng
from .training.losses import total_loss
from .training.targets import assign_targets

TOLERANCE = 1e-4


def primitive_cases():
    """name -> (initial parameter values, builder of a scalar from them).

    Every primitive of the catalog appears in at least one case.
    """
    rng = seeded_rng(7)
    x = rng.standard_normal((2, 6, 4))
    mask = np.array([[1, 1, 1, 1, 0, 0], [1, 1, 1, 1, 1, 1]], dtype=np.float64)
    proj = rng.standard_normal((2, 6, 3))
    pos = rng.uniform(0.5, 2.0, (3, 4))
    perm_w = rng.standard_normal((8, 2, 3))

    return {
        "add": ({"a": x, "b": rng.standard_normal((4,))}, lambda a, b: ops.sum(ops.mul(ops.add(a, b), ops.add(a, b)))),
        "sub": ({"a": x, "b": rng.standard_normal((6, 1))}, lambda a, b: ops.sum(ops.power(ops.sub(a, b), 2))),
        "mul": ({"a": x, "b": rng.standard_normal((1, 6, 4))}, lambda a, b: ops.sum(ops.mul(a, b))),
        "div": ({"a": x[0], "b": pos[:1].repeat(6, 0)}, lambda a, b: ops.sum(ops.div(a, b))),
        "power": ({"a": pos}, lambda a: ops.sum(ops.power(a, 3))),
        "exp": ({"a": x[0] * 0.5}, lambda a: ops.sum(ops.exp(a))),
        "log": ({"a": pos}, lambda a: ops.sum(ops.log(a))),
        "relu": ({"a": x}, lambda a: ops.sum(ops.mul(ops.relu(a), proj[..., :1]))),
        "sigmoid": ({"a": x}, lambda a: ops.sum(ops.mul(ops.sigmoid(a), x))),
        "clip": ({"a": x}, lambda a: ops.sum(ops.mul(ops.clip(a, -0.7, 0.9), x))),
        "maximum": ({"a": x, "b": rng.standard_normal((2, 6, 4))}, lambda a, b: ops.sum(ops.mul(ops.maximum(a, b), x))),
        "minimum": ({"a": x, "b": rng.standard_normal((2, 6, 4))}, lambda a, b: ops.sum(ops.mul(ops.minimum(a, b), x))),
        "mean": ({"a": x}, lambda a: ops.sum(ops.power(ops.mean(a, axis=1), 2))),
        "reshape_transpose": ({"a": x}, lambda a: ops.sum(ops.mul(ops.transpose(ops.reshape(a, (2, 3, 8)), (2, 0, 1)), perm_w))),
        "broadcast_to": ({"a": x[:, :1]}, lambda a: ops.sum(ops.mul(ops.broadcast_to(a, (2, 6, 4)), x))),
        "concat": ({"a": x, "b": proj}, lambda a, b: ops.sum(ops.power(ops.concat([a, b], axis=-1), 2))),
        "getitem": ({"a": x}, lambda a: ops.sum(ops.power(a[:, ::2, 1:], 2))),
        "apply_mask": ({"a": x}, lambda a: ops.sum(ops.mul(ops.apply_mask(a, mask), x))),
        "masked_mean": ({"a": x}, lambda a: ops.sum(ops.power(ops.masked_mean(a, mask, axis=1), 2))),
        "matmul": ({"a": x, "b": rng.standard_normal((4, 5))}, lambda a, b: ops.sum(ops.power(ops.matmul(a, b), 2))),
        "linear": ({"a": x, "b": rng.standard_normal((4, 3)), "c": rng.standard_normal(3)}, lambda a, b, c: ops.sum(ops.mul(ops.linear(a, b, c), proj))),
        "softmax": ({"a": x}, lambda a: ops.sum(ops.mul(ops.softmax(a, axis=1, mask=mask[:, :, None]), x))),
        "layernorm": ({"a": x, "b": rng.standard_normal(4), "c": rng.standard_normal(4)}, lambda a, b, c: ops.sum(ops.mul(ops.layernorm(a, b, c), x))),
        "attention": ({"a": x, "b": rng.standard_normal((2, 6, 4)), "c": rng.standard_normal((2, 6, 3))}, lambda a, b, c: ops.sum(ops.mul(ops.attention(a, b, c, key_mask=mask[:, None, :]), proj))),
        "conv1d": ({"a": x, "b": rng.standard_normal((3, 4, 5)), "c": rng.standard_normal(5)}, lambda a, b, c: ops.sum(ops.power(ops.conv1d(a, b, c, stride=2), 2))),
        "depthwise_conv1d": ({"a": x, "b": rng.standard_normal((3, 4)), "c": rng.standard_normal(4)}, lambda a, b, c: ops.sum(ops.power(ops.depthwise_conv1d(a, b, c, stride=2), 2))),
    }


def check_primitive(name, h=1e-3):
    values, build = primitive_cases()[name]
    store = ParamStore(np.float64)
    for key, val in values.items():
        store.add(key, val)
    keys = sorted(values)
    return grad_check(lambda: build(*(store[k] for k in keys)), store, h=h, max_coords_per_param=64)


def tiny_config(**overrides):
    """T=8, D=8, C=3, L_s=1, L_c=2, C'=2, H=4."""
    base = dict(
        audio_dim=5, visual_dim=6, num_classes=3, embed_dim=8, unimodal_layers=1,
        pyramid_levels=2, num_heads=2, hidden_classes=2, dependency_dim=4,
        dependency_heads=2, ffn_ratio=2, max_len=8,
    )
    base.update(overrides)
    return ModelConfig(**base)


def end_to_end_case(cfg=None, seed=0):
    """A float64 store plus a closure computing the full training loss."""
    cfg = cfg or tiny_config()
    rng = seeded_rng(seed)
    store = init_params(cfg, seed=seed, dtype=np.float64)
    # move every parameter off its initial value so biases and norms are non-trivial
    for _, p in store.items():
        p.data += 0.05 * rng.standard_normal(p.shape)
    t = cfg.max_len
    audio = rng.standard_normal((2, t, cfg.audio_dim))
    visual = rng.standard_normal((2, t, cfg.visual_dim))
    mask = np.ones((2, t))
    mask[1, t - 2:] = 0
    hop = 1.0
    events = [
        [EventInstance(0.4, 3.6, 0), EventInstance(2.2, 7.9, 1)],
        [EventInstance(1.0, 5.0, 2), EventInstance(0.2, 1.4, 0)],
    ]
    valid = [t, t - 2]
    targets = [
        assign_targets(ev, n, hop, cfg.pyramid_levels, cfg.num_classes, t_max=t)
        for ev, n in zip(events, valid)
    ]

    def fn():
        raw = forward(store, cfg, audio, visual, mask)
        loss, _ = total_loss(raw, targets)
        return loss

    return store, fn


def end_to_end_check(cfg=None, seed=0, h=1e-3, max_coords_per_param=8):
    store, fn = end_to_end_case(cfg, seed)
    return grad_check(fn, store, h=h, max_coords_per_param=max_coords_per_param, seed=seed)


def run_all(seed=0):
    """Report dict: per-primitive errors, end-to-end error, pass flag, runtime."""
    t0 = time.perf_counter()
    prims = {name: check_primitive(name).max_error for name in sorted(primitive_cases())}
    e2e, detail, skipped = end_to_end_check(seed=seed)
    worst = max(max(prims.values()), e2e)
    return {
        "primitives": prims,
        "end_to_end": e2e,
        "end_to_end_worst_params": dict(sorted(detail.items(), key=lambda kv: -kv[1])[:5]),
        "kink_skipped_coords": sum(skipped.values()),
        "max_error": worst,
        "tolerance": TOLERANCE,
        "passed": bool(worst < TOLERANCE),
        "seconds": time.perf_counter() - t0,
    }

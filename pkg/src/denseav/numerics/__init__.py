"""Minimal differentiable substrate: tensors, primitives, gradients."""

from . import ops
from .checkpoint import read_tensors, write_tensors
from .gradcheck import grad_check
from .ops import eval_primitive
from .params import ParamStore, fan_in_uniform, seeded_rng, trunc_normal
from .tensor import Tensor, backward, grad_enabled, no_grad

__all__ = [
    "ParamStore",
    "Tensor",
    "backward",
    "eval_primitive",
    "fan_in_uniform",
    "grad_check",
    "grad_enabled",
    "no_grad",
    "ops",
    "read_tensors",
    "seeded_rng",
    "trunc_normal",
    "write_tensors",
]

"""Central finite-difference check of analytic gradients."""

from collections import namedtuple

import numpy as np

from ..errors import ContractError
from . import ops
from .params import seeded_rng
from .tensor import backward, no_grad

GradCheckResult = namedtuple("GradCheckResult", "max_error detail skipped")


def _eval(fn):
    with no_grad(), ops.kink_trace() as kinks:
        value = float(fn().item())
    return value, kinks


def grad_check(fn, store, h=1e-3, max_coords_per_param=16, seed=0, names=None):
    """Max relative error between backprop and central differences.

    ``fn()`` must return a scalar Tensor computed from ``store`` parameters.
    For each parameter, up to ``max_coords_per_param`` coordinates are sampled
    and compared via |a - n| / max(|a|, |n|, 1e-8), where n combines central
    differences at h and h/2 into a fourth-order estimate.

    A coordinate whose +h or -h evaluation takes a different branch of some
    relu/clip/maximum/minimum than the unperturbed point straddles a kink,
    where central differences do not estimate the derivative; it is replaced
    by another coordinate of the same parameter and counted in ``skipped``.
    Returns GradCheckResult(max_error, detail, skipped); detail maps parameter
    name to its worst error.
    """
    if store.dtype != np.float64:
        raise ContractError("grad_check requires a float64 ParamStore")
    rng = seeded_rng(seed)
    store.zero_grad()
    out = fn()
    backward(out, store)
    analytic = {n: g.copy() for n, g in store.grads().items()}
    _, base_kinks = _eval(fn)

    detail, skipped = {}, {}
    for name in names or store.names():
        p = store[name]
        flat = p.data.reshape(-1)
        worst, used, n_skip = 0.0, 0, 0
        for c in rng.permutation(flat.size):
            if used >= max_coords_per_param:
                break
            orig = flat[c]
            values, straddles = {}, False
            for step in (h, -h, h / 2, -h / 2):
                flat[c] = orig + step
                values[step], kinks = _eval(fn)
                straddles |= kinks != base_kinks
            flat[c] = orig
            if straddles:
                n_skip += 1
                continue
            used += 1
            d_full = (values[h] - values[-h]) / (2.0 * h)
            d_half = (values[h / 2] - values[-h / 2]) / h
            # Richardson extrapolation cancels the O(h^2) truncation term
            numeric = (4.0 * d_half - d_full) / 3.0
            a = float(analytic[name].reshape(-1)[c])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
        detail[name] = worst
        if n_skip:
            skipped[name] = n_skip
    store.zero_grad()
    return GradCheckResult(max(detail.values(), default=0.0), detail, skipped)

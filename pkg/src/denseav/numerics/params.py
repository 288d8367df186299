"""Named parameter storage, initializers and the seeded generator."""

import numpy as np

from ..errors import ContractError, InvalidShapeError
from .tensor import Tensor


def seeded_rng(seed):
    """Deterministic generator: identical seeds give identical draw sequences."""
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


class ParamStore:
    """Dot-path name -> leaf Tensor, each with a same-shaped gradient buffer.

    Iteration is always in sorted-name order so optimizer state, checkpoints
    and gradient checks are reproducible.
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self._params = {}

    def add(self, name, value):
        if name in self._params:
            raise ContractError(f"parameter {name!r} already registered")
        t = Tensor(np.array(value, dtype=self.dtype), requires_grad=True, name=name)
        t.grad = np.zeros_like(t.data)
        self._params[name] = t
        return t

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __len__(self):
        return len(self._params)

    def names(self):
        return sorted(self._params)

    def items(self):
        return [(n, self._params[n]) for n in self.names()]

    def get(self, name, default=None):
        return self._params.get(name, default)

    def zero_grad(self):
        for p in self._params.values():
            p.grad = np.zeros_like(p.data)

    def grads(self):
        return {n: p.grad for n, p in self.items()}

    def num_params(self, prefix=""):
        return sum(p.size for n, p in self._params.items() if n.startswith(prefix))

    def state_dict(self):
        return {n: p.data.copy() for n, p in self.items()}

    def load_state_dict(self, state, strict=True):
        if strict:
            missing = set(self._params) - set(state)
            extra = set(state) - set(self._params)
            if missing or extra:
                raise ContractError(
                    f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}"
                )
        for name, value in state.items():
            if name not in self._params:
                continue
            p = self._params[name]
            value = np.asarray(value)
            if value.shape != p.shape:
                raise InvalidShapeError("load_state_dict", f"{name}: {value.shape} != {p.shape}")
            p.data = value.astype(self.dtype, copy=True)
            p.grad = np.zeros_like(p.data)

    def astype(self, dtype):
        """A detached copy at another precision (e.g. float64 for grad checks)."""
        other = ParamStore(dtype)
        for n, p in self.items():
            other.add(n, p.data)
        return other


def trunc_normal(rng, shape, std=0.02):
    """Normal(0, std) truncated at two standard deviations."""
    out = rng.standard_normal(shape)
    bad = np.abs(out) > 2.0
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > 2.0
    return out * std


def fan_in_uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)

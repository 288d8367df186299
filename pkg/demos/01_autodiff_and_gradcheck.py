"""
Reverse-mode gradients and finite-difference checks
===================================================

A tiny tour of the numpy autodiff substrate every model in the package is
built on, then the same check the test suite runs on the whole model.
"""

# %%
import numpy as np

from denseav.numerics import ParamStore, backward, grad_check, ops

store = ParamStore(dtype=np.float64)
store.add("w", np.array([[0.5, -1.0], [2.0, 0.25]]))
x = np.array([[1.0, 2.0], [-0.5, 0.3]])


def loss():
    h = ops.sigmoid(ops.matmul(x, store["w"]))
    return ops.sum(ops.mul(h, h))


# %%
# one backward pass fills .grad on every parameter
store.zero_grad()
value = loss()
backward(value)
print("loss", value.data, "\ngrad\n", store["w"].grad)

# %%
# central differences with Richardson extrapolation; relative error per coordinate
result = grad_check(loss, store)
print("max relative error", result.max_error)

# %%
# the end-to-end check: a tiny model, random targets, focal + gIoU loss
from denseav.selfcheck import end_to_end_check

r = end_to_end_check(max_coords_per_param=2)
print(f"tiny model: max relative error {r.max_error:.2e}, {sum(r.skipped.values())} coordinates resampled near kinks")

"""Adam with L2 weight decay and a linear-warmup cosine learning-rate schedule."""

import math

import numpy as np


def lr_at(step, base_lr, warmup_steps, total_steps):
    """Learning rate for 1-based optimizer step ``step``.

    Rises linearly to ``base_lr`` at the end of warmup, then follows a cosine
    down to 0 at ``total_steps``.
    """
    if step <= warmup_steps:
        return base_lr * step / max(warmup_steps, 1)
    span = max(total_steps - warmup_steps, 1)
    progress = min((step - warmup_steps) / span, 1.0)
    return 0.5 * base_lr * (1.0 + math.cos(math.pi * progress))


def decays(name, value):
    # biases, norm scales and 1-D parameters are left undecayed
    return value.ndim >= 2


class Adam:
    """Adam; weight decay is added to the gradient (coupled L2)."""

    def __init__(self, store, lr=1e-4, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0, clip_norm=None):
        self.store = store
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.clip_norm = clip_norm
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in store.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in store.items()}

    def grad_norm(self):
        sq = 0.0
        for _, p in self.store.items():
            if p.grad is not None:
                sq += float(np.sum(p.grad.astype(np.float64) ** 2))
        return math.sqrt(sq)

    def step(self, lr=None):
        lr = self.lr if lr is None else lr
        self.t += 1
        scale = 1.0
        if self.clip_norm:
            norm = self.grad_norm()
            if norm > self.clip_norm:
                scale = self.clip_norm / (norm + 1e-12)
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for name, p in self.store.items():
            if p.grad is None:
                continue
            g = p.grad * scale
            if self.weight_decay and decays(name, p.data):
                g = g + self.weight_decay * p.data
            m, v = self.m[name], self.v[name]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p.data -= (lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.data.dtype)

    def state(self):
        return {"t": self.t}

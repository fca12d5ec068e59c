"""Adam optimizer over named parameter tensors."""

import numpy as np


class AdamState:
    """Per-parameter first/second moment buffers plus the shared step count."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.m = [np.zeros_like(p.data) for _, p in params]
        self.v = [np.zeros_like(p.data) for _, p in params]
        self._params = [p for _, p in params]

    def zero_grad(self):
        for p in self._params:
            p.grad = None

    def adam_step(self, clip_norm=None):
        """One bias-corrected Adam update; parameters without grads get zeros."""
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data)
                 for p in self._params]
        if clip_norm is not None:
            total = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
            if total > clip_norm:
                scale = clip_norm / total
                grads = [g * scale for g in grads]
        self.step += 1
        b1t = 1 - self.beta1 ** self.step
        b2t = 1 - self.beta2 ** self.step
        for p, g, m, v in zip(self._params, grads, self.m, self.v):
            if g.shape != p.data.shape:
                raise ValueError("adam_step: gradient/parameter shape mismatch")
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * (g * g)
            p.data = p.data - self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)

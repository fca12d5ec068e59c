"""Flow-layer contract and the shared conditioner networks.

Every layer maps data toward the base density: forward(x, ctx) -> (y, logdet)
with logdet the per-sample log|det dy/dx| of the realized map, and
inverse(y, ctx) -> x undoing it exactly. Inverses are evaluation-only and
should be called under tensor.no_grad().
"""

import numpy as np

from .. import tensor as T
from ..tensor import Tensor

CLAMP_ALPHA = 5.0


def clamp_logscale(raw, alpha=CLAMP_ALPHA):
    """Bound conditioner-emitted log-scales to (-alpha, alpha), smoothly."""
    return T.mul(T.tanh(T.div(raw, alpha)), alpha)


def clamp_preimage(value, alpha=CLAMP_ALPHA):
    """Raw head output whose clamped log-scale equals `value` exactly."""
    return float(alpha * np.arctanh(value / alpha))


class FlowLayer:
    """Bijective building block; subclasses define the actual map."""

    name = "flow_layer"

    def forward(self, x, ctx):
        raise NotImplementedError

    def inverse(self, y, ctx):
        raise NotImplementedError

    def parameters(self):
        """Deterministically ordered [(local_name, Tensor)] of trainables."""
        return []

    def zero_sample_logdet(self, x):
        """All-zero per-sample logdet matching x's batch and dtype."""
        return Tensor(np.zeros(x.shape[0], dtype=x.dtype))


def he_normal(rng, shape, fan_in, dtype):
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


class ConvNet:
    """Conditioner trunk: conv(k)->ReLU->conv(k)->ReLU->conv(k) head.

    The head weights and bias start at zero so the owning layer is the
    identity map at initialization regardless of conditioning input.
    """

    def __init__(self, c_in, c_out, rng, width=32, kernel=3, dtype=np.float32):
        self.kernel = kernel
        k = kernel
        self.w0 = Tensor(he_normal(rng, (width, c_in, k, k), c_in * k * k, dtype),
                         requires_grad=True)
        self.b0 = Tensor(np.zeros(width, dtype=dtype), requires_grad=True)
        self.w1 = Tensor(he_normal(rng, (width, width, k, k), width * k * k, dtype),
                         requires_grad=True)
        self.b1 = Tensor(np.zeros(width, dtype=dtype), requires_grad=True)
        self.w2 = Tensor(np.zeros((c_out, width, k, k), dtype=dtype), requires_grad=True)
        self.b2 = Tensor(np.zeros(c_out, dtype=dtype), requires_grad=True)

    def __call__(self, x):
        h = T.relu(T.conv2d(x, self.w0, self.b0))
        h = T.relu(T.conv2d(h, self.w1, self.b1))
        return T.conv2d(h, self.w2, self.b2)

    def parameters(self):
        return [("w0", self.w0), ("b0", self.b0), ("w1", self.w1),
                ("b1", self.b1), ("w2", self.w2), ("b2", self.b2)]


class RescaleNet:
    """Camera/ISO rescaler f_r: two width-16 dense+ReLU layers with a residual
    skip and a zero-initialized scalar head, offset so r = 1 at init.

    The +1 offset keeps the scale path trainable: with r = 0 and a zero LS
    head the product LS*r would sit at an exact saddle (both factors' grads
    vanish identically), freezing conditional scaling forever.
    """

    def __init__(self, n_in, rng, width=16, dtype=np.float32):
        self.w0 = Tensor(he_normal(rng, (width, n_in), n_in, dtype), requires_grad=True)
        self.b0 = Tensor(np.zeros(width, dtype=dtype), requires_grad=True)
        self.w1 = Tensor(he_normal(rng, (width, width), width, dtype), requires_grad=True)
        self.b1 = Tensor(np.zeros(width, dtype=dtype), requires_grad=True)
        self.w2 = Tensor(np.zeros((1, width), dtype=dtype), requires_grad=True)
        self.b2 = Tensor(np.zeros(1, dtype=dtype), requires_grad=True)

    def __call__(self, cam_onehot, iso_onehot):
        x = T.concat([cam_onehot, iso_onehot], axis=1)
        h1 = T.relu(T.dense(x, self.w0, self.b0))
        h2 = T.add(T.relu(T.dense(h1, self.w1, self.b1)), h1)
        return T.add(T.dense(h2, self.w2, self.b2), 1.0)  # [B,1]

    def parameters(self):
        return [("w0", self.w0), ("b0", self.b0), ("w1", self.w1),
                ("b1", self.b1), ("w2", self.w2), ("b2", self.b2)]


def split_channels(x):
    """Fixed coupling split: part A = channel {R}, part B = {G, B}."""
    return x[:, 0:1], x[:, 1:3]


def softplus_inv(y):
    """Raw value whose softplus equals y (> 0)."""
    return float(np.log(np.expm1(y)))

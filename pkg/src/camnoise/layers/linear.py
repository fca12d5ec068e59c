"""Pointwise/linear flow layers: invertible 1x1 channel mixing, the
per-(camera,ISO) conditional linear flow, global Gaussian-baseline affines,
the signal-dependent and per-ISO gain layers, and the inverse gamma flow.

All of these map data toward the base density in forward(), so layers that
model a noise standard deviation divide by it on the way in and multiply on
the way out (sampling).
"""

import numpy as np

from .. import tensor as T
from ..tensor import DomainError, Tensor
from .base import FlowLayer, softplus_inv

_MIN_ABS_DET = 1e-12


class Conv1x1(FlowLayer):
    """Per-pixel channel mixing by a learnable invertible 3x3 matrix.

    Initialized to a random rotation drawn from the signed permutations with
    determinant +1: orthogonal, and exactly volume-preserving even after
    float32 rounding (a dense rotation rounded to float32 picks up ~1e-7 of
    log-determinant per matrix, which pixel counts amplify past tolerance).
    """

    name = "conv1x1"

    def __init__(self, rng, n_ch=3, dtype=np.float32):
        perm = rng.permutation(n_ch)
        signs = rng.choice([-1.0, 1.0], size=n_ch)
        q = np.zeros((n_ch, n_ch))
        q[np.arange(n_ch), perm] = signs
        if np.linalg.det(q) < 0:
            q[0] = -q[0]  # force a proper rotation: det exactly +1
        self.w = Tensor(q.astype(dtype), requires_grad=True)

    def _logdet_per_pixel(self):
        ld = T.logabsdet(self.w)
        if ld.item() < np.log(_MIN_ABS_DET):
            raise DomainError("conv1x1: mixing matrix is numerically singular")
        return ld

    def forward(self, x, ctx=None):
        ld = self._logdet_per_pixel()
        n_pix = x.shape[2] * x.shape[3]
        y = T.channel_mix(x, self.w)
        ones = Tensor(np.ones(x.shape[0], dtype=x.dtype))
        return y, T.mul(ones, T.mul(ld, float(n_pix)))

    def inverse(self, y, ctx=None):
        self._logdet_per_pixel()
        winv = np.linalg.inv(self.w.data.astype(np.float64))
        x = np.einsum("oc,bchw->bohw", winv, y.data.astype(np.float64))
        return Tensor(x.astype(y.dtype))

    def parameters(self):
        return [("w", self.w)]


class ConditionalLinear(FlowLayer):
    """Per-channel scale/shift looked up by the (camera, ISO) pair one-hot.

    Scale and bias live in [n_cam*n_iso, 3] tables; an all-zero pair one-hot
    (masked context) selects log-scale 0 / bias 0, i.e. the identity.
    """

    name = "conditional_linear"

    def __init__(self, n_cam, n_iso, rng=None, dtype=np.float32):
        n_pair = n_cam * n_iso
        self.log_scale = Tensor(np.zeros((n_pair, 3), dtype=dtype), requires_grad=True)
        self.bias = Tensor(np.zeros((n_pair, 3), dtype=dtype), requires_grad=True)

    def _lookup(self, ctx):
        ls = T.matmul(ctx.pair_onehot, self.log_scale)  # [B,3]
        t = T.matmul(ctx.pair_onehot, self.bias)
        return ls, t

    def forward(self, x, ctx):
        ls, t = self._lookup(ctx)
        s = T.exp(T.reshape(ls, (-1, 3, 1, 1)))
        y = T.add(T.mul(x, s), T.reshape(t, (-1, 3, 1, 1)))
        n_pix = x.shape[2] * x.shape[3]
        return y, T.mul(ls.sum(axis=1), float(n_pix))

    def inverse(self, y, ctx):
        ls, t = self._lookup(ctx)
        s_inv = T.exp(T.negate(T.reshape(ls, (-1, 3, 1, 1))))
        return T.mul(T.sub(y, T.reshape(t, (-1, 3, 1, 1))), s_inv)

    def parameters(self):
        return [("log_scale", self.log_scale), ("bias", self.bias)]


class GlobalAffine(FlowLayer):
    """Global Gaussian fit as a flow: y = (x - bias) / exp(log_scale).

    mode 'isotropic' holds one scalar scale+bias, 'diagonal' one per channel.
    """

    name = "global_affine"

    def __init__(self, mode="isotropic", rng=None, dtype=np.float32):
        if mode not in ("isotropic", "diagonal"):
            raise ValueError(f"unknown GlobalAffine mode {mode!r}")
        self.mode = mode
        n = 1 if mode == "isotropic" else 3
        self.log_scale = Tensor(np.zeros(n, dtype=dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(n, dtype=dtype), requires_grad=True)

    def _bc(self, t):
        return T.reshape(t, (1, -1, 1, 1))

    def forward(self, x, ctx=None):
        y = T.mul(T.sub(x, self._bc(self.bias)), T.exp(T.negate(self._bc(self.log_scale))))
        n_pix = x.shape[2] * x.shape[3]
        ch_sum = T.sum_(self.log_scale) if self.mode == "diagonal" \
            else T.mul(T.sum_(self.log_scale), 3.0)
        ones = Tensor(np.ones(x.shape[0], dtype=x.dtype))
        return y, T.mul(ones, T.mul(ch_sum, -float(n_pix)))

    def inverse(self, y, ctx=None):
        return T.add(T.mul(y, T.exp(self._bc(self.log_scale))), self._bc(self.bias))

    def parameters(self):
        return [("log_scale", self.log_scale), ("bias", self.bias)]


class SignalDependent(FlowLayer):
    """Heteroscedastic normalizer: y = (x - bias) / sqrt(b1*clean + b2).

    b1, b2 are stored unconstrained per channel and realized through softplus,
    so the modeled variance is affine in the clean intensity and positive.
    """

    name = "signal_dependent"

    def __init__(self, rng=None, dtype=np.float32, init_b1=1e-2, init_b2=1.0):
        self.raw_b1 = Tensor(np.full(3, softplus_inv(init_b1), dtype=dtype),
                             requires_grad=True)
        self.raw_b2 = Tensor(np.full(3, softplus_inv(init_b2), dtype=dtype),
                             requires_grad=True)
        self.bias = Tensor(np.zeros(3, dtype=dtype), requires_grad=True)

    def _variance(self, ctx):
        b1 = T.reshape(T.softplus(self.raw_b1), (1, 3, 1, 1))
        b2 = T.reshape(T.softplus(self.raw_b2), (1, 3, 1, 1))
        var = T.add(T.mul(b1, ctx.clean), b2)
        if np.any(var.data <= 0):
            raise DomainError("signal_dependent: non-positive realized variance")
        return var

    def forward(self, x, ctx):
        var = self._variance(ctx)
        y = T.div(T.sub(x, T.reshape(self.bias, (1, 3, 1, 1))), T.sqrt(var))
        return y, T.mul(T.log(var).sum(axis=(1, 2, 3)), -0.5)

    def inverse(self, y, ctx):
        var = self._variance(ctx)
        return T.add(T.mul(y, T.sqrt(var)), T.reshape(self.bias, (1, 3, 1, 1)))

    def parameters(self):
        return [("raw_b1", self.raw_b1), ("raw_b2", self.raw_b2), ("bias", self.bias)]


class GainLayer(FlowLayer):
    """Per-ISO learned gain: y = x / exp(log_gain[iso])."""

    name = "gain"

    def __init__(self, n_iso, rng=None, dtype=np.float32):
        self.log_gain = Tensor(np.zeros((n_iso, 1), dtype=dtype), requires_grad=True)

    def forward(self, x, ctx):
        lg = T.matmul(ctx.iso_onehot, self.log_gain)  # [B,1]
        y = T.mul(x, T.exp(T.negate(T.reshape(lg, (-1, 1, 1, 1)))))
        dims = x.shape[1] * x.shape[2] * x.shape[3]
        return y, T.mul(T.reshape(lg, (-1,)), -float(dims))

    def inverse(self, y, ctx):
        lg = T.matmul(ctx.iso_onehot, self.log_gain)
        return T.mul(y, T.exp(T.reshape(lg, (-1, 1, 1, 1))))

    def parameters(self):
        return [("log_gain", self.log_gain)]


class InverseGammaFlow(FlowLayer):
    """Learnable gamma linearization on image-domain values: y = x^gamma.

    Operates on (0,1] image values (not noise); inputs are clamped to eps
    before the power so dequantized zeros stay in-domain.
    """

    name = "inverse_gamma"
    EPS = 1e-6

    def __init__(self, gamma=2.2, rng=None, dtype=np.float32):
        self.gamma = Tensor(np.array([gamma], dtype=dtype), requires_grad=True)

    def _check(self):
        if float(self.gamma.data[0]) <= 0:
            raise DomainError("inverse_gamma: gamma must be positive")

    def _clamped(self, x):
        return T.add(T.relu(T.sub(x, self.EPS)), self.EPS)  # exact max(x, eps)

    def forward(self, x, ctx=None):
        self._check()
        xc = self._clamped(x)
        g = T.reshape(self.gamma, (1, 1, 1, 1))
        y = T.pow_(xc, g)
        dims = x.shape[1] * x.shape[2] * x.shape[3]
        per_el = T.add(T.log(g), T.mul(T.sub(g, 1.0), T.log(xc)))
        # log(g) broadcasts over elements, so the sum already counts it D times
        return y, per_el.sum(axis=(1, 2, 3))

    def inverse(self, y, ctx=None):
        self._check()
        g = float(self.gamma.data[0])
        yc = np.maximum(y.data, self.EPS ** g)
        return Tensor(np.power(yc, 1.0 / g).astype(y.dtype))

    def parameters(self):
        return [("gamma", self.gamma)]

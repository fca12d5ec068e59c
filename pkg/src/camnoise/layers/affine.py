"""Affine flow layers: unconditional coupling, conditional coupling, and the
no-split conditional affine variants.

Couplings leave channel A (red) untouched and transform channels B = {G, B}
with scale/shift computed by a conv conditioner; conditional variants read the
clean patch alongside x^A and rescale the log-scale by f_r(camera, ISO). The
conditioner emits an already-clamped log-scale LS (|LS| < 5), so the realized
map is exactly y = x * exp(LS * r) + B.
"""

import numpy as np

from .. import tensor as T
from ..tensor import Tensor
from .base import ConvNet, FlowLayer, RescaleNet, clamp_logscale, split_channels


def _check_clean(x, ctx):
    if ctx.clean.shape != x.shape:
        raise ValueError(f"clean patch shape {ctx.clean.shape} does not match "
                         f"input {x.shape}")


class AffineCoupling(FlowLayer):
    """y^A = x^A; y^B = x^B * f_s(x^A) + f_t(x^A), unconditional."""

    name = "affine_coupling"

    def __init__(self, rng, width=32, kernel=3, dtype=np.float32):
        self.net = ConvNet(1, 4, rng, width=width, kernel=kernel, dtype=dtype)

    def _scale_shift(self, xa):
        out = self.net(xa)
        return clamp_logscale(out[:, 0:2]), out[:, 2:4]

    def forward(self, x, ctx=None):
        xa, xb = split_channels(x)
        ls, bias = self._scale_shift(xa)
        yb = T.add(T.mul(xb, T.exp(ls)), bias)
        return T.concat([xa, yb], axis=1), ls.sum(axis=(1, 2, 3))

    def inverse(self, y, ctx=None):
        ya, yb = split_channels(y)
        ls, bias = self._scale_shift(ya)
        xb = T.mul(T.sub(yb, bias), T.exp(T.negate(ls)))
        return T.concat([ya, xb], axis=1)

    def parameters(self):
        return [(f"net.{n}", p) for n, p in self.net.parameters()]


class ConditionalAffineCoupling(FlowLayer):
    """Coupling whose conditioner sees (x^A, clean) and whose log-scale is
    rescaled by the scalar f_r(camera, ISO)."""

    name = "conditional_affine_coupling"

    def __init__(self, n_cam, n_iso, rng, width=32, kernel=3, dtype=np.float32):
        self.net = ConvNet(4, 4, rng, width=width, kernel=kernel, dtype=dtype)
        self.rnet = RescaleNet(n_cam + n_iso, rng, dtype=dtype)

    def _scale_shift(self, xa, ctx):
        out = self.net(T.concat([xa, ctx.clean], axis=1))
        r = T.reshape(self.rnet(ctx.camera_onehot, ctx.iso_onehot), (-1, 1, 1, 1))
        eff_ls = T.mul(clamp_logscale(out[:, 0:2]), r)
        return eff_ls, out[:, 2:4]

    def forward(self, x, ctx):
        _check_clean(x, ctx)
        xa, xb = split_channels(x)
        eff_ls, bias = self._scale_shift(xa, ctx)
        yb = T.add(T.mul(xb, T.exp(eff_ls)), bias)
        return T.concat([xa, yb], axis=1), eff_ls.sum(axis=(1, 2, 3))

    def inverse(self, y, ctx):
        _check_clean(y, ctx)
        ya, yb = split_channels(y)
        eff_ls, bias = self._scale_shift(ya, ctx)
        xb = T.mul(T.sub(yb, bias), T.exp(T.negate(eff_ls)))
        return T.concat([ya, xb], axis=1)

    def parameters(self):
        return ([(f"net.{n}", p) for n, p in self.net.parameters()]
                + [(f"rnet.{n}", p) for n, p in self.rnet.parameters()])


class ConditionalAffineFull(FlowLayer):
    """No-split conditional affine: all 3 channels scaled and shifted from the
    clean patch, log-scale rescaled by f_r(camera, ISO)."""

    name = "conditional_affine_full"

    def __init__(self, n_cam, n_iso, rng, width=32, kernel=3, dtype=np.float32):
        self.net = ConvNet(3, 6, rng, width=width, kernel=kernel, dtype=dtype)
        self.rnet = RescaleNet(n_cam + n_iso, rng, dtype=dtype)

    def _scale_shift(self, ctx):
        out = self.net(ctx.clean)
        r = T.reshape(self.rnet(ctx.camera_onehot, ctx.iso_onehot), (-1, 1, 1, 1))
        return T.mul(clamp_logscale(out[:, 0:3]), r), out[:, 3:6]

    def forward(self, x, ctx):
        _check_clean(x, ctx)
        eff_ls, bias = self._scale_shift(ctx)
        y = T.add(T.mul(x, T.exp(eff_ls)), bias)
        return y, eff_ls.sum(axis=(1, 2, 3))

    def inverse(self, y, ctx):
        _check_clean(y, ctx)
        eff_ls, bias = self._scale_shift(ctx)
        return T.mul(T.sub(y, bias), T.exp(T.negate(eff_ls)))

    def parameters(self):
        return ([(f"net.{n}", p) for n, p in self.net.parameters()]
                + [(f"rnet.{n}", p) for n, p in self.rnet.parameters()])


class ConditionalAffineClean(FlowLayer):
    """No-split affine conditioned on the clean patch only (no rescale path)."""

    name = "conditional_affine_clean"

    def __init__(self, rng, width=32, kernel=3, dtype=np.float32):
        self.net = ConvNet(3, 6, rng, width=width, kernel=kernel, dtype=dtype)

    def _scale_shift(self, ctx):
        out = self.net(ctx.clean)
        return clamp_logscale(out[:, 0:3]), out[:, 3:6]

    def forward(self, x, ctx):
        _check_clean(x, ctx)
        ls, bias = self._scale_shift(ctx)
        return T.add(T.mul(x, T.exp(ls)), bias), ls.sum(axis=(1, 2, 3))

    def inverse(self, y, ctx):
        _check_clean(y, ctx)
        ls, bias = self._scale_shift(ctx)
        return T.mul(T.sub(y, bias), T.exp(T.negate(ls)))

    def parameters(self):
        return [(f"net.{n}", p) for n, p in self.net.parameters()]

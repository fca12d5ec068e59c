"""Monotone rational-quadratic spline couplings.

The spline acts element-wise inside [-tail_bound, tail_bound] and is the
identity outside (linear tails). Each of the K bins is parameterized by
unnormalized widths, heights, and K-1 interior derivatives emitted by a CNN
conditioner; boundary derivatives are fixed at 1 so the map is C^1 where the
tails join. A zero-initialized conditioner head yields uniform bins and unit
derivatives, i.e. the identity map.

Bin membership is decided outside the autodiff tape (constant one-hot masks);
gradients flow through the gathered knot quantities, never through the index.
The inverse solves the per-bin quadratic in float64.
"""

import numpy as np

from .. import tensor as T
from ..tensor import Tensor
from .base import ConvNet, FlowLayer, RescaleNet, softplus_inv, split_channels

N_BINS = 8
TAIL_BOUND = 3.0
MIN_BIN = 1e-3
MIN_DERIV = 1e-3
# softplus(raw + _DERIV_SHIFT) == 1 - MIN_DERIV at raw == 0, so derivatives
# start at exactly 1.
_DERIV_SHIFT = softplus_inv(1.0 - MIN_DERIV)


def _cumsum_last(t):
    """Inclusive cumulative sum along the last axis, built on matmul."""
    k = t.shape[-1]
    u = Tensor(np.triu(np.ones((k, k), dtype=t.dtype)))
    flat = T.reshape(t, (-1, k))
    return T.reshape(T.matmul(flat, u), t.shape)


def _normalized_bins(theta, n_bins, tail_bound):
    """Map unnormalized bin logits to positive widths summing to 2*tail."""
    frac = T.add(T.mul(T.softmax(theta, axis=-1), 1.0 - n_bins * MIN_BIN), MIN_BIN)
    return T.mul(frac, 2.0 * tail_bound)


def _knots(widths, tail_bound):
    """Prefix-sum bin widths into K+1 knot positions starting at -tail."""
    lead_shape = widths.shape[:-1] + (1,)
    lead = Tensor(np.full(lead_shape, -tail_bound, dtype=widths.dtype))
    return T.concat([lead, T.add(_cumsum_last(widths), -tail_bound)], axis=-1)


def _derivatives(theta_d):
    """K+1 positive knot derivatives; the two boundary ones are fixed at 1."""
    interior = T.add(T.softplus(T.add(theta_d, _DERIV_SHIFT)), MIN_DERIV)
    one_shape = theta_d.shape[:-1] + (1,)
    one = Tensor(np.ones(one_shape, dtype=theta_d.dtype))
    return T.concat([one, interior, one], axis=-1)


def _bin_masks(x_np, knots_x_np, n_bins, dtype):
    """Constant one-hot bin membership for each (already clipped) element."""
    cnt = (x_np[..., None] >= knots_x_np[..., :-1]).sum(axis=-1) - 1
    idx = np.clip(cnt, 0, n_bins - 1)
    onehot = (idx[..., None] == np.arange(n_bins)).astype(dtype)
    return onehot


def _gather(values, mask_t):
    return T.sum_(T.mul(values, mask_t), axis=-1)


def rq_spline_forward(x, theta_w, theta_h, theta_d,
                      n_bins=N_BINS, tail_bound=TAIL_BOUND):
    """Element-wise spline of x given per-element bin logits.

    x: Tensor [...]; theta_w/theta_h: Tensor [..., K]; theta_d: [..., K-1].
    Returns (y, log_deriv), both element-shaped; tails map to the identity and
    contribute exactly 0 to log_deriv.
    """
    T.assert_finite(theta_w, "spline width parameters")
    T.assert_finite(theta_h, "spline height parameters")
    T.assert_finite(theta_d, "spline derivative parameters")
    # Bin geometry is computed in float64 in both directions so the inverse
    # solves exactly the spline the forward evaluated; only the conditioner
    # runs at the model dtype.
    out_dtype = x.dtype
    if out_dtype != np.float64:
        x = T.cast(x, np.float64)
        theta_w = T.cast(theta_w, np.float64)
        theta_h = T.cast(theta_h, np.float64)
        theta_d = T.cast(theta_d, np.float64)
    widths = _normalized_bins(theta_w, n_bins, tail_bound)
    heights = _normalized_bins(theta_h, n_bins, tail_bound)
    knots_x = _knots(widths, tail_bound)
    knots_y = _knots(heights, tail_bound)
    derivs = _derivatives(theta_d)

    dtype = x.dtype
    x_np = x.data
    in_range = (np.abs(x_np) <= tail_bound).astype(dtype)
    x_clip = np.clip(x_np, -tail_bound, tail_bound)
    mask_np = _bin_masks(x_clip, knots_x.data, n_bins, dtype)
    m = Tensor(in_range)
    mask_t = Tensor(mask_np)

    xk = _gather(knots_x[..., :-1], mask_t)
    yk = _gather(knots_y[..., :-1], mask_t)
    wk = _gather(widths, mask_t)
    hk = _gather(heights, mask_t)
    dk = _gather(derivs[..., :-1], mask_t)
    dk1 = _gather(derivs[..., 1:], mask_t)
    sk = T.div(hk, wk)

    # Out-of-range entries evaluate the spline at their clipped position
    # (gradient-free constant), keeping every intermediate finite.
    x_in = T.add(T.mul(x, m), Tensor(np.where(in_range > 0, 0.0, x_clip).astype(dtype)))
    xi = T.div(T.sub(x_in, xk), wk)
    xi1 = T.sub(1.0, xi)
    cross = T.mul(xi, xi1)

    d_sum = T.sub(T.add(dk1, dk), T.mul(sk, 2.0))
    den = T.add(sk, T.mul(d_sum, cross))
    num = T.mul(hk, T.add(T.mul(sk, T.mul(xi, xi)), T.mul(dk, cross)))
    y_spline = T.add(yk, T.div(num, den))

    bracket = T.add(T.add(T.mul(dk1, T.mul(xi, xi)), T.mul(T.mul(sk, 2.0), cross)),
                    T.mul(dk, T.mul(xi1, xi1)))
    log_deriv = T.sub(T.add(T.mul(T.log(sk), 2.0), T.log(bracket)),
                      T.mul(T.log(den), 2.0))

    one_minus_m = Tensor((1.0 - in_range).astype(dtype))
    y = T.add(T.mul(y_spline, m), T.mul(x, one_minus_m))
    log_deriv = T.mul(log_deriv, m)
    if out_dtype != np.float64:
        y = T.cast(y, out_dtype)
        log_deriv = T.cast(log_deriv, out_dtype)
    return y, log_deriv


def _np_softmax(t):
    e = np.exp(t - t.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _np_softplus(t):
    return np.log1p(np.exp(-np.abs(t))) + np.maximum(t, 0.0)


def rq_spline_inverse(y, theta_w, theta_h, theta_d,
                      n_bins=N_BINS, tail_bound=TAIL_BOUND):
    """Exact spline inverse on plain float64 arrays via the bin quadratic."""
    y = np.asarray(y, dtype=np.float64)
    theta_w = np.asarray(theta_w, dtype=np.float64)
    theta_h = np.asarray(theta_h, dtype=np.float64)
    theta_d = np.asarray(theta_d, dtype=np.float64)

    widths = (MIN_BIN + (1.0 - n_bins * MIN_BIN) * _np_softmax(theta_w)) \
        * (2.0 * tail_bound)
    heights = (MIN_BIN + (1.0 - n_bins * MIN_BIN) * _np_softmax(theta_h)) \
        * (2.0 * tail_bound)
    lead = np.full(widths.shape[:-1] + (1,), -tail_bound)
    knots_x = np.concatenate([lead, np.cumsum(widths, axis=-1) - tail_bound], axis=-1)
    knots_y = np.concatenate([lead, np.cumsum(heights, axis=-1) - tail_bound], axis=-1)
    interior = MIN_DERIV + _np_softplus(theta_d + _DERIV_SHIFT)
    ones = np.ones(theta_d.shape[:-1] + (1,))
    derivs = np.concatenate([ones, interior, ones], axis=-1)

    in_range = np.abs(y) <= tail_bound
    y_clip = np.clip(y, -tail_bound, tail_bound)
    cnt = (y_clip[..., None] >= knots_y[..., :-1]).sum(axis=-1) - 1
    idx = np.clip(cnt, 0, n_bins - 1)[..., None]

    def pick(arr):
        return np.take_along_axis(arr, idx, axis=-1)[..., 0]

    xk = pick(knots_x[..., :-1])
    yk = pick(knots_y[..., :-1])
    wk = pick(widths)
    hk = pick(heights)
    dk = pick(derivs[..., :-1])
    dk1 = pick(derivs[..., 1:])
    sk = hk / wk

    rel = y_clip - yk
    d_sum = dk1 + dk - 2.0 * sk
    a = hk * (sk - dk) + rel * d_sum
    b = hk * dk - rel * d_sum
    c = -sk * rel
    disc = np.maximum(b * b - 4.0 * a * c, 0.0)
    xi = (2.0 * c) / (-b - np.sqrt(disc))
    x = xk + xi * wk
    return np.where(in_range, x, y)


class _SplineCouplingBase(FlowLayer):
    """Shared plumbing: conditioner reshape, forward/inverse over the split."""

    def __init__(self, c_cond, rng, n_bins=N_BINS, tail_bound=TAIL_BOUND,
                 width=32, kernel=3, dtype=np.float32):
        self.n_bins = n_bins
        self.tail_bound = tail_bound
        self.net = ConvNet(c_cond, 2 * (3 * n_bins - 1), rng,
                           width=width, kernel=kernel, dtype=dtype)

    def _theta(self, cond):
        raw = self.net(cond)  # [B, 2*(3K-1), H, W]
        b, _, h, w = raw.shape
        t = T.reshape(raw, (b, 2, 3 * self.n_bins - 1, h, w))
        return T.transpose(t, (0, 1, 3, 4, 2))  # bin parameters last

    def _split_theta(self, xa, ctx):
        raise NotImplementedError

    def forward(self, x, ctx=None):
        xa, xb = split_channels(x)
        tw, th, td = self._split_theta(xa, ctx)
        yb, log_deriv = rq_spline_forward(xb, tw, th, td,
                                          self.n_bins, self.tail_bound)
        y = T.concat([xa, yb], axis=1)
        return y, log_deriv.sum(axis=(1, 2, 3))

    def inverse(self, y, ctx=None):
        ya, yb = split_channels(y)
        with T.no_grad():
            tw, th, td = self._split_theta(ya, ctx)
        xb = rq_spline_inverse(yb.data, tw.data, th.data, td.data,
                               self.n_bins, self.tail_bound)
        return T.concat([ya, Tensor(xb.astype(y.dtype))], axis=1)


class SplineCoupling(_SplineCouplingBase):
    """Unconditional spline coupling: bins depend on the untouched channel."""

    name = "spline_coupling"

    def __init__(self, rng, n_bins=N_BINS, tail_bound=TAIL_BOUND,
                 width=32, kernel=3, dtype=np.float32):
        super().__init__(1, rng, n_bins, tail_bound, width, kernel, dtype)

    def _split_theta(self, xa, ctx):
        theta = self._theta(xa)
        k = self.n_bins
        return theta[..., :k], theta[..., k:2 * k], theta[..., 2 * k:]

    def parameters(self):
        return [("net." + n, p) for n, p in self.net.parameters()]


class ConditionalSplineCoupling(_SplineCouplingBase):
    """Spline coupling conditioned on the clean image and (camera, ISO).

    The conditioner reads concat(x^A, clean); the camera/ISO rescale factor
    multiplies the width and height logits before normalization, letting the
    gain setting reshape every bin.
    """

    name = "conditional_spline_coupling"

    def __init__(self, n_cam, n_iso, rng, n_bins=N_BINS, tail_bound=TAIL_BOUND,
                 width=32, kernel=3, dtype=np.float32):
        super().__init__(4, rng, n_bins, tail_bound, width, kernel, dtype)
        self.rnet = RescaleNet(n_cam + n_iso, rng, dtype=dtype)

    def _split_theta(self, xa, ctx):
        theta = self._theta(T.concat([xa, ctx.clean], axis=1))
        r = T.reshape(self.rnet(ctx.camera_onehot, ctx.iso_onehot),
                      (-1, 1, 1, 1, 1))
        k = self.n_bins
        return (T.mul(theta[..., :k], r), T.mul(theta[..., k:2 * k], r),
                theta[..., 2 * k:])

    def parameters(self):
        return ([("net." + n, p) for n, p in self.net.parameters()]
                + [("rnet." + n, p) for n, p in self.rnet.parameters()])

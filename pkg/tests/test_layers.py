"""Flow layers: exact inversion, analytic log-determinants vs finite
differences, identity at initialization, and conditioning semantics."""

import numpy as np
import pytest

import camnoise.tensor as T
from camnoise.layers import (AffineCoupling, ConditionalAffineClean,
                             ConditionalAffineCoupling, ConditionalAffineFull,
                             ConditionalLinear, ConditionalSplineCoupling,
                             Conv1x1, GainLayer, GlobalAffine,
                             InverseGammaFlow, SignalDependent, SplineCoupling,
                             clamp_logscale, clamp_preimage, rq_spline_forward,
                             rq_spline_inverse, softplus_inv)
from camnoise.tensor import DomainError, Tensor

from util import fd_logdet, make_ctx, max_roundtrip_err, randomize_params

N_CAM, N_ISO = 2, 3

FACTORIES = {
    "affine_coupling": lambda rng: AffineCoupling(rng),
    "conditional_affine_coupling":
        lambda rng: ConditionalAffineCoupling(N_CAM, N_ISO, rng),
    "conditional_affine_full":
        lambda rng: ConditionalAffineFull(N_CAM, N_ISO, rng),
    "conditional_affine_clean": lambda rng: ConditionalAffineClean(rng),
    "conv1x1": lambda rng: Conv1x1(rng),
    "conditional_linear": lambda rng: ConditionalLinear(N_CAM, N_ISO),
    "global_affine_isotropic": lambda rng: GlobalAffine("isotropic"),
    "global_affine_diagonal": lambda rng: GlobalAffine("diagonal"),
    "signal_dependent": lambda rng: SignalDependent(),
    "gain": lambda rng: GainLayer(N_ISO),
    "inverse_gamma": lambda rng: InverseGammaFlow(2.2),
    "spline_coupling": lambda rng: SplineCoupling(rng),
    "conditional_spline_coupling":
        lambda rng: ConditionalSplineCoupling(N_CAM, N_ISO, rng),
}
# Layers that act on image-domain values need positive inputs.
X_RANGE = {"inverse_gamma": (0.01, 1.0)}
DEFAULT_RANGE = (-1.5, 1.5)


def build(name, rng):
    layer = FACTORIES[name](rng)
    if name != "inverse_gamma":  # keep gamma at a realistic 2.2
        randomize_params(layer, rng)
    return layer


@pytest.mark.parametrize("name", sorted(FACTORIES))
def test_round_trip(name):
    rng = np.random.default_rng(hash(name) % 2**32)
    layer = build(name, rng)
    ctx = make_ctx(rng, 4, 8, 8, N_CAM, N_ISO)
    lo, hi = X_RANGE.get(name, DEFAULT_RANGE)
    x = rng.uniform(lo, hi, (4, 3, 8, 8)).astype(np.float32)
    y, ld = layer.forward(Tensor(x), ctx)
    assert y.shape == x.shape
    assert ld.shape == (4,)
    assert max_roundtrip_err(layer, x, ctx) < 1e-5


@pytest.mark.parametrize("name", sorted(FACTORIES))
def test_logdet_matches_finite_differences(name):
    rng = np.random.default_rng(hash(name + "fd") % 2**32)
    layer = build(name, rng)
    for _, p in layer.parameters():
        p.data = p.data.astype(np.float64)
    ctx = make_ctx(rng, 1, 2, 2, N_CAM, N_ISO, dtype=np.float64)
    lo, hi = X_RANGE.get(name, (-1.2, 1.2))
    x = rng.uniform(lo, hi, (1, 3, 2, 2))

    def fwd(a):
        with T.no_grad():
            y, _ = layer.forward(Tensor(a), ctx)
        return y.data

    with T.no_grad():
        _, ld = layer.forward(Tensor(x), ctx)
    assert abs(float(ld.data[0]) - fd_logdet(fwd, x)) < 1e-4


def test_identity_at_initialization():
    rng = np.random.default_rng(0)
    ctx = make_ctx(rng, 4, 8, 8, N_CAM, N_ISO)
    x = rng.uniform(-2, 2, (4, 3, 8, 8)).astype(np.float32)
    for name in ("affine_coupling", "conditional_affine_coupling",
                 "conditional_affine_full", "conditional_affine_clean",
                 "conditional_linear", "global_affine_isotropic",
                 "global_affine_diagonal", "gain", "spline_coupling",
                 "conditional_spline_coupling"):
        layer = FACTORIES[name](rng)
        y, ld = layer.forward(Tensor(x), ctx)
        assert np.allclose(y.data, x, atol=1e-6), name
        assert np.allclose(ld.data, 0, atol=1e-6), name


def test_conv1x1_init_exactly_volume_preserving():
    # Signed-permutation init has det +1 exactly, even in float32.
    for seed in range(20):
        layer = Conv1x1(np.random.default_rng(seed))
        x = np.random.default_rng(seed + 100).normal(
            0, 1, (2, 3, 4, 4)).astype(np.float32)
        _, ld = layer.forward(Tensor(x))
        assert float(np.abs(ld.data).max()) == 0.0


def test_conditional_linear_analytic():
    layer = ConditionalLinear(N_CAM, N_ISO)
    layer.log_scale.data[:] = np.log(2.0)
    layer.bias.data[:] = 0.1
    rng = np.random.default_rng(1)
    ctx = make_ctx(rng, 2, 2, 2, N_CAM, N_ISO)
    x = np.full((2, 3, 2, 2), 0.5, dtype=np.float32)
    y, ld = layer.forward(Tensor(x), ctx)
    assert np.allclose(y.data, 1.1, atol=1e-6)
    # n_pix * sum_ch log s = 4 * 3 * ln 2 per sample
    assert np.allclose(ld.data, 12 * np.log(2.0), atol=1e-5)


def test_conditional_linear_masked_pair_is_identity():
    rng = np.random.default_rng(2)
    layer = ConditionalLinear(N_CAM, N_ISO)
    randomize_params(layer, rng)
    ctx = make_ctx(rng, 3, 4, 4, N_CAM, N_ISO).masked(use_camera=False)
    x = rng.normal(0, 1, (3, 3, 4, 4)).astype(np.float32)
    y, ld = layer.forward(Tensor(x), ctx)
    assert np.array_equal(y.data, x)
    assert np.all(ld.data == 0)


def test_conv1x1_analytic():
    layer = Conv1x1(np.random.default_rng(0))
    layer.w.data = (2.0 * np.eye(3)).astype(np.float32)
    rng = np.random.default_rng(3)
    x = rng.normal(0, 1, (2, 3, 2, 2)).astype(np.float32)
    y, ld = layer.forward(Tensor(x))
    assert np.allclose(y.data, 2 * x, atol=1e-6)
    assert np.allclose(ld.data, 4 * np.log(8.0), atol=1e-5)  # H*W*log|det|
    assert np.allclose(layer.inverse(y).data, x, atol=1e-7)


def test_conv1x1_singular_raises():
    layer = Conv1x1(np.random.default_rng(0))
    layer.w.data = np.diag([1.0, 1.0, 0.0]).astype(np.float32)
    x = Tensor(np.zeros((1, 3, 2, 2), np.float32))
    with pytest.raises(DomainError):
        layer.forward(x)
    with pytest.raises(DomainError):
        layer.inverse(x)


def test_conditional_affine_full_analytic():
    # Drive the log-scale head bias to a value whose clamp is exactly ln 2;
    # the rescale factor is 1 at init, so y = 2x and logdet = 3*H*W*ln 2.
    rng = np.random.default_rng(4)
    layer = ConditionalAffineFull(N_CAM, N_ISO, rng)
    layer.net.b2.data[0:3] = clamp_preimage(np.log(2.0))
    ctx = make_ctx(rng, 2, 4, 4, N_CAM, N_ISO)
    x = rng.normal(0, 1, (2, 3, 4, 4)).astype(np.float32)
    y, ld = layer.forward(Tensor(x), ctx)
    assert np.allclose(y.data, 2 * x, rtol=1e-5, atol=1e-6)
    assert np.allclose(ld.data, 48 * np.log(2.0), rtol=1e-5)


def test_clamp_logscale_bounds_and_preimage():
    raw = Tensor(np.array([-1e6, -3.0, 0.0, 3.0, 1e6], dtype=np.float64))
    out = clamp_logscale(raw).data
    assert np.all(np.abs(out) <= 5.0)  # tanh saturates to exactly 1 in floats
    assert np.all(np.abs(out[1:4]) < 5.0)
    assert out[2] == 0.0
    for v in (-4.9, -1.0, 0.3, 4.9):
        got = clamp_logscale(Tensor(np.array([clamp_preimage(v)]))).data[0]
        assert abs(got - v) < 1e-9


def test_signal_dependent_matches_formula():
    layer = SignalDependent(init_b1=0.04, init_b2=0.01)
    layer.bias.data[:] = [0.01, -0.02, 0.0]
    rng = np.random.default_rng(5)
    ctx = make_ctx(rng, 2, 4, 4, N_CAM, N_ISO)
    x = rng.normal(0, 0.3, (2, 3, 4, 4)).astype(np.float32)
    y, ld = layer.forward(Tensor(x), ctx)
    var = 0.04 * ctx.clean.data + 0.01
    ref = (x - layer.bias.data[None, :, None, None]) / np.sqrt(var)
    assert np.allclose(y.data, ref, rtol=1e-5, atol=1e-7)
    assert np.allclose(ld.data, -0.5 * np.log(var).sum(axis=(1, 2, 3)),
                       rtol=1e-4)


def test_gain_layer_formula():
    layer = GainLayer(2)
    layer.log_gain.data[:] = [[0.3], [-0.2]]
    clean = np.full((2, 3, 2, 2), 0.5, np.float32)
    from camnoise.context import ConditioningContext
    ctx = ConditioningContext.from_indices(clean, [0, 0], [0, 1], 1, 2)
    x = np.ones((2, 3, 2, 2), np.float32)
    y, ld = layer.forward(Tensor(x), ctx)
    assert np.allclose(y.data[0], np.exp(-0.3), rtol=1e-6)
    assert np.allclose(y.data[1], np.exp(0.2), rtol=1e-6)
    assert np.allclose(ld.data, [-12 * 0.3, 12 * 0.2], rtol=1e-5)


def test_inverse_gamma_analytic():
    layer = InverseGammaFlow(2.2)
    x = np.full((1, 3, 2, 2), 0.5, np.float32)
    y, ld = layer.forward(Tensor(x))
    assert np.allclose(y.data, 0.21763764, atol=1e-6)
    per_el = np.log(2.2) + 1.2 * np.log(0.5)
    assert np.allclose(ld.data, 12 * per_el, rtol=1e-5)
    assert np.allclose(layer.inverse(y).data, 0.5, atol=1e-6)


def test_inverse_gamma_rejects_nonpositive_gamma():
    layer = InverseGammaFlow(2.2)
    layer.gamma.data[0] = -0.5
    x = Tensor(np.full((1, 3, 2, 2), 0.5, np.float32))
    with pytest.raises(DomainError):
        layer.forward(x)


def test_inverse_gamma_clamps_zero_inputs():
    layer = InverseGammaFlow(2.2)
    x = Tensor(np.zeros((1, 3, 2, 2), np.float32))
    y, ld = layer.forward(x)
    assert np.all(y.data > 0)
    assert np.all(np.isfinite(ld.data))


def test_couplings_leave_channel_a_untouched():
    rng = np.random.default_rng(6)
    ctx = make_ctx(rng, 4, 8, 8, N_CAM, N_ISO)
    x = rng.normal(0, 1, (4, 3, 8, 8)).astype(np.float32)
    for name in ("affine_coupling", "conditional_affine_coupling",
                 "spline_coupling", "conditional_spline_coupling"):
        layer = build(name, rng)
        y, _ = layer.forward(Tensor(x), ctx)
        assert np.array_equal(y.data[:, 0], x[:, 0]), name


def test_zero_heads_ignore_context():
    rng = np.random.default_rng(7)
    layer = ConditionalAffineCoupling(N_CAM, N_ISO, rng)
    x = Tensor(rng.normal(0, 1, (4, 3, 8, 8)).astype(np.float32))
    y_a, _ = layer.forward(x, make_ctx(rng, 4, 8, 8, N_CAM, N_ISO))
    y_b, _ = layer.forward(x, make_ctx(rng, 4, 8, 8, N_CAM, N_ISO))
    assert np.array_equal(y_a.data, y_b.data)


def test_coupling_rejects_mismatched_clean():
    rng = np.random.default_rng(8)
    layer = ConditionalAffineCoupling(N_CAM, N_ISO, rng)
    ctx = make_ctx(rng, 4, 4, 4, N_CAM, N_ISO)
    x = Tensor(rng.normal(0, 1, (4, 3, 8, 8)).astype(np.float32))
    with pytest.raises(ValueError, match="clean"):
        layer.forward(x, ctx)


def test_spline_monotone_in_transformed_channel():
    rng = np.random.default_rng(9)
    layer = ConditionalSplineCoupling(N_CAM, N_ISO, rng)
    randomize_params(layer, rng, head_scale=0.5, vector_scale=0.5)
    ctx = make_ctx(rng, 1, 2, 2, N_CAM, N_ISO)
    base = rng.normal(0, 1, (1, 3, 2, 2)).astype(np.float32)
    prev = None
    for xv in np.linspace(-4.0, 4.0, 101):
        x = base.copy()
        x[:, 1:3] = xv  # hold the conditioning channel fixed
        y, _ = layer.forward(Tensor(x), ctx)
        v = float(y.data[0, 1, 0, 0])
        if prev is not None:
            assert v > prev
        prev = v


def test_spline_identity_outside_tails():
    rng = np.random.default_rng(10)
    layer = SplineCoupling(rng)
    randomize_params(layer, rng, head_scale=0.5)
    x = rng.normal(0, 1, (2, 3, 4, 4)).astype(np.float32)
    x[:, 1:3] = np.sign(x[:, 1:3]) * rng.uniform(3.2, 6.0, x[:, 1:3].shape)
    y, ld = layer.forward(Tensor(x))
    assert np.array_equal(y.data[:, 1:3], x[:, 1:3])
    assert np.allclose(ld.data, 0, atol=1e-7)


def test_rq_spline_round_trip_and_derivative():
    rng = np.random.default_rng(11)
    n = 500
    x = rng.uniform(-4, 4, n)
    tw = rng.normal(0, 0.7, (n, 8))
    th = rng.normal(0, 0.7, (n, 8))
    td = rng.normal(0, 0.7, (n, 7))
    with T.no_grad():
        y, log_d = rq_spline_forward(Tensor(x), Tensor(tw), Tensor(th),
                                     Tensor(td))
    x_back = rq_spline_inverse(y.data, tw, th, td)
    assert np.max(np.abs(x_back - x)) < 1e-10

    eps = 1e-6
    with T.no_grad():
        y_hi, _ = rq_spline_forward(Tensor(x + eps), Tensor(tw), Tensor(th),
                                    Tensor(td))
        y_lo, _ = rq_spline_forward(Tensor(x - eps), Tensor(tw), Tensor(th),
                                    Tensor(td))
    fd = (y_hi.data - y_lo.data) / (2 * eps)
    interior = np.abs(x) < 2.99
    assert np.allclose(np.exp(log_d.data[interior]), fd[interior], rtol=1e-4)
    assert np.all(fd > 0)


def test_spline_derivative_shift_gives_unit_slope_at_init():
    # softplus(0 + shift) + min == 1 exactly, so zero conditioner output
    # means unit derivatives everywhere.
    assert abs(np.log1p(np.exp(softplus_inv(1 - 1e-3))) + 1e-3 - 1.0) < 1e-12


def test_gradients_flow_through_stacked_layers():
    rng = np.random.default_rng(12)
    layers = [ConditionalLinear(N_CAM, N_ISO), Conv1x1(rng),
              ConditionalSplineCoupling(N_CAM, N_ISO, rng),
              Conv1x1(rng), ConditionalAffineCoupling(N_CAM, N_ISO, rng)]
    for l in layers:
        randomize_params(l, rng)
    ctx = make_ctx(rng, 4, 8, 8, N_CAM, N_ISO)
    z = Tensor(rng.uniform(-1, 1, (4, 3, 8, 8)).astype(np.float32))
    ld_tot = Tensor(np.zeros(4, dtype=np.float32))
    for l in layers:
        z, ld = l.forward(z, ctx)
        ld_tot = T.add(ld_tot, ld)
    loss = T.sub(T.mul(T.mean(T.mul(z, z)), 0.5), T.mean(ld_tot))
    loss.backward()
    for l in layers:
        for name, p in l.parameters():
            assert p.grad is not None, (l.name, name)
            assert np.all(np.isfinite(p.grad)), (l.name, name)


def test_global_affine_mode_validation():
    with pytest.raises(ValueError, match="mode"):
        GlobalAffine("full")

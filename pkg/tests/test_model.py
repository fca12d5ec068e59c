"""FlowModel: stack composition, gamma preprocessing, masking, failure naming."""

import numpy as np
import pytest

from camnoise.layers import InverseGammaFlow
from camnoise.model import FlowModel, NumericError
from camnoise.tensor import Tensor
from camnoise.zoo import build_model

from util import make_ctx, randomize_params

N_CAM, N_ISO = 2, 3


def make_model(name="proposed", seed=0):
    return build_model(name, n_cam=N_CAM, n_iso=N_ISO, seed=seed)


def test_forward_inverse_round_trip():
    rng = np.random.default_rng(0)
    model = make_model()
    randomize_params(model, rng)
    ctx = make_ctx(rng, 4, 8, 8, N_CAM, N_ISO)
    x = rng.normal(0, 0.1, (4, 3, 8, 8)).astype(np.float32)
    z, ld = model.forward(Tensor(x), ctx)
    assert z.shape == x.shape and ld.shape == (4,)
    back = model.inverse(z, ctx)
    assert np.max(np.abs(back.data - x)) < 1e-4


def test_gamma_preprocess_round_trip():
    rng = np.random.default_rng(1)
    model = make_model("proposed+gamma", seed=1)
    assert isinstance(model.gamma, InverseGammaFlow)
    randomize_params(model, rng)
    model.gamma.gamma.data[:] = 2.2  # keep the exponent realistic
    ctx = make_ctx(rng, 4, 8, 8, N_CAM, N_ISO, clean_range=(0.2, 0.8))
    x = rng.normal(0, 0.05, (4, 3, 8, 8)).astype(np.float32)
    z, _ = model.forward(Tensor(x), ctx)
    back = model.inverse(z, ctx)
    assert np.max(np.abs(back.data - x)) < 1e-4


def test_gamma_logdet_matches_composition():
    # With gamma attached, total logdet = gamma logdet on the noisy image
    # plus the stack logdet on linearized noise.
    rng = np.random.default_rng(2)
    model = make_model("proposed+gamma", seed=2)
    ctx = make_ctx(rng, 2, 4, 4, N_CAM, N_ISO, clean_range=(0.3, 0.7))
    x = Tensor(rng.normal(0, 0.05, (2, 3, 4, 4)).astype(np.float32))
    _, ld = model.forward(x, ctx)
    # Stack is identity at init, so the only contribution is the gamma layer.
    import camnoise.tensor as T
    noisy = T.add(ctx.clean, x)
    _, ld_gamma = model.gamma.forward(noisy)
    assert np.allclose(ld.data, ld_gamma.data, rtol=1e-5, atol=1e-5)


def test_masking_removes_context_influence():
    rng = np.random.default_rng(3)
    x = Tensor(rng.normal(0, 0.1, (4, 3, 8, 8)).astype(np.float32))

    def two_ctx():
        a = make_ctx(np.random.default_rng(10), 4, 8, 8, N_CAM, N_ISO)
        b = make_ctx(np.random.default_rng(20), 4, 8, 8, N_CAM, N_ISO)
        return a, b

    # camera-only mask: changing clean and ISO must not change anything.
    model = make_model("CCS_camera_onlyx2", seed=3)
    randomize_params(model, rng)
    a, b = two_ctx()
    cam = a.camera_onehot.data.argmax(axis=1)
    b2 = make_ctx(np.random.default_rng(20), 4, 8, 8, N_CAM, N_ISO)
    from camnoise.context import ConditioningContext
    b_same_cam = ConditioningContext.from_indices(
        b2.clean.data, cam, b2.iso_onehot.data.argmax(axis=1), N_CAM, N_ISO)
    za, la = model.forward(x, a)
    zb, lb = model.forward(x, b_same_cam)
    assert np.array_equal(za.data, zb.data)
    assert np.array_equal(la.data, lb.data)


def test_all_false_mask_ignores_everything():
    rng = np.random.default_rng(4)
    base = make_model("CCSx2", seed=4)
    model = FlowModel(base.layers, N_CAM, N_ISO,
                      mask=(False, False, False))
    randomize_params(model, rng)
    x = Tensor(rng.normal(0, 0.1, (4, 3, 8, 8)).astype(np.float32))
    za, _ = model.forward(x, make_ctx(np.random.default_rng(1), 4, 8, 8,
                                      N_CAM, N_ISO))
    zb, _ = model.forward(x, make_ctx(np.random.default_rng(2), 4, 8, 8,
                                      N_CAM, N_ISO))
    assert np.array_equal(za.data, zb.data)


def test_numeric_error_names_layer():
    rng = np.random.default_rng(5)
    model = make_model("isotropic", seed=5)
    model.layers[0].log_scale.data[:] = -1e9  # exp(+1e9) -> inf
    ctx = make_ctx(rng, 2, 4, 4, N_CAM, N_ISO)
    x = Tensor(rng.normal(0, 1, (2, 3, 4, 4)).astype(np.float32))
    with np.errstate(over="ignore"), \
            pytest.raises(NumericError, match=r"layer 0 \(global_affine\)"):
        model.forward(x, ctx)


def test_parameter_names_are_prefixed_and_unique():
    model = make_model("proposed+gamma", seed=6)
    names = [n for n, _ in model.parameters()]
    assert len(names) == len(set(names))
    assert all(n.startswith(("layers.", "gamma.")) for n in names)
    assert any(n.startswith("layers.0.") for n in names)
    assert "gamma.gamma" in names


def test_param_count_matches_sum():
    model = make_model()
    assert model.param_count() == sum(p.data.size
                                      for _, p in model.parameters())


def test_astype_casts_everything():
    model = make_model()
    model.astype(np.float64)
    assert all(p.data.dtype == np.float64 for _, p in model.parameters())


def test_gamma_preprocess_type_checked():
    with pytest.raises(TypeError):
        FlowModel([], 1, 1, gamma_preprocess=object())

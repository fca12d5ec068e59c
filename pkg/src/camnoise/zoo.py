"""Named model configurations assembled from the flow-layer registry.

Covers the proposed conditional architecture, the degenerate-flow baselines
(Gaussian fits, the noise level function, and the signal/gain flow stack),
and every ablation row. Each builder returns a FlowModel carrying a JSON-able
spec so the exact architecture round-trips alongside checkpoints.
"""

import json

import numpy as np

from .layers import (AffineCoupling, ConditionalAffineClean,
                     ConditionalAffineCoupling, ConditionalAffineFull,
                     ConditionalLinear, ConditionalSplineCoupling, Conv1x1,
                     GainLayer, GlobalAffine, InverseGammaFlow,
                     SignalDependent, SplineCoupling)
from .model import FlowModel

DEFAULT_N_CAM = 5
DEFAULT_N_ISO = 5


class ZooError(ValueError):
    pass


# -- layer descriptors ---------------------------------------------------------

def _cl():
    return {"type": "conditional_linear"}


def _conv():
    return {"type": "conv1x1"}


def _cac(width=32):
    return {"type": "conditional_affine_coupling", "width": width}


def _ac(width=32):
    return {"type": "affine_coupling", "width": width}


def _csc(width=32):
    return {"type": "conditional_spline_coupling", "width": width}


def _sc(width=32):
    return {"type": "spline_coupling", "width": width}


def _ca_clean(width=32):
    return {"type": "conditional_affine_clean", "width": width}


def _ca_full(width=32):
    return {"type": "conditional_affine_full", "width": width}


def _ccs(k, width=32, kind="conditional_affine_coupling"):
    """k conditional coupling steps: each a 1x1 conv + one coupling."""
    blocks = []
    for _ in range(k):
        blocks.append(_conv())
        blocks.append({"type": kind, "width": width})
    return blocks


def make_spec(name, blocks, n_cam=DEFAULT_N_CAM, n_iso=DEFAULT_N_ISO,
              mask=(True, True, True), gamma=False):
    return {
        "name": name,
        "n_cam": int(n_cam),
        "n_iso": int(n_iso),
        "mask": {"use_clean": bool(mask[0]), "use_camera": bool(mask[1]),
                 "use_iso": bool(mask[2])},
        "dequant": {"gamma": bool(gamma), "gamma_init": 2.2},
        "blocks": blocks,
    }


def spec_to_json(spec):
    return json.dumps(spec, sort_keys=True, indent=2)


def spec_from_json(text):
    return json.loads(text)


# -- instantiation ---------------------------------------------------------------

def _make_layer(desc, n_cam, n_iso, rng):
    kind = desc["type"]
    width = desc.get("width", 32)
    if kind == "conv1x1":
        return Conv1x1(rng)
    if kind == "conditional_linear":
        return ConditionalLinear(n_cam, n_iso)
    if kind == "affine_coupling":
        return AffineCoupling(rng, width=width)
    if kind == "conditional_affine_coupling":
        return ConditionalAffineCoupling(n_cam, n_iso, rng, width=width)
    if kind == "conditional_affine_full":
        return ConditionalAffineFull(n_cam, n_iso, rng, width=width)
    if kind == "conditional_affine_clean":
        return ConditionalAffineClean(rng, width=width)
    if kind == "spline_coupling":
        return SplineCoupling(rng, width=width)
    if kind == "conditional_spline_coupling":
        return ConditionalSplineCoupling(n_cam, n_iso, rng, width=width)
    if kind == "global_affine":
        return GlobalAffine(desc.get("mode", "isotropic"))
    if kind == "signal_dependent":
        return SignalDependent(init_b1=desc.get("init_b1", 1e-2),
                               init_b2=desc.get("init_b2", 1.0))
    if kind == "gain":
        return GainLayer(n_iso)
    raise ZooError(f"unknown layer type {kind!r}")


def build_from_spec(spec, seed=0):
    """Instantiate a FlowModel from a spec dict, deterministically in seed."""
    rng = np.random.default_rng(seed)
    n_cam, n_iso = spec["n_cam"], spec["n_iso"]
    layers = [_make_layer(d, n_cam, n_iso, rng) for d in spec["blocks"]]
    mask = (spec["mask"]["use_clean"], spec["mask"]["use_camera"],
            spec["mask"]["use_iso"])
    gamma = None
    if spec.get("dequant", {}).get("gamma", False):
        gamma = InverseGammaFlow(spec["dequant"].get("gamma_init", 2.2))
    return FlowModel(layers, n_cam, n_iso, name=spec["name"], mask=mask,
                     gamma_preprocess=gamma, spec=spec)


# -- named builders ---------------------------------------------------------------

def proposed_spec(s=4, k=2, n_cam=DEFAULT_N_CAM, n_iso=DEFAULT_N_ISO, width=32):
    if s < 1 or k < 0:
        raise ZooError("proposed model needs s >= 1 blocks and k >= 0 steps")
    blocks = []
    for _ in range(s):
        blocks.append(_cl())
        blocks.extend(_ccs(k, width))
    return make_spec(f"proposed_s{s}k{k}" if (s, k) != (4, 2) else "proposed",
                     blocks, n_cam, n_iso)


def build_proposed(s=4, k=2, n_cam=DEFAULT_N_CAM, n_iso=DEFAULT_N_ISO,
                   seed=0, width=32):
    return build_from_spec(proposed_spec(s, k, n_cam, n_iso, width), seed)


BASELINE_KINDS = ("isotropic", "diagonal", "full_cov", "nlf",
                  "noise_flow", "noise_flow_large")


def baseline_spec(kind, n_cam=DEFAULT_N_CAM, n_iso=DEFAULT_N_ISO):
    if kind == "isotropic":
        blocks = [{"type": "global_affine", "mode": "isotropic"}]
    elif kind == "diagonal":
        blocks = [{"type": "global_affine", "mode": "diagonal"}]
    elif kind == "full_cov":
        blocks = [_conv(), {"type": "global_affine", "mode": "diagonal"}]
    elif kind == "nlf":
        blocks = [{"type": "signal_dependent"}]
    elif kind in ("noise_flow", "noise_flow_large"):
        width = 16 if kind == "noise_flow" else 64
        blocks = [{"type": "signal_dependent"}, {"type": "gain"}]
        for _ in range(2):
            blocks.append(_conv())
            blocks.append(_ac(width))
    else:
        raise ZooError(f"unknown baseline kind {kind!r}")
    return make_spec(kind, blocks, n_cam, n_iso)


def build_baseline(kind, n_cam=DEFAULT_N_CAM, n_iso=DEFAULT_N_ISO, seed=0):
    return build_from_spec(baseline_spec(kind, n_cam, n_iso), seed)


def _ablation_rows():
    rows = {}
    rows["CL"] = ([_cl()], (True, True, True))
    rows["CCS_iso_onlyx2"] = (_ccs(2), (False, False, True))
    rows["CCS_camera_onlyx2"] = (_ccs(2), (False, True, False))
    rows["CCS_clean_onlyx2"] = (_ccs(2), (True, False, False))
    rows["CCSx2"] = (_ccs(2), (True, True, True))
    rows["CL-CCSx2"] = ([_cl()] + _ccs(2), (True, True, True))
    rows["(CL-CCSx2)x2"] = (([_cl()] + _ccs(2)) * 2, (True, True, True))
    rows["(CL-CCSx2)x4"] = (([_cl()] + _ccs(2)) * 4, (True, True, True))
    csc2 = _ccs(2, kind="conditional_spline_coupling")
    cac2 = _ccs(2)
    sc2 = _ccs(2, kind="spline_coupling")
    ac2 = _ccs(2, kind="affine_coupling")
    rows["SCx2_CL_CA_I_CSCx2"] = (sc2 + [_cl(), _ca_clean()] + csc2,
                                  (True, True, True))
    rows["CL_CA_I_CSCx2"] = ([_cl(), _ca_clean()] + csc2, (True, True, True))
    rows["ACx2_CL_CA_I_CACx2"] = (ac2 + [_cl(), _ca_clean()] + cac2,
                                  (True, True, True))
    rows["CL_CA_I_CACx2"] = ([_cl(), _ca_clean()] + cac2, (True, True, True))
    rows["CL_CSCx2_CACx2"] = ([_cl()] + csc2 + cac2, (True, True, True))
    rows["CL_CACx2"] = ([_cl()] + cac2, (True, True, True))
    rows["CL_CSCx2"] = ([_cl()] + csc2, (True, True, True))
    rows["CL_CA_Icg"] = ([_cl(), _ca_full()], (True, True, True))
    rows["CACx2_CA_Icg"] = (cac2 + [_ca_full()], (True, True, True))
    rows["(CL_CA_Icg)x4"] = ([_cl(), _ca_full()] * 4, (True, True, True))
    return rows


ABLATION_ROWS = tuple(_ablation_rows().keys())


def ablation_spec(row_id, n_cam=DEFAULT_N_CAM, n_iso=DEFAULT_N_ISO):
    key = row_id.replace("×", "x")
    rows = _ablation_rows()
    if key not in rows:
        raise ZooError(f"unknown ablation row {row_id!r}")
    blocks, mask = rows[key]
    return make_spec(key, blocks, n_cam, n_iso, mask=mask)


def build_ablation(row_id, n_cam=DEFAULT_N_CAM, n_iso=DEFAULT_N_ISO, seed=0):
    return build_from_spec(ablation_spec(row_id, n_cam, n_iso), seed)


def available_models():
    return ("proposed",) + BASELINE_KINDS + ABLATION_ROWS


def model_spec(name, n_cam=DEFAULT_N_CAM, n_iso=DEFAULT_N_ISO):
    """Resolve a CLI model name (optionally with a +gamma suffix) to a spec."""
    gamma = False
    if name.endswith("+gamma"):
        gamma = True
        name = name[:-len("+gamma")]
    if name == "proposed":
        spec = proposed_spec(n_cam=n_cam, n_iso=n_iso)
    elif name in BASELINE_KINDS:
        spec = baseline_spec(name, n_cam, n_iso)
    elif name.replace("×", "x") in ABLATION_ROWS:
        spec = ablation_spec(name, n_cam, n_iso)
    else:
        raise ZooError(f"unknown model {name!r}; choose one of "
                       f"{', '.join(available_models())}")
    if gamma:
        spec["dequant"]["gamma"] = True
        spec["name"] = spec["name"] + "+gamma"
    return spec


def build_model(name, n_cam=DEFAULT_N_CAM, n_iso=DEFAULT_N_ISO, seed=0):
    return build_from_spec(model_spec(name, n_cam, n_iso), seed)

"""Flow layer zoo: couplings, pointwise linear maps, and preprocessing flows.

Every layer maps noise toward the unit-Gaussian base in forward() and back in
inverse(), returning (y, logdet) from forward with logdet shaped [batch].
Layer classes carry a stable `name` used in model specs and checkpoints.
"""

from .base import (CLAMP_ALPHA, ConvNet, FlowLayer, RescaleNet, clamp_logscale,
                   clamp_preimage, softplus_inv, split_channels)
from .affine import (AffineCoupling, ConditionalAffineClean,
                     ConditionalAffineCoupling, ConditionalAffineFull)
from .linear import (Conv1x1, ConditionalLinear, GainLayer, GlobalAffine,
                     InverseGammaFlow, SignalDependent)
from .spline import (ConditionalSplineCoupling, SplineCoupling,
                     rq_spline_forward, rq_spline_inverse)

LAYER_TYPES = {cls.name: cls for cls in (
    AffineCoupling,
    ConditionalAffineCoupling,
    ConditionalAffineFull,
    ConditionalAffineClean,
    Conv1x1,
    ConditionalLinear,
    GlobalAffine,
    SignalDependent,
    GainLayer,
    InverseGammaFlow,
    SplineCoupling,
    ConditionalSplineCoupling,
)}

__all__ = [
    "CLAMP_ALPHA", "ConvNet", "FlowLayer", "RescaleNet", "clamp_logscale",
    "clamp_preimage", "softplus_inv", "split_channels",
    "AffineCoupling", "ConditionalAffineClean", "ConditionalAffineCoupling",
    "ConditionalAffineFull", "Conv1x1", "ConditionalLinear", "GainLayer",
    "GlobalAffine", "InverseGammaFlow", "SignalDependent",
    "ConditionalSplineCoupling", "SplineCoupling",
    "rq_spline_forward", "rq_spline_inverse", "LAYER_TYPES",
]

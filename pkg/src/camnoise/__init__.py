"""camnoise: conditional normalizing-flow modeling of sRGB camera noise."""

from .context import ConditioningContext, ContextError
from .model import FlowModel, NumericError
from .train import TrainConfig, TrainRunLog, nll_per_dim, sample_noise, train
from .metrics import (IntensityVarianceCurve, MetricsError, eval_model,
                      marginal_kl, variance_vs_intensity)
from .zoo import (ABLATION_ROWS, BASELINE_KINDS, ZooError, available_models,
                  build_ablation, build_baseline, build_from_spec,
                  build_model, build_proposed, model_spec, proposed_spec,
                  spec_from_json, spec_to_json)

__version__ = "0.1.0"

__all__ = [
    "ConditioningContext", "ContextError", "FlowModel", "NumericError",
    "TrainConfig", "TrainRunLog", "nll_per_dim", "sample_noise", "train",
    "IntensityVarianceCurve", "MetricsError", "eval_model", "marginal_kl",
    "variance_vs_intensity",
    "ABLATION_ROWS", "BASELINE_KINDS", "ZooError", "available_models",
    "build_ablation", "build_baseline", "build_from_spec", "build_model",
    "build_proposed", "model_spec", "proposed_spec", "spec_from_json",
    "spec_to_json", "__version__",
]

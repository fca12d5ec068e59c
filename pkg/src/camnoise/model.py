"""FlowModel: an ordered stack of flow layers with shared conditioning.

forward(noise, ctx) maps a noise batch to the Gaussian base, accumulating
per-layer log-determinants; inverse(z, ctx) runs the stack backwards for
sampling. Models own a conditioning mask (which context fields layers may
see) and an optional learnable gamma linearization applied in image space
before the stack.
"""

import numpy as np

from . import tensor as T
from .context import ConditioningContext
from .layers import InverseGammaFlow
from .tensor import Tensor


class NumericError(RuntimeError):
    """Non-finite values appeared; the message names the offending layer."""


def _check_finite(arr, where):
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values after {where}")


class FlowModel:
    def __init__(self, layers, n_cam, n_iso, name="model",
                 mask=(True, True, True), gamma_preprocess=None, spec=None):
        self.layers = list(layers)
        self.n_cam = n_cam
        self.n_iso = n_iso
        self.name = name
        self.mask = tuple(mask)
        self.gamma = gamma_preprocess
        if gamma_preprocess is not None and not isinstance(gamma_preprocess,
                                                           InverseGammaFlow):
            raise TypeError("gamma_preprocess must be an InverseGammaFlow")
        self.spec = spec

    # -- conditioning ------------------------------------------------------
    def _masked_ctx(self, ctx, lin_clean=None):
        use_clean, use_cam, use_iso = self.mask
        m = ctx.masked(use_clean, use_cam, use_iso)
        if lin_clean is not None and use_clean:
            m = ConditioningContext(lin_clean, m.camera_onehot, m.iso_onehot,
                                    m.pair_onehot, validate=False)
        return m

    # -- density direction ---------------------------------------------------
    def forward(self, noise, ctx):
        """noise [B,3,H,W] -> (z, logdet [B]). Raises NumericError naming the
        layer that first produced non-finite values."""
        x = noise
        logdet = Tensor(np.zeros(noise.shape[0], dtype=noise.dtype))
        lin_clean = None
        if self.gamma is not None:
            noisy = T.add(ctx.clean, noise)
            lin_noisy, ld_gamma = self.gamma.forward(noisy)
            lin_clean, _ = self.gamma.forward(ctx.clean)
            x = T.sub(lin_noisy, lin_clean)
            logdet = T.add(logdet, ld_gamma)
            _check_finite(x.data, "gamma preprocess (inverse_gamma)")
        ctx_m = self._masked_ctx(ctx, lin_clean)
        for i, layer in enumerate(self.layers):
            x, ld = layer.forward(x, ctx_m)
            _check_finite(x.data, f"layer {i} ({layer.name})")
            _check_finite(ld.data, f"logdet of layer {i} ({layer.name})")
            logdet = T.add(logdet, ld)
        return x, logdet

    # -- sampling direction --------------------------------------------------
    def inverse(self, z, ctx):
        """z [B,3,H,W] -> noise [B,3,H,W]; gradient-free."""
        with T.no_grad():
            lin_clean = None
            if self.gamma is not None:
                lin_clean, _ = self.gamma.forward(ctx.clean)
            ctx_m = self._masked_ctx(ctx, lin_clean)
            x = z
            for i in range(len(self.layers) - 1, -1, -1):
                layer = self.layers[i]
                x = layer.inverse(x, ctx_m)
                _check_finite(x.data, f"inverse of layer {i} ({layer.name})")
            if self.gamma is not None:
                noisy = self.gamma.inverse(T.add(lin_clean, x))
                x = T.sub(noisy, ctx.clean)
                _check_finite(x.data, "inverse of gamma preprocess")
        return x

    # -- parameters ----------------------------------------------------------
    def parameters(self):
        out = []
        for i, layer in enumerate(self.layers):
            out.extend((f"layers.{i}.{n}", p) for n, p in layer.parameters())
        if self.gamma is not None:
            out.extend((f"gamma.{n}", p) for n, p in self.gamma.parameters())
        return out

    def param_count(self):
        return int(sum(p.data.size for _, p in self.parameters()))

    def astype(self, dtype):
        """Cast all parameters in place (used by float64 gradient checks)."""
        for _, p in self.parameters():
            p.data = p.data.astype(dtype)
        return self

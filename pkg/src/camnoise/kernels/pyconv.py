"""Pure-numpy conv2d kernels (im2col + BLAS matmul).

Same-padded 2-D cross-correlation over NCHW batches, the only convolution
variant the conditioner networks need. The forward pass returns the im2col
matrix so the weight gradient can reuse it instead of re-assembling windows.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BACKEND = "numpy"


def _im2col(x, kh, kw):
    """[B,C,H,W] -> [B*H*W, C*kh*kw] patch matrix under same-padding."""
    b, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (kh // 2, kh // 2), (kw // 2, kw // 2)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))  # [B,C,H,W,kh,kw]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5))
    return cols.reshape(b * h * w, c * kh * kw)


def conv2d_forward(x, w):
    """Cross-correlate x [B,Cin,H,W] with w [Cout,Cin,kh,kw]; returns (y, ctx)."""
    b, _, h, wd = x.shape
    cout = w.shape[0]
    cols = _im2col(x, w.shape[2], w.shape[3])
    y = cols @ w.reshape(cout, -1).T
    return np.ascontiguousarray(y.reshape(b, h, wd, cout).transpose(0, 3, 1, 2)), cols


def conv2d_grad_input(gy, w):
    """Gradient w.r.t. x: correlate gy with the flipped, channel-swapped kernel."""
    wt = np.ascontiguousarray(w.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
    gx, _ = conv2d_forward(gy, wt)
    return gx


def conv2d_grad_weight(x, gy, kh, kw, ctx=None):
    """Gradient w.r.t. w; reuses the forward's im2col matrix when available."""
    cols = ctx if ctx is not None else _im2col(x, kh, kw)
    cout = gy.shape[1]
    gyr = gy.transpose(0, 2, 3, 1).reshape(-1, cout)
    return (gyr.T @ cols).reshape(cout, x.shape[1], kh, kw)

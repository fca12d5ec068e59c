"""Kernel backend selection.

The conv2d forward/backward loops are the hot path of conditioner-network
training. Two interchangeable implementations exist: a compiled Cython
extension with direct loops, and a numpy im2col formulation that rides the
BLAS matmul. At the channel widths this package uses (4-64), the BLAS route
benchmarks faster than the compiled loops (see benchmarks/bench_kernels.py),
so it is the default. Selection happens once at import:

    CAMNOISE_KERNELS=auto   (default) the numpy im2col backend
    CAMNOISE_KERNELS=py     same as auto, stated explicitly
    CAMNOISE_KERNELS=cy     require the compiled extension

Both backends implement the same contract and agree to float rounding.
"""

import os

import numpy as np

from . import pyconv

_choice = os.environ.get("CAMNOISE_KERNELS", "auto")
_ext = None
if _choice not in ("auto", "py", "cy"):
    raise ValueError(f"CAMNOISE_KERNELS must be auto|py|cy, got {_choice!r}")
if _choice == "cy":
    try:
        from . import _convext as _ext
    except ImportError:
        raise ImportError(
            "CAMNOISE_KERNELS=cy but the compiled extension is not built; "
            "reinstall with a C compiler or use CAMNOISE_KERNELS=py"
        ) from None


def backend_name():
    """Name of the active backend: 'cython' or 'numpy'."""
    return "cython" if _ext is not None else "numpy"


def _c(a):
    return np.ascontiguousarray(a)


def conv2d_forward(x, w):
    """Same-padded correlation of x [B,Cin,H,W] with w [Cout,Cin,kh,kw].

    Returns (y, ctx); ctx is backend-private state reused by grad_weight.
    """
    if _ext is None:
        return pyconv.conv2d_forward(x, w)
    x, w = _c(x), _c(w)
    out = np.zeros((x.shape[0], w.shape[0], x.shape[2], x.shape[3]), dtype=x.dtype)
    _ext.conv2d_forward(x, w, out)
    return out, None


def conv2d_grad_input(gy, w):
    """d(loss)/dx given d(loss)/dy."""
    if _ext is None:
        return pyconv.conv2d_grad_input(gy, w)
    wt = _c(w.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
    gy = _c(gy)
    gx = np.zeros((gy.shape[0], wt.shape[0], gy.shape[2], gy.shape[3]), dtype=gy.dtype)
    _ext.conv2d_forward(gy, wt, gx)
    return gx


def conv2d_grad_weight(x, gy, kh, kw, ctx=None):
    """d(loss)/dw given d(loss)/dy."""
    if _ext is None:
        return pyconv.conv2d_grad_weight(x, gy, kh, kw, ctx)
    x, gy = _c(x), _c(gy)
    gw = np.zeros((gy.shape[1], x.shape[1], kh, kw), dtype=x.dtype)
    _ext.conv2d_grad_weight(x, gy, gw)
    return gw

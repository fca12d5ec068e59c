"""Benchmark the compiled conv kernels against the pure-numpy fallback.

Runs each backend on the shapes that dominate training (conditioner nets on
batched patches), reports throughput side by side, and checks that the two
backends agree numerically.

Usage: python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from camnoise.kernels import pyconv

try:
    from camnoise.kernels import _convext
except ImportError:
    _convext = None

SHAPES = [
    # (B, Cin, Cout, H, W, k) — conditioner-net layers at common patch sizes
    (128, 4, 32, 8, 8, 3),
    (128, 32, 32, 8, 8, 3),
    (128, 32, 32, 16, 16, 3),
    (32, 32, 32, 32, 32, 3),
    (128, 4, 46, 8, 8, 3),
]


def numpy_ops(x, w, gy):
    y, ctx = pyconv.conv2d_forward(x, w)
    gx = pyconv.conv2d_grad_input(gy, w)
    gw = pyconv.conv2d_grad_weight(x, gy, w.shape[2], w.shape[3], ctx)
    return y, gx, gw


def cython_ops(x, w, gy):
    y = np.zeros((x.shape[0], w.shape[0], x.shape[2], x.shape[3]),
                 dtype=x.dtype)
    _convext.conv2d_forward(x, w, y)
    wt = np.ascontiguousarray(w.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
    gx = np.zeros((gy.shape[0], wt.shape[0], gy.shape[2], gy.shape[3]),
                  dtype=gy.dtype)
    _convext.conv2d_forward(gy, wt, gx)
    gw = np.zeros_like(w)
    _convext.conv2d_grad_weight(x, gy, gw)
    return y, gx, gw


def time_fn(fn, x, w, gy, repeats):
    fn(x, w, gy)  # warmup
    t0 = time.perf_counter()
    for _ in range(repeats):
        out = fn(x, w, gy)
    return (time.perf_counter() - t0) / repeats, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    print(f"{'shape (B,Cin,Cout,HxW,k)':34s} {'numpy':>10s} {'cython':>10s} "
          f"{'speedup':>8s} {'max|diff|':>10s}")
    for B, cin, cout, h, w_, k in SHAPES:
        x = rng.standard_normal((B, cin, h, w_)).astype(np.float32)
        w = rng.standard_normal((cout, cin, k, k)).astype(np.float32) * 0.1
        gy = rng.standard_normal((B, cout, h, w_)).astype(np.float32)
        t_np, out_np = time_fn(numpy_ops, x, w, gy, args.repeats)
        label = f"({B},{cin},{cout},{h}x{w_},{k})"
        if _convext is None:
            print(f"{label:34s} {t_np*1e3:9.2f}ms {'n/a':>10s} {'':>8s}")
            continue
        t_cy, out_cy = time_fn(cython_ops, x, w, gy, args.repeats)
        diff = max(float(np.abs(a - b).max())
                   for a, b in zip(out_np, out_cy))
        print(f"{label:34s} {t_np*1e3:9.2f}ms {t_cy*1e3:9.2f}ms "
              f"{t_np/t_cy:7.2f}x {diff:10.2e}")
    if _convext is None:
        print("\ncompiled extension not built; only the numpy fallback ran")


if __name__ == "__main__":
    main()

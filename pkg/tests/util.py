"""Shared test helpers: realistic parameter randomization, finite-difference
log-det oracles, context/dataset builders."""

import numpy as np

from camnoise.context import ConditioningContext
from camnoise.data import SynthIspConfig, generate_records, scene_texture
from camnoise.data.pipeline import assign_splits, dataset_from_records
from camnoise.tensor import Tensor


def randomize_params(obj, rng, head_scale=0.025, weight_scale=0.05,
                     vector_scale=0.3):
    """Perturb parameters at magnitudes a trained model actually reaches.

    Zero-init heads (w2) stay small so coupling scales keep realistic slopes;
    float32 round-trips degrade as 1/min_slope, so hotter values than a
    trained model would reach make inversion-precision tests meaningless.
    """
    for name, p in obj.parameters():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "w2":
            scale = head_scale
        elif p.data.ndim >= 2:
            scale = weight_scale
        else:
            scale = vector_scale
        p.data = p.data + rng.normal(0.0, scale, p.data.shape).astype(
            p.data.dtype)


def fd_logdet(forward, x, eps=1e-4):
    """log|det J| of a flattened map via central-difference Jacobian."""
    x = np.asarray(x, dtype=np.float64)
    flat = x.reshape(-1)
    n = flat.size
    jac = np.zeros((n, n))
    for j in range(n):
        hi = flat.copy()
        lo = flat.copy()
        hi[j] += eps
        lo[j] -= eps
        fh = np.asarray(forward(hi.reshape(x.shape)), dtype=np.float64)
        fl = np.asarray(forward(lo.reshape(x.shape)), dtype=np.float64)
        jac[:, j] = (fh - fl).reshape(-1) / (2 * eps)
    sign, ld = np.linalg.slogdet(jac)
    if sign <= 0:
        return -np.inf
    return ld


def make_ctx(rng, batch, h, w, n_cam, n_iso, dtype=np.float32,
             clean_range=(0.1, 0.9)):
    lo, hi = clean_range
    clean = rng.uniform(lo, hi, (batch, 3, h, w)).astype(dtype)
    cam = rng.integers(0, n_cam, batch)
    iso = rng.integers(0, n_iso, batch)
    return ConditioningContext.from_indices(clean, cam, iso, n_cam, n_iso,
                                            dtype)


def interior_texture(seed, scene_id, h, w):
    """Scene texture compressed into [0.25, 0.75] so raw noise never clips;
    used where an exact AWGN oracle is needed."""
    return np.clip(scene_texture(seed, scene_id, h, w) * 0.5 + 0.25,
                   0.25, 0.75)


def awgn_dataset(sigma, n_per_cell=200, patch=16, n_cam=1, n_iso=1, seed=0,
                 train_frac=0.8):
    cfg = SynthIspConfig.awgn(sigma, n_cam=n_cam, n_iso=n_iso, seed=seed)
    recs = generate_records(cfg, n_per_cell, (patch, patch),
                            texture=interior_texture)
    labels = assign_splits([(r.camera_id, r.iso) for r in recs], train_frac,
                           seed)
    return dataset_from_records(recs, cfg.cameras, cfg.isos, labels), cfg


def grid_dataset(sigmas, n_per_cell=200, patch=16, seed=0, train_frac=0.8):
    """Per-cell AWGN grid: sigmas is an [n_cam, n_iso] array."""
    sigmas = np.asarray(sigmas, dtype=np.float64)
    n_cam, n_iso = sigmas.shape
    cfg = SynthIspConfig.identity(0.0, sigmas ** 2, n_cam=n_cam, n_iso=n_iso,
                                  seed=seed)
    recs = generate_records(cfg, n_per_cell, (patch, patch),
                            texture=interior_texture)
    labels = assign_splits([(r.camera_id, r.iso) for r in recs], train_frac,
                           seed)
    return dataset_from_records(recs, cfg.cameras, cfg.isos, labels), cfg


def numeric_grad(fn, arr, eps=1e-4):
    """Central-difference gradient of scalar fn at a float64 array."""
    arr = np.asarray(arr, dtype=np.float64)
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    while not it.finished:
        ix = it.multi_index
        hi = arr.copy()
        lo = arr.copy()
        hi[ix] += eps
        lo[ix] -= eps
        g[ix] = (fn(hi) - fn(lo)) / (2 * eps)
        it.iternext()
    return g


def max_roundtrip_err(layer, x, ctx):
    y, _ = layer.forward(Tensor(x), ctx)
    xb = layer.inverse(y, ctx)
    return float(np.max(np.abs(xb.data - x)))

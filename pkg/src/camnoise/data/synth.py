"""Synthetic ISP: clean raw textures, heteroscedastic raw noise, and a
controllable rendering pipeline (white balance -> color matrix -> clip ->
tone curve -> gamma -> quantize).

Because every stage is known and seeded, the exact sRGB noise distribution of
a generated dataset can be re-sampled on demand: regenerate the raw texture
from its scene id, draw fresh raw noise, and re-render. Tests use that as the
ground-truth oracle.
"""

import json
import os

import numpy as np

from .pipeline import assign_splits
from .records import (DataError, DatasetManifest, NoisePatchRecord,
                      blob_offset, write_blob)


class SynthIspConfig:
    def __init__(self, seed, cameras, isos, beta1, beta2, wb_gains,
                 color_matrix, gamma, tone_knee, tone_strength):
        self.seed = int(seed)
        self.cameras = [int(c) for c in cameras]
        self.isos = [int(g) for g in isos]
        self.beta1 = np.asarray(beta1, dtype=np.float64)
        self.beta2 = np.asarray(beta2, dtype=np.float64)
        self.wb_gains = np.asarray(wb_gains, dtype=np.float64)
        self.color_matrix = np.asarray(color_matrix, dtype=np.float64)
        self.gamma = float(gamma)
        self.tone_knee = float(tone_knee)
        self.tone_strength = float(tone_strength)
        self.validate()

    def validate(self):
        n_cam, n_iso = len(self.cameras), len(self.isos)
        if self.beta1.shape != (n_cam, n_iso) or self.beta2.shape != (n_cam, n_iso):
            raise DataError("beta tables must be [n_cam, n_iso]")
        if np.any(self.beta1 < 0) or np.any(self.beta2 < 0):
            raise DataError("beta1/beta2 must be non-negative")
        if self.wb_gains.shape != (n_cam, 3) or np.any(self.wb_gains <= 0):
            raise DataError("wb_gains must be positive [n_cam, 3]")
        if self.color_matrix.shape != (n_cam, 3, 3):
            raise DataError("color_matrix must be [n_cam, 3, 3]")
        if not np.allclose(self.color_matrix.sum(axis=2), 1.0, atol=1e-9):
            raise DataError("color matrix rows must sum to 1")
        if self.gamma <= 0:
            raise DataError("gamma must be positive")
        if not (0.0 <= self.tone_strength < 1.0):
            raise DataError("tone_strength must lie in [0, 1)")
        if self.tone_strength > 0 and not (0.0 < self.tone_knee < 1.0):
            raise DataError("tone_knee must lie in (0, 1) when the curve bends")

    @property
    def n_cam(self):
        return len(self.cameras)

    @property
    def n_iso(self):
        return len(self.isos)

    def to_json(self):
        doc = {
            "seed": self.seed,
            "cameras": self.cameras,
            "isos": self.isos,
            "beta1": self.beta1.tolist(),
            "beta2": self.beta2.tolist(),
            "wb_gains": self.wb_gains.tolist(),
            "color_matrix": self.color_matrix.tolist(),
            "gamma": self.gamma,
            "tone_knee": self.tone_knee,
            "tone_strength": self.tone_strength,
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(d["seed"], d["cameras"], d["isos"], d["beta1"], d["beta2"],
                   d["wb_gains"], d["color_matrix"], d["gamma"],
                   d["tone_knee"], d["tone_strength"])

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_json())

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_json(f.read())

    # -- stock configurations ------------------------------------------------
    @classmethod
    def default(cls, n_cam=5, n_iso=5, seed=0):
        """Heteroscedastic grid behind a nonlinear ISP (tone curve + gamma)."""
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC0F]))
        isos = [100 * 2 ** i for i in range(n_iso)]
        cam_factor = 0.8 + 0.1 * np.arange(n_cam)
        iso_factor = 1.0 + 0.7 * np.arange(n_iso)
        beta1 = np.outer(cam_factor, 0.0025 * iso_factor)
        beta2 = np.outer(cam_factor, 0.008 * iso_factor) ** 2
        wb = np.stack([rng.uniform(1.6, 2.2, n_cam), np.ones(n_cam),
                       rng.uniform(1.3, 1.9, n_cam)], axis=1)
        base = np.array([[1.45, -0.30, -0.15],
                         [-0.25, 1.50, -0.25],
                         [-0.10, -0.35, 1.45]])
        mats = base[None] + rng.uniform(-0.05, 0.05, (n_cam, 3, 3))
        mats = mats / mats.sum(axis=2, keepdims=True)
        return cls(seed, list(range(n_cam)), isos, beta1, beta2, wb, mats,
                   gamma=2.2, tone_knee=0.85, tone_strength=0.6)

    @classmethod
    def identity(cls, beta1, beta2, n_cam=1, n_iso=1, seed=0):
        """Pass-through ISP: unit gains, identity matrix, gamma 1, no tone."""
        b1 = np.broadcast_to(np.asarray(beta1, dtype=np.float64),
                             (n_cam, n_iso)).copy()
        b2 = np.broadcast_to(np.asarray(beta2, dtype=np.float64),
                             (n_cam, n_iso)).copy()
        return cls(seed, list(range(n_cam)),
                   [100 * 2 ** i for i in range(n_iso)], b1, b2,
                   np.ones((n_cam, 3)), np.tile(np.eye(3), (n_cam, 1, 1)),
                   gamma=1.0, tone_knee=1.0, tone_strength=0.0)

    @classmethod
    def awgn(cls, sigma, n_cam=1, n_iso=1, seed=0):
        return cls.identity(0.0, float(sigma) ** 2, n_cam, n_iso, seed)


def _bilinear_upsample(field, h, w):
    lh, lw = field.shape
    gy = np.linspace(0, lh - 1, h)
    gx = np.linspace(0, lw - 1, w)
    y0 = np.clip(gy.astype(int), 0, lh - 2)
    x0 = np.clip(gx.astype(int), 0, lw - 2)
    fy = (gy - y0)[:, None]
    fx = (gx - x0)[None, :]
    a = field[y0][:, x0]
    b = field[y0][:, x0 + 1]
    c = field[y0 + 1][:, x0]
    d = field[y0 + 1][:, x0 + 1]
    return (a * (1 - fy) * (1 - fx) + b * (1 - fy) * fx
            + c * fy * (1 - fx) + d * fy * fx)


def scene_texture(seed, scene_id, h, w):
    """Deterministic clean raw patch [3,h,w] in [0,1]: oriented ramps plus
    band-limited noise, with offsets spread so the corpus covers the full
    intensity range."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7E7, scene_id]))
    yy, xx = np.meshgrid(np.linspace(0, 1, h), np.linspace(0, 1, w),
                         indexing="ij")
    out = np.empty((3, h, w))
    anchor = rng.uniform(0.15, 0.85)
    for c in range(3):
        ang = rng.uniform(0, 2 * np.pi)
        amp = rng.uniform(0.1, 0.4)
        ramp = amp * ((xx * np.cos(ang) + yy * np.sin(ang))
                      - 0.5 * (np.cos(ang) + np.sin(ang)))
        low = rng.standard_normal((max(2, h // 4 + 1), max(2, w // 4 + 1)))
        field = _bilinear_upsample(low, h, w) * rng.uniform(0.03, 0.09)
        off = np.clip(anchor + rng.uniform(-0.12, 0.12), 0.1, 0.9)
        out[c] = off + ramp + field
    return np.clip(out, 0.02, 0.98)


def apply_isp(cfg, camera_index, raw):
    """Render a linear-domain [3,h,w] image to sRGB u8 through the ISP."""
    v = raw * cfg.wb_gains[camera_index][:, None, None]
    v = np.einsum("oc,chw->ohw", cfg.color_matrix[camera_index], v)
    v = np.clip(v, 0.0, 1.0)
    if cfg.tone_strength > 0:
        k, s = cfg.tone_knee, cfg.tone_strength
        bent = v - s * (v - k) ** 2 / (2.0 * (1.0 - k))
        v = np.where(v <= k, v, bent)
    v = np.power(v, 1.0 / cfg.gamma)
    return np.minimum(np.floor(v * 256.0), 255.0).astype(np.uint8)


def render_pair(cfg, ci, gi, scene_id, rng, h, w, texture=scene_texture):
    """One clean/noisy u8 pair for cell (ci, gi); rng drives the raw noise."""
    raw = texture(cfg.seed, scene_id, h, w)
    var = cfg.beta1[ci, gi] * raw + cfg.beta2[ci, gi]
    noisy_raw = raw + rng.standard_normal(raw.shape) * np.sqrt(var)
    return apply_isp(cfg, ci, raw), apply_isp(cfg, ci, noisy_raw)


def generate_records(cfg, n_per_cell, patch_hw=(32, 32),
                     texture=scene_texture):
    """All cells' records, deterministic in cfg.seed (per-cell noise streams)."""
    h, w = patch_hw
    records = []
    for ci, cam in enumerate(cfg.cameras):
        for gi, iso in enumerate(cfg.isos):
            rng = np.random.default_rng(
                np.random.SeedSequence([cfg.seed, 0x5EED, ci, gi]))
            for n in range(n_per_cell):
                scene_id = (ci * cfg.n_iso + gi) * n_per_cell + n
                clean_u8, noisy_u8 = render_pair(cfg, ci, gi, scene_id, rng,
                                                 h, w, texture)
                records.append(NoisePatchRecord(clean_u8, noisy_u8, cam, iso,
                                                scene_id))
    return records


def write_split_blobs(records, labels, cameras, isos, out_dir):
    """Write one blob per split plus the manifest; returns the manifest."""
    os.makedirs(out_dir, exist_ok=True)
    h, w = records[0].shape[1:]
    blobs, manifest_records = {}, []
    per_split = {"train": [], "val": []}
    for rec, lab in zip(records, labels):
        per_split[lab].append(rec)
    positions = {s: 0 for s in per_split}
    for rec, lab in zip(records, labels):
        idx = positions[lab]
        positions[lab] += 1
        manifest_records.append({
            "split": lab, "blob": lab, "index": idx,
            "offset": blob_offset(idx, h, w),
            "camera_id": rec.camera_id, "iso": rec.iso,
            "scene_id": rec.scene_id,
        })
    for split, recs in per_split.items():
        if not recs:
            continue
        fname = f"{split}.nfpd"
        write_blob(os.path.join(out_dir, fname), recs)
        blobs[split] = fname
    manifest = DatasetManifest([int(c) for c in cameras],
                               [int(g) for g in isos],
                               manifest_records, blobs)
    manifest.save(os.path.join(out_dir, "manifest.json"))
    return manifest


def synth_isp_generate(cfg, n_per_cell, out_dir, patch_hw=(32, 32),
                       train_frac=0.8, texture=scene_texture):
    """Generate, stratify, and write a synthetic dataset + ground-truth sidecar."""
    if n_per_cell < 1:
        raise DataError("n_per_cell must be >= 1")
    records = generate_records(cfg, n_per_cell, patch_hw, texture)
    keys = [(r.camera_id, r.iso) for r in records]
    labels = assign_splits(keys, train_frac, cfg.seed)
    manifest = write_split_blobs(records, labels, cfg.cameras, cfg.isos,
                                 out_dir)
    cfg.save(os.path.join(out_dir, "synth_config.json"))
    return manifest

"""Synthetic ISP generator: config validation, rendering stages, determinism,
and the resampling oracle."""

import numpy as np
import pytest

from camnoise.data.records import DataError
from camnoise.data.synth import (SynthIspConfig, apply_isp, generate_records,
                                 render_pair, scene_texture,
                                 synth_isp_generate)

from util import interior_texture


def test_config_validation():
    cfg = SynthIspConfig.default(n_cam=2, n_iso=2)
    with pytest.raises(DataError, match="beta"):
        SynthIspConfig(0, [0, 1], [100], cfg.beta1, cfg.beta2, cfg.wb_gains,
                       cfg.color_matrix, 2.2, 0.85, 0.6)
    bad = SynthIspConfig.default(n_cam=2, n_iso=2)
    bad.beta1[0, 0] = -1.0
    with pytest.raises(DataError, match="non-negative"):
        bad.validate()
    bad = SynthIspConfig.default(n_cam=2, n_iso=2)
    bad.wb_gains[0, 0] = 0.0
    with pytest.raises(DataError, match="wb_gains"):
        bad.validate()
    bad = SynthIspConfig.default(n_cam=2, n_iso=2)
    bad.color_matrix[0, 0, 0] += 0.1
    with pytest.raises(DataError, match="sum to 1"):
        bad.validate()
    bad = SynthIspConfig.default(n_cam=2, n_iso=2)
    bad.gamma = 0.0
    with pytest.raises(DataError, match="gamma"):
        bad.validate()
    bad = SynthIspConfig.default(n_cam=2, n_iso=2)
    bad.tone_strength = 1.0
    with pytest.raises(DataError, match="tone_strength"):
        bad.validate()
    bad = SynthIspConfig.default(n_cam=2, n_iso=2)
    bad.tone_knee = 0.0
    with pytest.raises(DataError, match="tone_knee"):
        bad.validate()


def test_config_json_round_trip():
    cfg = SynthIspConfig.default(n_cam=3, n_iso=2, seed=5)
    again = SynthIspConfig.from_json(cfg.to_json())
    assert again.to_json() == cfg.to_json()
    assert np.array_equal(again.beta1, cfg.beta1)
    assert np.array_equal(again.color_matrix, cfg.color_matrix)
    assert again.isos == cfg.isos


def test_texture_deterministic_and_in_range():
    a = scene_texture(0, 7, 16, 16)
    b = scene_texture(0, 7, 16, 16)
    assert np.array_equal(a, b)
    c = scene_texture(0, 8, 16, 16)
    assert not np.array_equal(a, c)
    assert a.shape == (3, 16, 16)
    assert np.all((a >= 0.02) & (a <= 0.98))


def test_texture_corpus_covers_intensity_range():
    vals = np.concatenate([scene_texture(0, i, 8, 8).ravel()
                           for i in range(200)])
    assert vals.min() < 0.15 and vals.max() > 0.85
    # Mass everywhere across the middle of the range.
    hist, _ = np.histogram(vals, bins=8, range=(0.1, 0.9))
    assert np.all(hist > 0)


def test_identity_isp_is_quantization_only():
    cfg = SynthIspConfig.identity(0.0, 0.0)
    raw = interior_texture(0, 3, 8, 8)
    u8 = apply_isp(cfg, 0, raw)
    assert np.array_equal(u8, np.minimum(np.floor(raw * 256), 255).astype(np.uint8))


def test_zero_noise_renders_equal_pairs():
    cfg = SynthIspConfig.identity(0.0, 0.0, n_cam=2, n_iso=2)
    clean_u8, noisy_u8 = render_pair(cfg, 1, 0, 5, np.random.default_rng(0),
                                     8, 8)
    assert np.array_equal(clean_u8, noisy_u8)


def test_tone_curve_monotone_and_continuous():
    cfg = SynthIspConfig.default(n_cam=1, n_iso=1)
    v = np.linspace(0, 1, 2001)
    k, s = cfg.tone_knee, cfg.tone_strength
    bent = np.where(v <= k, v, v - s * (v - k) ** 2 / (2 * (1 - k)))
    assert np.all(np.diff(bent) > 0)
    # C1 at the knee: slopes match from both sides.
    eps = 1e-7
    left = (k - (k - eps)) / eps
    right = ((k + eps) - s * eps ** 2 / (2 * (1 - k)) - k) / eps
    assert abs(left - right) < 1e-5
    # Strength < 1 keeps the end slope positive: f'(1) = 1 - s.
    assert bent[-1] < 1.0


def test_apply_isp_quantize_law():
    cfg = SynthIspConfig.identity(0.0, 0.0)
    raw = np.full((3, 2, 2), 1.0)
    assert np.all(apply_isp(cfg, 0, raw) == 255)  # floor(256) clamps to 255
    raw = np.full((3, 2, 2), 100.4 / 256)
    assert np.all(apply_isp(cfg, 0, raw) == 100)


def test_gamma_compresses_highlights():
    # Gamma encoding amplifies shadows and compresses highlights, so equal raw
    # noise produces smaller sRGB noise at high intensity.
    cfg = SynthIspConfig.identity(0.0, 0.05 ** 2, seed=0)
    cfg.gamma = 2.2

    def srgb_std(level):
        rng = np.random.default_rng(1)
        diffs = []
        for _ in range(200):
            raw = np.full((3, 8, 8), level)
            noisy_raw = raw + rng.standard_normal(raw.shape) * 0.05
            diff = (apply_isp(cfg, 0, noisy_raw).astype(np.float64)
                    - apply_isp(cfg, 0, raw).astype(np.float64)) / 256.0
            diffs.append(diff)
        return np.std(diffs)

    assert srgb_std(0.1) > 2.0 * srgb_std(0.85)


def test_render_pair_resamples_same_distribution():
    # Fresh rng, same scene: identical clean plane, different noise draw.
    cfg = SynthIspConfig.identity(0.0, 0.1 ** 2)
    c1, n1 = render_pair(cfg, 0, 0, 12, np.random.default_rng(0), 8, 8)
    c2, n2 = render_pair(cfg, 0, 0, 12, np.random.default_rng(99), 8, 8)
    assert np.array_equal(c1, c2)
    assert not np.array_equal(n1, n2)

    # Large-sample std of resampled noise matches the configured sigma.
    rng = np.random.default_rng(7)
    diffs = []
    for _ in range(300):
        c, n = render_pair(cfg, 0, 0, 12, rng, 8, 8,
                           texture=interior_texture)
        diffs.append(n.astype(np.float64) - c.astype(np.float64))
    std = np.std(np.stack(diffs)) / 256.0
    assert abs(std - 0.1) / 0.1 < 0.03


def test_awgn_dataset_noise_std():
    cfg = SynthIspConfig.awgn(0.05)
    recs = generate_records(cfg, 150, (16, 16), texture=interior_texture)
    noise = np.stack([r.noisy.astype(np.float64) - r.clean.astype(np.float64)
                      for r in recs]) / 256.0
    # u8 differencing adds two independent quantization jitters
    # (variance 2/12/256^2), tiny next to sigma^2.
    expected = np.sqrt(0.05 ** 2 + 2 / 12 / 256 ** 2)
    assert abs(noise.std() - expected) / expected < 0.03


def test_generate_records_deterministic():
    cfg = SynthIspConfig.default(n_cam=2, n_iso=2, seed=3)
    a = generate_records(cfg, 3, (8, 8))
    b = generate_records(cfg, 3, (8, 8))
    assert len(a) == len(b) == 2 * 2 * 3
    assert all(x == y for x, y in zip(a, b))
    # Scene ids are disjoint across cells -> every clean patch is unique.
    ids = [r.scene_id for r in a]
    assert len(set(ids)) == len(ids)


def test_synth_isp_generate_writes_reproducible_tree(tmp_path):
    cfg = SynthIspConfig.default(n_cam=2, n_iso=2, seed=1)
    d1, d2 = tmp_path / "a", tmp_path / "b"
    synth_isp_generate(cfg, 4, d1, patch_hw=(8, 8))
    synth_isp_generate(cfg, 4, d2, patch_hw=(8, 8))
    for name in ("train.nfpd", "val.nfpd", "manifest.json",
                 "synth_config.json"):
        assert (d1 / name).read_bytes() == (d2 / name).read_bytes(), name
    from camnoise.data.pipeline import load_dataset
    ds, manifest = load_dataset(d1)
    assert len(ds) == 16
    assert ds.cells_present() == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert manifest.cells_in("val") == {(0, 0), (0, 1), (1, 0), (1, 1)}


def test_synth_isp_generate_rejects_empty():
    cfg = SynthIspConfig.default(n_cam=1, n_iso=1)
    with pytest.raises(DataError, match="n_per_cell"):
        synth_isp_generate(cfg, 0, "/tmp/unused")

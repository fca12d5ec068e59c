"""Command-line entry point: synthesize data, train, evaluate, sample, and
emit analysis curves.

Config resolution: built-in defaults < flat JSON config file < command-line
flags. Unknown config keys are rejected; the effective config is echoed to
the output directory so any run can be reproduced exactly.

Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
"""

import argparse
import json
import os
import sys

import numpy as np
from PIL import Image

from .checkpoint import CheckpointError, load_checkpoint, restore_into
from .context import ConditioningContext, ContextError
from .data import (DataError, SynthIspConfig, ingest_pngs, load_dataset,
                   synth_isp_generate)
from .kernels import backend_name
from .metrics import (MetricsError, cell_curve, collect_real_sampled,
                      marginal_kl, variance_vs_intensity, write_per_cell_csv,
                      write_summary_csv)
from .model import NumericError
from .plot import write_svg_lines
from .train import TrainConfig, sample_noise, train
from .zoo import ZooError, build_from_spec, build_model, spec_from_json, \
    spec_to_json

DEFAULTS = {
    "model": None, "dataset": None, "out": None, "seed": 0,
    "epochs": 20, "batch": 128, "lr": 1e-3, "threads": None,
    "cells": "5x5", "curves": False, "count": 16,
    "n_per_cell": 200, "patch": 32, "train_frac": 0.8,
    "clip_norm": None, "eval_interval": 1,
    "clean_dir": None, "noisy_dir": None, "meta": None, "stride": None,
}
_INT_KEYS = ("seed", "epochs", "batch", "threads", "count", "n_per_cell",
             "patch", "eval_interval", "stride")
_FLOAT_KEYS = ("lr", "train_frac", "clip_norm")

_thread_limiter = None  # keeps the BLAS thread cap alive for the process


class ConfigError(ValueError):
    pass


def resolve_config(args):
    """defaults < config file < explicit CLI flags; unknown keys rejected."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            with open(args.config, "r", encoding="utf-8") as f:
                doc = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}")
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a flat JSON object")
        unknown = sorted(set(doc) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        cfg.update(doc)
    for key in DEFAULTS:
        v = getattr(args, key, None)
        if key == "curves":
            if v:
                cfg[key] = True
        elif v is not None:
            cfg[key] = v
    for key in _INT_KEYS:
        if cfg[key] is not None:
            try:
                cfg[key] = int(cfg[key])
            except (TypeError, ValueError):
                raise ConfigError(f"config key {key!r} must be an integer")
    for key in _FLOAT_KEYS:
        if cfg[key] is not None:
            try:
                cfg[key] = float(cfg[key])
            except (TypeError, ValueError):
                raise ConfigError(f"config key {key!r} must be a number")
    return cfg


def _require(cfg, *keys):
    for key in keys:
        if cfg.get(key) in (None, ""):
            raise ConfigError(f"missing required option --{key.replace('_','-')}")


def _parse_cells(s):
    parts = str(s).lower().split("x")
    try:
        n_cam, n_iso = (int(p) for p in parts)
    except ValueError:
        raise ConfigError(f"--cells must look like 5x5, got {s!r}")
    if n_cam < 1 or n_iso < 1:
        raise ConfigError("--cells dimensions must be >= 1")
    return n_cam, n_iso


def _apply_threads(n):
    global _thread_limiter
    if n is None:
        return
    if n < 1:
        raise ConfigError("--threads must be >= 1")
    try:
        from threadpoolctl import threadpool_limits
        _thread_limiter = threadpool_limits(limits=n)
    except ImportError:
        print("note: threadpoolctl not installed; --threads ignored",
              file=sys.stderr)


def echo_config(cfg, command, out_dir):
    doc = dict(cfg)
    doc["command"] = command
    doc["kernel_backend"] = backend_name()
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "run_config.json"), "w",
              encoding="utf-8") as f:
        f.write(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _load_model_token(token, dataset, seed):
    """A model token is either a training run directory (model.json +
    checkpoint) or a zoo model name (fresh initialization)."""
    if os.path.isdir(token):
        spec_path = os.path.join(token, "model.json")
        if not os.path.isfile(spec_path):
            raise ConfigError(f"run directory {token} has no model.json")
        with open(spec_path, "r", encoding="utf-8") as f:
            spec = spec_from_json(f.read())
        model = build_from_spec(spec, seed=seed)
        ckpt = os.path.join(token, "checkpoint_best.nfck")
        if not os.path.isfile(ckpt):
            ckpt = os.path.join(token, "checkpoint_last.nfck")
        if os.path.isfile(ckpt):
            restore_into(model.parameters(), load_checkpoint(ckpt))
        label = spec["name"]
    else:
        model = build_model(token, dataset.n_cam, dataset.n_iso, seed=seed)
        label = token
    if model.n_cam != dataset.n_cam or model.n_iso != dataset.n_iso:
        raise ConfigError(
            f"model grid {model.n_cam}x{model.n_iso} does not match dataset "
            f"grid {dataset.n_cam}x{dataset.n_iso}")
    return label, model


def _clean_center(u8):
    return (u8.astype(np.float32) + 0.5) / 256.0


def _save_png(path, u8_chw):
    Image.fromarray(u8_chw.transpose(1, 2, 0)).save(path)


def cmd_synth_data(cfg):
    _require(cfg, "out")
    n_cam, n_iso = _parse_cells(cfg["cells"])
    isp = SynthIspConfig.default(n_cam, n_iso, seed=cfg["seed"])
    manifest = synth_isp_generate(isp, cfg["n_per_cell"], cfg["out"],
                                  patch_hw=(cfg["patch"], cfg["patch"]),
                                  train_frac=cfg["train_frac"])
    echo_config(cfg, "synth-data", cfg["out"])
    print(f"wrote {len(manifest.records)} patches "
          f"({n_cam}x{n_iso} cells) to {cfg['out']}")
    return 0


def cmd_ingest(cfg):
    _require(cfg, "clean_dir", "noisy_dir", "meta", "out")
    manifest = ingest_pngs(cfg["clean_dir"], cfg["noisy_dir"], cfg["meta"],
                           cfg["out"], patch_size=cfg["patch"],
                           stride=cfg["stride"],
                           train_frac=cfg["train_frac"], seed=cfg["seed"])
    echo_config(cfg, "ingest", cfg["out"])
    print(f"ingested {len(manifest.records)} patches to {cfg['out']}")
    return 0


def cmd_train(cfg):
    _require(cfg, "model", "dataset", "out")
    dataset, _ = load_dataset(cfg["dataset"])
    label, model = _load_model_token(cfg["model"], dataset, cfg["seed"])
    tc = TrainConfig(epochs=cfg["epochs"], batch_size=cfg["batch"],
                     lr=cfg["lr"], seed=cfg["seed"],
                     clip_norm=cfg["clip_norm"],
                     eval_interval=cfg["eval_interval"])
    os.makedirs(cfg["out"], exist_ok=True)
    with open(os.path.join(cfg["out"], "model.json"), "w",
              encoding="utf-8") as f:
        f.write(spec_to_json(model.spec))
    echo_config(cfg, "train", cfg["out"])
    log = train(model, dataset, tc, out_dir=cfg["out"], verbose=True)
    best = log.best_epoch
    tail = "" if best is None else f"; best epoch {best}"
    print(f"trained {label} for {tc.epochs} epochs{tail}; run dir {cfg['out']}")
    return 0


def cmd_eval(cfg):
    _require(cfg, "model", "dataset", "out")
    dataset, _ = load_dataset(cfg["dataset"])
    view = dataset.split_view("val")
    if len(view) == 0:
        raise DataError("validation split is empty")
    os.makedirs(cfg["out"], exist_ok=True)
    rows, per_model = [], []
    for token in str(cfg["model"]).split(","):
        token = token.strip()
        if not token:
            continue
        label, model = _load_model_token(token, dataset, cfg["seed"])
        rng = np.random.default_rng(np.random.SeedSequence(cfg["seed"]))
        real, sampled, nll = collect_real_sampled(model, view, rng,
                                                  cfg["batch"])
        d_kl = marginal_kl(real, sampled)
        per_cell = {}
        for ci, gi in view.cells_present():
            m = (view.camera_idx == ci) & (view.iso_idx == gi)
            per_cell[(view.cameras[ci], view.isos[gi])] = {
                "n": int(m.sum()),
                "real_std": float(real[m].std(ddof=1)),
                "sampled_std": float(sampled[m].std(ddof=1)),
            }
        rows.append((label, nll, d_kl))
        per_model.append((label, per_cell))
        if cfg["curves"]:
            _write_eval_curves(cfg["out"], label, view, real, sampled)
    rows.sort(key=lambda r: r[1])
    write_summary_csv(os.path.join(cfg["out"], "metrics.csv"), rows)
    write_per_cell_csv(os.path.join(cfg["out"], "per_cell.csv"), per_model)
    echo_config(cfg, "eval", cfg["out"])
    for label, nll, d_kl in rows:
        print(f"{label}: nll/dim={nll:.4f} d_kl={d_kl:.4f}")
    return 0


def _write_eval_curves(out_dir, label, view, real, sampled):
    curve_dir = os.path.join(out_dir, "curves", label)
    os.makedirs(curve_dir, exist_ok=True)
    clean = _clean_center(view.clean)
    for ci, gi in view.cells_present():
        m = (view.camera_idx == ci) & (view.iso_idx == gi)
        cam, iso = view.cameras[ci], view.isos[gi]
        for ch in range(3):
            cr = variance_vs_intensity(clean[m][:, ch], real[m][:, ch],
                                       ch, (cam, iso))
            cs = variance_vs_intensity(clean[m][:, ch], sampled[m][:, ch],
                                       ch, (cam, iso))
            stem = os.path.join(curve_dir, f"curve_c{cam}_i{iso}_ch{ch}")
            lines = ["bin_lo,bin_hi,count,variance_real,variance_sampled,"
                     "reliable"]
            for i in range(len(cr.variance)):
                vr = "" if cr.count[i] == 0 else f"{cr.variance[i]:.10g}"
                vs = "" if cr.count[i] == 0 else f"{cs.variance[i]:.10g}"
                lines.append(f"{cr.bin_edges[i]:.10g},{cr.bin_edges[i+1]:.10g},"
                             f"{cr.count[i]},{vr},{vs},{int(cr.reliable[i])}")
            with open(stem + ".csv", "w", encoding="utf-8") as f:
                f.write("\n".join(lines) + "\n")
            mids = 0.5 * (cr.bin_edges[:-1] + cr.bin_edges[1:])
            rel = cr.reliable
            if rel.any():
                write_svg_lines(
                    stem + ".svg",
                    [("real", mids[rel], cr.variance[rel]),
                     ("sampled", mids[rel], cs.variance[rel])],
                    title=f"{label} cam {cam} iso {iso} ch {ch}",
                    x_label="clean intensity", y_label="noise variance")


def cmd_sample(cfg):
    _require(cfg, "model", "dataset", "out")
    dataset, _ = load_dataset(cfg["dataset"])
    view = dataset.split_view("val")
    if len(view) == 0:
        view = dataset
    label, model = _load_model_token(cfg["model"], dataset, cfg["seed"])
    rng = np.random.default_rng(np.random.SeedSequence(cfg["seed"]))
    k = min(cfg["count"], len(view))
    idx = rng.permutation(len(view))[:k]
    clean = _clean_center(view.clean[idx])
    ctx = ConditioningContext.from_indices(clean, view.camera_idx[idx],
                                           view.iso_idx[idx],
                                           dataset.n_cam, dataset.n_iso)
    noise = sample_noise(model, ctx, clean.shape, rng).data
    os.makedirs(cfg["out"], exist_ok=True)
    lines = ["index,camera_id,iso,noise_std"]
    for j in range(k):
        ci, gi = int(view.camera_idx[idx[j]]), int(view.iso_idx[idx[j]])
        noisy = np.clip(clean[j] + noise[j], 0.0, 1.0)
        noisy_u8 = np.minimum(np.floor(noisy * 256.0), 255).astype(np.uint8)
        clean_u8 = view.clean[idx[j]]
        np.save(os.path.join(cfg["out"], f"noise_{j:03d}.npy"), noise[j])
        _save_png(os.path.join(cfg["out"], f"noisy_{j:03d}.png"), noisy_u8)
        _save_png(os.path.join(cfg["out"], f"clean_{j:03d}.png"), clean_u8)
        lines.append(f"{j},{dataset.cameras[ci]},{dataset.isos[gi]},"
                     f"{np.std(noise[j], ddof=1):.10g}")
    with open(os.path.join(cfg["out"], "samples_std.csv"), "w",
              encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    echo_config(cfg, "sample", cfg["out"])
    print(f"wrote {k} sampled patches from {label} to {cfg['out']}")
    return 0


def cmd_curves(cfg):
    _require(cfg, "dataset", "out")
    dataset, _ = load_dataset(cfg["dataset"])
    os.makedirs(cfg["out"], exist_ok=True)
    rng = np.random.default_rng(np.random.SeedSequence(cfg["seed"]))
    n_files = 0
    for ci, gi in dataset.cells_present():
        cam, iso = dataset.cameras[ci], dataset.isos[gi]
        series = []
        for ch in range(3):
            curve = cell_curve(dataset, ci, gi, ch, rng)
            path = os.path.join(cfg["out"], f"curve_c{cam}_i{iso}_ch{ch}.csv")
            curve.to_csv(path)
            n_files += 1
            mids = 0.5 * (curve.bin_edges[:-1] + curve.bin_edges[1:])
            rel = curve.reliable
            if rel.any():
                series.append((f"ch{ch}", mids[rel], curve.variance[rel]))
        if series:
            write_svg_lines(
                os.path.join(cfg["out"], f"curves_c{cam}_i{iso}.svg"),
                series, title=f"cam {cam} iso {iso}",
                x_label="clean intensity", y_label="noise variance")
    echo_config(cfg, "curves", cfg["out"])
    print(f"wrote {n_files} curve tables to {cfg['out']}")
    return 0


_COMMANDS = {
    "synth-data": cmd_synth_data,
    "ingest": cmd_ingest,
    "train": cmd_train,
    "eval": cmd_eval,
    "sample": cmd_sample,
    "curves": cmd_curves,
}


def _add_common_flags(p):
    p.add_argument("--config", help="flat JSON config file")
    p.add_argument("--model", help="zoo model name(s) or run dir(s)")
    p.add_argument("--dataset", help="dataset directory")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--threads", type=int)
    p.add_argument("--cells", help="grid size CxI, e.g. 5x5")
    p.add_argument("--curves", action="store_true",
                   help="also emit variance-vs-intensity curves")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="camnoise",
        description="Conditional normalizing-flow camera noise modeling")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        _add_common_flags(p)
        if name == "ingest":
            p.add_argument("--clean-dir", dest="clean_dir")
            p.add_argument("--noisy-dir", dest="noisy_dir")
            p.add_argument("--meta", help="metadata CSV")
            p.add_argument("--stride", type=int)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        _apply_threads(cfg["threads"])
        return _COMMANDS[args.command](cfg)
    except NumericError as exc:
        print(f"error: numeric: {exc}".replace("\n", " "), file=sys.stderr)
        return 4
    except (DataError, ContextError, CheckpointError, MetricsError,
            FileNotFoundError, NotADirectoryError) as exc:
        print(f"error: data: {exc}".replace("\n", " "), file=sys.stderr)
        return 3
    except (ConfigError, ZooError, ValueError) as exc:
        print(f"error: config: {exc}".replace("\n", " "), file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: io: {exc}".replace("\n", " "), file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

"""Ingest paired clean/noisy PNG directories into the patch dataset format.

The metadata CSV must have columns ``filename``, ``camera_id``, ``iso``; each
filename must exist in both directories with identical dimensions. Every
source image becomes one scene, tiled into fixed-size patches.
"""

import csv
import os

import numpy as np
from PIL import Image

from .pipeline import assign_splits, extract_patches
from .records import DataError
from .synth import write_split_blobs

REQUIRED_COLUMNS = ("filename", "camera_id", "iso")


def _load_rgb(path):
    if not os.path.isfile(path):
        raise DataError(f"missing image: {path}")
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return arr.transpose(2, 0, 1)


def read_metadata(metadata_csv):
    with open(metadata_csv, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        cols = reader.fieldnames or []
        missing = [c for c in REQUIRED_COLUMNS if c not in cols]
        if missing:
            raise DataError(f"metadata CSV missing columns: {missing}")
        rows = []
        for row in reader:
            try:
                rows.append((row["filename"],
                             int(row["camera_id"]), int(row["iso"])))
            except (TypeError, ValueError) as exc:
                raise DataError(f"bad metadata row {row!r}: {exc}") from exc
    if not rows:
        raise DataError("metadata CSV has no rows")
    return rows


def ingest_pngs(clean_dir, noisy_dir, metadata_csv, out_dir, patch_size=32,
                stride=None, train_frac=0.8, seed=0):
    """Tile each clean/noisy pair into patches and write a split dataset."""
    rows = read_metadata(metadata_csv)
    records = []
    for scene_id, (fname, camera_id, iso) in enumerate(rows):
        clean = _load_rgb(os.path.join(clean_dir, fname))
        noisy = _load_rgb(os.path.join(noisy_dir, fname))
        if clean.shape != noisy.shape:
            raise DataError(f"clean/noisy size mismatch for {fname}")
        records.extend(extract_patches(clean, noisy, camera_id, iso, scene_id,
                                       patch_size, stride))
    if not records:
        raise DataError("no patches extracted")
    keys = [(r.camera_id, r.iso) for r in records]
    labels = assign_splits(keys, train_frac, seed)
    cameras = sorted({r.camera_id for r in records})
    isos = sorted({r.iso for r in records})
    return write_split_blobs(records, labels, cameras, isos, out_dir)

"""Dequantization, patch extraction, stratified splitting, and blob loading.

Dequantization maps u8 values v to (v + u)/256 with u ~ Uniform[0,1) drawn
independently for clean and noisy planes: a measure-preserving map onto
[0,1), so noise = noisy_f - clean_f always lies in (-1, 1).
"""

import warnings

import numpy as np

from .records import DataError, DatasetManifest, NoisePatchRecord, read_blob


def dequantize_arrays(clean_u8, noisy_u8, rng, dtype=np.float32):
    """u8 arrays -> (clean_f, noisy_f, noise) floats with independent jitter."""
    clean_u8 = np.asarray(clean_u8)
    noisy_u8 = np.asarray(noisy_u8)
    if clean_u8.dtype != np.uint8 or noisy_u8.dtype != np.uint8:
        raise DataError("dequantize expects uint8 inputs")
    u1 = rng.random(clean_u8.shape, dtype=np.float32).astype(dtype, copy=False)
    u2 = rng.random(noisy_u8.shape, dtype=np.float32).astype(dtype, copy=False)
    clean_f = (clean_u8.astype(dtype) + u1) / dtype(256.0)
    noisy_f = (noisy_u8.astype(dtype) + u2) / dtype(256.0)
    return clean_f, noisy_f, noisy_f - clean_f


def dequantize(record, rng, dtype=np.float32):
    """Dequantize one NoisePatchRecord -> (clean_f, noisy_f, noise)."""
    return dequantize_arrays(record.clean, record.noisy, rng, dtype)


def extract_patches(clean, noisy, camera_id, iso, scene_id,
                    patch_size=32, stride=None):
    """Tile an aligned clean/noisy u8 image pair into patch records."""
    clean = np.asarray(clean)
    noisy = np.asarray(noisy)
    if clean.shape != noisy.shape or clean.ndim != 3 or clean.shape[0] != 3:
        raise DataError(f"expected matching [3,H,W] images, got {clean.shape} "
                        f"and {noisy.shape}")
    h, w = clean.shape[1:]
    if h < patch_size or w < patch_size:
        raise DataError(f"image {h}x{w} smaller than patch size {patch_size}")
    if stride is None:
        stride = patch_size
    records = []
    for top in range(0, h - patch_size + 1, stride):
        for left in range(0, w - patch_size + 1, stride):
            win = (slice(None), slice(top, top + patch_size),
                   slice(left, left + patch_size))
            records.append(NoisePatchRecord(clean[win].copy(), noisy[win].copy(),
                                            camera_id, iso, scene_id))
    return records


def assign_splits(cell_keys, train_frac, seed):
    """Per-cell random train/val labels; deterministic in seed.

    cell_keys: list of hashable cell identifiers, one per record. Cells with
    fewer than two records go entirely to train with a warning. Returns a list
    of "train"/"val" labels aligned with cell_keys.
    """
    rng = np.random.default_rng(seed)
    by_cell = {}
    for i, key in enumerate(cell_keys):
        by_cell.setdefault(key, []).append(i)
    labels = [None] * len(cell_keys)
    for key in sorted(by_cell):
        idx = np.array(by_cell[key])
        n = len(idx)
        if n < 2:
            warnings.warn(f"cell {key} has {n} record(s); assigning all to "
                          f"train (cannot stratify)")
            for i in idx:
                labels[i] = "train"
            continue
        order = rng.permutation(n)
        n_train = int(round(train_frac * n))
        n_train = min(max(n_train, 1), n - 1)  # both splits stay populated
        for rank, j in enumerate(order):
            labels[idx[j]] = "train" if rank < n_train else "val"
    return labels


def stratified_split(manifest, train_frac=0.8, seed=0):
    """Re-assign manifest record splits per-(camera, iso) cell."""
    keys = [(r["camera_id"], r["iso"]) for r in manifest.records]
    labels = assign_splits(keys, train_frac, seed)
    records = [dict(r, split=s) for r, s in zip(manifest.records, labels)]
    return DatasetManifest(manifest.cameras, manifest.isos, records,
                           manifest.blobs)


class Dataset:
    """In-memory dataset: u8 patch stacks plus per-record context indices."""

    def __init__(self, clean, noisy, camera_idx, iso_idx, scene_id, split,
                 cameras, isos):
        self.clean = clean
        self.noisy = noisy
        self.camera_idx = camera_idx
        self.iso_idx = iso_idx
        self.scene_id = scene_id
        self.split = split
        self.cameras = list(cameras)
        self.isos = list(isos)

    def __len__(self):
        return self.clean.shape[0]

    @property
    def n_cam(self):
        return len(self.cameras)

    @property
    def n_iso(self):
        return len(self.isos)

    def split_view(self, split):
        m = self.split == split
        return Dataset(self.clean[m], self.noisy[m], self.camera_idx[m],
                       self.iso_idx[m], self.scene_id[m], self.split[m],
                       self.cameras, self.isos)

    def cell_view(self, ci, gi):
        m = (self.camera_idx == ci) & (self.iso_idx == gi)
        return Dataset(self.clean[m], self.noisy[m], self.camera_idx[m],
                       self.iso_idx[m], self.scene_id[m], self.split[m],
                       self.cameras, self.isos)

    def cells_present(self):
        return sorted({(int(c), int(g))
                       for c, g in zip(self.camera_idx, self.iso_idx)})


def dataset_from_records(records, cameras, isos, splits):
    if not records:
        raise DataError("no records")
    cam_index = {c: i for i, c in enumerate(cameras)}
    iso_index = {g: i for i, g in enumerate(isos)}
    clean = np.stack([r.clean for r in records])
    noisy = np.stack([r.noisy for r in records])
    camera_idx = np.array([cam_index[r.camera_id] for r in records], dtype=np.int64)
    iso_idx = np.array([iso_index[r.iso] for r in records], dtype=np.int64)
    scene = np.array([r.scene_id for r in records], dtype=np.int64)
    split = np.array(splits)
    return Dataset(clean, noisy, camera_idx, iso_idx, scene, split,
                   cameras, isos)


def load_dataset(directory):
    """Read manifest.json + referenced blobs from a dataset directory."""
    import os
    manifest = DatasetManifest.load(os.path.join(directory, "manifest.json"))
    blob_records = {name: read_blob(os.path.join(directory, fname))
                    for name, fname in manifest.blobs.items()}
    records, splits = [], []
    for r in manifest.records:
        recs = blob_records[r["blob"]]
        rec = recs[r["index"]]
        if (rec.camera_id, rec.iso, rec.scene_id) != (r["camera_id"], r["iso"],
                                                      r["scene_id"]):
            raise DataError("manifest/record metadata mismatch at "
                            f"{r['blob']}[{r['index']}]")
        records.append(rec)
        splits.append(r["split"])
    return dataset_from_records(records, manifest.cameras, manifest.isos,
                                splits), manifest

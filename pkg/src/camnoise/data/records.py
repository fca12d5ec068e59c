"""Patch records, the NFPD binary blob format, and the dataset manifest.

A blob holds same-shaped records back to back: a 16-byte header (magic
"NFPD", version u32, record count u32, patch height/width u16) followed by
fixed-size records, each a little-endian metadata struct (camera_id u16,
iso u32, scene_id u32) and the raw clean + noisy u8 planes. The manifest is
a canonical JSON document indexing records (split, blob offset, metadata)
plus the (camera, iso) cell tables; writing it twice yields identical bytes.
"""

import json
import struct

import numpy as np

BLOB_MAGIC = b"NFPD"
BLOB_VERSION = 1
_HEADER = struct.Struct("<4sIIHH")
_META = struct.Struct("<HII")


class DataError(ValueError):
    pass


class NoisePatchRecord:
    __slots__ = ("clean", "noisy", "camera_id", "iso", "scene_id")

    def __init__(self, clean, noisy, camera_id, iso, scene_id):
        clean = np.asarray(clean)
        noisy = np.asarray(noisy)
        if clean.dtype != np.uint8 or noisy.dtype != np.uint8:
            raise DataError("patches must be uint8")
        if clean.shape != noisy.shape:
            raise DataError(f"clean/noisy shape mismatch: {clean.shape} vs "
                            f"{noisy.shape}")
        if clean.ndim != 3 or clean.shape[0] != 3:
            raise DataError(f"patches must be [3,H,W], got {clean.shape}")
        self.clean = clean
        self.noisy = noisy
        self.camera_id = int(camera_id)
        self.iso = int(iso)
        self.scene_id = int(scene_id)

    @property
    def shape(self):
        return self.clean.shape

    def __eq__(self, other):
        return (isinstance(other, NoisePatchRecord)
                and np.array_equal(self.clean, other.clean)
                and np.array_equal(self.noisy, other.noisy)
                and (self.camera_id, self.iso, self.scene_id)
                == (other.camera_id, other.iso, other.scene_id))


def record_byte_size(h, w):
    return _META.size + 2 * 3 * h * w


def blob_offset(index, h, w):
    """Byte offset of record `index` inside a blob of [3,h,w] patches."""
    return _HEADER.size + index * record_byte_size(h, w)


def write_blob(path, records):
    if not records:
        raise DataError("cannot write an empty blob")
    h, w = records[0].shape[1:]
    for r in records:
        if r.shape != (3, h, w):
            raise DataError("all records in a blob must share one shape")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(BLOB_MAGIC, BLOB_VERSION, len(records), h, w))
        for r in records:
            f.write(_META.pack(r.camera_id, r.iso, r.scene_id))
            f.write(r.clean.tobytes())
            f.write(r.noisy.tobytes())


def read_blob(path):
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: truncated blob header")
    magic, version, count, h, w = _HEADER.unpack_from(raw, 0)
    if magic != BLOB_MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    if version != BLOB_VERSION:
        raise DataError(f"{path}: unsupported blob version {version}")
    expected = blob_offset(count, h, w)
    if len(raw) != expected:
        raise DataError(f"{path}: expected {expected} bytes, got {len(raw)}")
    plane = 3 * h * w
    records = []
    pos = _HEADER.size
    for _ in range(count):
        camera_id, iso, scene_id = _META.unpack_from(raw, pos)
        pos += _META.size
        clean = np.frombuffer(raw, dtype=np.uint8, count=plane,
                              offset=pos).reshape(3, h, w)
        pos += plane
        noisy = np.frombuffer(raw, dtype=np.uint8, count=plane,
                              offset=pos).reshape(3, h, w)
        pos += plane
        records.append(NoisePatchRecord(clean.copy(), noisy.copy(),
                                        camera_id, iso, scene_id))
    return records


MANIFEST_VERSION = 1


class DatasetManifest:
    """Index over patch blobs: cell tables + per-record split and offsets.

    cameras / isos are the sorted distinct ids; a record's context indices
    are its positions in those tables.
    """

    def __init__(self, cameras, isos, records, blobs=None):
        self.cameras = [int(c) for c in cameras]
        self.isos = [int(g) for g in isos]
        self.records = records  # list of dicts
        self.blobs = dict(blobs or {})
        self._validate()

    def _validate(self):
        cam_set, iso_set = set(self.cameras), set(self.isos)
        for i, r in enumerate(self.records):
            if r["camera_id"] not in cam_set:
                raise DataError(f"record {i}: camera {r['camera_id']} not in table")
            if r["iso"] not in iso_set:
                raise DataError(f"record {i}: iso {r['iso']} not in table")
            if r["split"] not in ("train", "val"):
                raise DataError(f"record {i}: bad split {r['split']!r}")

    @property
    def n_cam(self):
        return len(self.cameras)

    @property
    def n_iso(self):
        return len(self.isos)

    def cell_of(self, record):
        return (self.cameras.index(record["camera_id"]),
                self.isos.index(record["iso"]))

    def split_records(self, split):
        return [r for r in self.records if r["split"] == split]

    def cells_in(self, split):
        return {self.cell_of(r) for r in self.split_records(split)}

    def to_json(self):
        doc = {
            "schema_version": MANIFEST_VERSION,
            "cameras": self.cameras,
            "isos": self.isos,
            "blobs": self.blobs,
            "records": self.records,
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        if doc.get("schema_version") != MANIFEST_VERSION:
            raise DataError(f"unsupported manifest version "
                            f"{doc.get('schema_version')!r}")
        return cls(doc["cameras"], doc["isos"], doc["records"], doc["blobs"])

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_json())

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_json(f.read())

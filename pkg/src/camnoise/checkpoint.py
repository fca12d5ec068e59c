"""Flat binary parameter checkpoints.

Layout (little-endian): magic b"NFCK", format version u32, parameter count
u32, then per parameter: name length u16, UTF-8 name, rank u8, dims as u32s,
raw float32 payload. Parameter order is the model's natural (deterministic)
iteration order, so identical states serialize to identical bytes.
"""

import struct

import numpy as np

MAGIC = b"NFCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, named_params):
    """Write [(name, Tensor-or-array)] to path in NFCK format."""
    items = [(name, np.asarray(p.data if hasattr(p, "data") else p))
             for name, p in named_params]
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(items)))
        for name, arr in items:
            raw = name.encode("utf-8")
            f.write(struct.pack("<H", len(raw)))
            f.write(raw)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path):
    """Read an NFCK file into an ordered {name: float32 array} dict."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    off = 12
    out = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", blob, off)
        off += 2
        name = blob[off:off + nlen].decode("utf-8")
        off += nlen
        (rank,) = struct.unpack_from("<B", blob, off)
        off += 1
        dims = struct.unpack_from(f"<{rank}I", blob, off)
        off += 4 * rank
        n = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(blob, dtype="<f4", count=n, offset=off).reshape(dims)
        off += 4 * n
        out[name] = arr.copy()
    if off != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - off} trailing bytes")
    return out


def restore_into(named_params, loaded):
    """Copy loaded arrays into matching parameter tensors (strict)."""
    params = dict(named_params)
    if set(params) != set(loaded):
        missing = set(params) - set(loaded)
        extra = set(loaded) - set(params)
        raise CheckpointError(f"parameter name mismatch: missing={sorted(missing)} "
                              f"extra={sorted(extra)}")
    for name, tensor in params.items():
        arr = loaded[name]
        if tuple(arr.shape) != tuple(tensor.data.shape):
            raise CheckpointError(f"{name}: checkpoint shape {arr.shape} != "
                                  f"model shape {tensor.data.shape}")
        tensor.data = arr.astype(tensor.data.dtype)

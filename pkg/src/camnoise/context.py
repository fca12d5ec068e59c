"""Conditioning information fed to the conditional flow layers.

A context carries the dequantized clean patch plus camera / ISO one-hots for a
batch. The pair one-hot (camera index * n_iso + iso index) drives the
per-(camera, ISO) lookup tables. Masked copies replace selected fields with
zeros, which provably removes their influence (every consumer is linear or a
network in the masked input).
"""

import numpy as np

from .tensor import Tensor


class ContextError(ValueError):
    pass


class ConditioningContext:
    """Batched bundle: clean [B,3,H,W], one-hots [B,n_cam] / [B,n_iso] / [B,n_cam*n_iso]."""

    def __init__(self, clean, camera_onehot, iso_onehot, pair_onehot, validate=True):
        self.clean = clean if isinstance(clean, Tensor) else Tensor(clean)
        self.camera_onehot = camera_onehot if isinstance(camera_onehot, Tensor) else Tensor(camera_onehot)
        self.iso_onehot = iso_onehot if isinstance(iso_onehot, Tensor) else Tensor(iso_onehot)
        self.pair_onehot = pair_onehot if isinstance(pair_onehot, Tensor) else Tensor(pair_onehot)
        if validate:
            self._validate()

    @property
    def n_cam(self):
        return self.camera_onehot.shape[1]

    @property
    def n_iso(self):
        return self.iso_onehot.shape[1]

    @property
    def batch(self):
        return self.clean.shape[0]

    def _validate(self):
        if self.clean.ndim != 4 or self.clean.shape[1] != 3:
            raise ContextError(f"clean must be [B,3,H,W], got {self.clean.shape}")
        b = self.clean.shape[0]
        for name, t in (("camera_onehot", self.camera_onehot),
                        ("iso_onehot", self.iso_onehot),
                        ("pair_onehot", self.pair_onehot)):
            if t.ndim != 2 or t.shape[0] != b:
                raise ContextError(f"{name} must be [B,n], got {t.shape}")
            d = t.data
            if not (np.all((d == 0) | (d == 1)) and np.all(d.sum(axis=1) == 1)):
                raise ContextError(f"{name} rows must be one-hot")
        if self.pair_onehot.shape[1] != self.n_cam * self.n_iso:
            raise ContextError("pair_onehot width must be n_cam*n_iso")
        cam_idx = self.camera_onehot.data.argmax(axis=1)
        iso_idx = self.iso_onehot.data.argmax(axis=1)
        pair_idx = self.pair_onehot.data.argmax(axis=1)
        if not np.array_equal(pair_idx, cam_idx * self.n_iso + iso_idx):
            raise ContextError("pair index must equal camera_index*n_iso + iso_index")

    @classmethod
    def from_indices(cls, clean, camera_idx, iso_idx, n_cam, n_iso, dtype=np.float32):
        """Build a validated context from integer camera/ISO indices."""
        camera_idx = np.asarray(camera_idx, dtype=np.int64)
        iso_idx = np.asarray(iso_idx, dtype=np.int64)
        if np.any((camera_idx < 0) | (camera_idx >= n_cam)):
            raise ContextError("camera index out of range")
        if np.any((iso_idx < 0) | (iso_idx >= n_iso)):
            raise ContextError("iso index out of range")
        b = len(camera_idx)
        cam = np.zeros((b, n_cam), dtype=dtype)
        iso = np.zeros((b, n_iso), dtype=dtype)
        pair = np.zeros((b, n_cam * n_iso), dtype=dtype)
        cam[np.arange(b), camera_idx] = 1
        iso[np.arange(b), iso_idx] = 1
        pair[np.arange(b), camera_idx * n_iso + iso_idx] = 1
        clean_data = clean.data if isinstance(clean, Tensor) else np.asarray(clean)
        return cls(Tensor(clean_data.astype(dtype, copy=False)), Tensor(cam),
                   Tensor(iso), Tensor(pair))

    def masked(self, use_clean=True, use_camera=True, use_iso=True):
        """Zero out de-selected conditioning paths (no re-validation: zeros
        are not one-hot). The pair lookup needs both factors, so it is zeroed
        as soon as either is masked."""
        if use_clean and use_camera and use_iso:
            return self

        def z(t):
            return Tensor(np.zeros_like(t.data))

        return ConditioningContext(
            self.clean if use_clean else z(self.clean),
            self.camera_onehot if use_camera else z(self.camera_onehot),
            self.iso_onehot if use_iso else z(self.iso_onehot),
            self.pair_onehot if (use_camera and use_iso) else z(self.pair_onehot),
            validate=False,
        )

    def astype(self, dtype):
        """Context with all fields cast to dtype (owning fresh constants)."""
        return ConditioningContext(
            Tensor(self.clean.data.astype(dtype)),
            Tensor(self.camera_onehot.data.astype(dtype)),
            Tensor(self.iso_onehot.data.astype(dtype)),
            Tensor(self.pair_onehot.data.astype(dtype)),
            validate=False,
        )

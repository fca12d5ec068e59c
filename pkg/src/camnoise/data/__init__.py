"""Dataset plumbing: patch records, binary blobs, manifests, dequantization,
splitting, the synthetic ISP generator, and PNG ingestion."""

from .records import (BLOB_MAGIC, BLOB_VERSION, DataError, DatasetManifest,
                      NoisePatchRecord, read_blob, write_blob)
from .pipeline import (Dataset, dequantize, dequantize_arrays, extract_patches,
                       load_dataset, stratified_split)
from .synth import (SynthIspConfig, apply_isp, generate_records, render_pair,
                    scene_texture, synth_isp_generate, write_split_blobs)
from .ingest import ingest_pngs

__all__ = [
    "BLOB_MAGIC", "BLOB_VERSION", "DataError", "DatasetManifest",
    "NoisePatchRecord", "read_blob", "write_blob",
    "Dataset", "dequantize", "dequantize_arrays", "extract_patches",
    "load_dataset", "stratified_split",
    "SynthIspConfig", "apply_isp", "generate_records", "render_pair",
    "scene_texture", "synth_isp_generate", "write_split_blobs", "ingest_pngs",
]

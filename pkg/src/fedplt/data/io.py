"""
Flat binary dataset files.

Layout (little-endian): magic b"FPLT", version u32, n u64, dim u32, C u32, then n*dim float32
features in row-major order, then n uint32 labels.
"""
import struct
from pathlib import Path

import numpy as np

from fedplt.data.dataset import Dataset


DATASET_MAGIC = b"FPLT"
DATASET_VERSION = 1
_HEADER = struct.Struct("<4sIQII")


def save_dataset(dataset: Dataset, path: str | Path):
    header = _HEADER.pack(DATASET_MAGIC, DATASET_VERSION, len(dataset), dataset.feature_dim, dataset.num_classes)
    with open(path, "wb") as f:
        f.write(header)
        f.write(dataset.features.astype("<f4").tobytes(order="C"))
        f.write(dataset.labels.astype("<u4").tobytes())


def load_dataset(path: str | Path) -> Dataset:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: file too short for a dataset header")
    magic, version, n, dim, num_classes = _HEADER.unpack_from(raw, 0)
    if magic != DATASET_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != DATASET_VERSION:
        raise ValueError(f"{path}: unsupported dataset version {version}")

    offset = _HEADER.size
    expected = offset + 4 * n * dim + 4 * n
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")

    features = np.frombuffer(raw, dtype="<f4", count=n * dim, offset=offset).reshape(n, dim)
    labels = np.frombuffer(raw, dtype="<u4", count=n, offset=offset + 4 * n * dim)
    return Dataset(features.astype(np.float64), labels.astype(np.int64), num_classes)

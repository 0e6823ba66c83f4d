"""Reader/writer for the big-endian IDX format used by MNIST."""
from __future__ import annotations

import struct
from pathlib import Path
from typing import Optional

import numpy as np

from .data import Dataset
from .errors import FormatError

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


def _read(path, magic: int, ndim: int) -> np.ndarray:
    raw = Path(path).read_bytes()
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError(f"{path}: truncated header")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise FormatError(f"{path}: bad magic 0x{found:08x}, expected 0x{magic:08x}")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    count = int(np.prod(dims))
    if len(raw) - header != count:
        raise FormatError(f"{path}: expected {count} data bytes, found {len(raw) - header}")
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def read_images(path) -> np.ndarray:
    return _read(path, IMAGES_MAGIC, 3)


def read_labels(path) -> np.ndarray:
    return _read(path, LABELS_MAGIC, 1)


def is_idx_images(path) -> bool:
    try:
        with open(path, "rb") as f:
            head = f.read(4)
    except OSError:
        return False
    return len(head) == 4 and struct.unpack(">I", head)[0] == IMAGES_MAGIC


def load_idx(images_path, labels_path=None, name: Optional[str] = None, n_categories: Optional[int] = None) -> Dataset:
    imgs = read_images(images_path)
    labels = None
    if labels_path is not None:
        labels = read_labels(labels_path).astype(np.int64)
        if len(labels) != len(imgs):
            raise FormatError(f"{len(imgs)} images but {len(labels)} labels")
    if n_categories is None:
        n_categories = int(labels.max()) + 1 if labels is not None and len(labels) else 10
    n, h, w = imgs.shape
    return Dataset(
        name or Path(images_path).name,
        imgs.reshape(n, h * w).astype(np.float64) / 255.0,
        labels,
        n_categories,
        (h, w),
    )


def write_images(path, images: np.ndarray) -> None:
    """``images`` are uint8 (n, h, w) or floats in [0, 1]."""
    arr = np.asarray(images)
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    n, h, w = arr.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", IMAGES_MAGIC, n, h, w))
        f.write(arr.tobytes())


def write_labels(path, labels) -> None:
    arr = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">II", LABELS_MAGIC, len(arr)))
        f.write(arr.tobytes())


def save_idx(ds: Dataset, images_path, labels_path=None) -> None:
    write_images(images_path, ds.images())
    if labels_path is not None and ds.labels is not None:
        write_labels(labels_path, ds.labels)

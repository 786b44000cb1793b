"""Dataset loading: MNIST IDX files, plus an offline digits fallback.

IDX layout (big-endian): images 0x00000803, u32 count/rows/cols, raw u8;
labels 0x00000801, u32 count, raw u8.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

_IMAGES_MAGIC = 0x00000803
_LABELS_MAGIC = 0x00000801

TRAIN_FILES = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte")
TEST_FILES = ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")

ENV_DATA_DIR = "HENN_MNIST_DIR"


class DatasetError(ValueError):
    pass


def read_idx_images(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise DatasetError(f"{path}: truncated header")
    magic, count, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != _IMAGES_MAGIC:
        raise DatasetError(f"{path}: bad image magic 0x{magic:08x}")
    need = 16 + count * rows * cols
    if len(raw) < need:
        raise DatasetError(f"{path}: {len(raw)} bytes, need {need}")
    return (
        np.frombuffer(raw[16:need], dtype=np.uint8)
        .reshape(count, rows, cols)
        .astype(np.float32)
    )


def read_idx_labels(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise DatasetError(f"{path}: truncated header")
    magic, count = struct.unpack(">II", raw[:8])
    if magic != _LABELS_MAGIC:
        raise DatasetError(f"{path}: bad label magic 0x{magic:08x}")
    if len(raw) < 8 + count:
        raise DatasetError(f"{path}: truncated labels")
    return np.frombuffer(raw[8 : 8 + count], dtype=np.uint8).astype(np.int64)


def mnist_dir(explicit: str | None = None) -> Path | None:
    """Resolve the MNIST directory, or None if the files are absent."""
    candidates = []
    if explicit:
        candidates.append(Path(explicit))
    env = os.environ.get(ENV_DATA_DIR)
    if env:
        candidates.append(Path(env))
    for cand in candidates:
        if all((cand / f).exists() for f in TRAIN_FILES + TEST_FILES):
            return cand
    return None


def load_mnist(data_dir) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """-> (train_x (N,28,28) float 0-255, train_y, test_x, test_y)."""
    d = Path(data_dir)
    tx = read_idx_images(d / TRAIN_FILES[0])
    ty = read_idx_labels(d / TRAIN_FILES[1])
    vx = read_idx_images(d / TEST_FILES[0])
    vy = read_idx_labels(d / TEST_FILES[1])
    if len(tx) != len(ty) or len(vx) != len(vy):
        raise DatasetError("image/label counts disagree")
    return tx, ty, vx, vy


def load_digits_28(seed: int = 0):
    """Offline fallback: scikit-learn's 1797 8x8 digits, upscaled and padded
    to 28x28 with pixel values rescaled to 0-255.  Returns the same tuple
    shape as load_mnist with a deterministic 80/20 split."""
    from sklearn.datasets import load_digits

    raw = load_digits()
    images = raw.images.astype(np.float32) * (255.0 / 16.0)
    big = np.kron(images, np.ones((1, 3, 3), dtype=np.float32))  # 24x24
    padded = np.zeros((len(big), 28, 28), dtype=np.float32)
    padded[:, 2:26, 2:26] = big
    labels = raw.target.astype(np.int64)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(padded))
    cut = int(len(padded) * 0.8)
    tr, te = order[:cut], order[cut:]
    return padded[tr], labels[tr], padded[te], labels[te]

"""Dataset ingestion and input encoding.

Supported sources: IDX image/label files (the MNIST distribution format),
pre-binned event frames in the PBF container described below, the
scikit-learn bundled digits set, and synthetic generators for desk-scale
benchmarks.

PBF layout (little-endian): magic b"PBF1", then u32 fields T, C, H, W, N,
num_classes; then N*T*C*H*W float32 frames; then N uint16 labels.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .rng import RngState

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
PBF_MAGIC = b"PBF1"


class IdxFormatError(ValueError):
    pass


@dataclass
class Dataset:
    x: np.ndarray  # (N, *shape) static inputs, or (N, T, C, H, W) frames
    y: np.ndarray  # (N,) integer labels
    num_classes: int
    frames: bool = False  # True when x already carries a time axis

    def __post_init__(self):
        if len(self.x) != len(self.y):
            raise ValueError("sample/label count mismatch")
        if len(self.y) and (self.y.min() < 0 or self.y.max() >= self.num_classes):
            raise ValueError("label out of range")

    def __len__(self):
        return len(self.y)

    @property
    def input_shape(self):
        return self.x.shape[2:] if self.frames else self.x.shape[1:]


class EncoderKind(Enum):
    CONSTANT_CURRENT = "constant_current"
    PRE_BINNED_FRAMES = "pre_binned_frames"
    POISSON_SYNTHETIC = "poisson_synthetic"


@dataclass(frozen=True)
class EncoderSpec:
    kind: EncoderKind
    rate: float = 1.0  # Poisson encoder only


# ---------------------------------------------------------------------------
# IDX


def _read_exact(f, n: int, path: str):
    buf = f.read(n)
    if len(buf) != n:
        raise IdxFormatError(
            f"{path}: truncated at byte offset {f.tell() - len(buf) + len(buf)} "
            f"(wanted {n} bytes, got {len(buf)})"
        )
    return buf


def load_idx_images(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        magic, n, rows, cols = struct.unpack(">IIII", _read_exact(f, 16, path))
        if magic != IDX_IMAGE_MAGIC:
            raise IdxFormatError(f"{path}: bad magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}")
        raw = _read_exact(f, n * rows * cols, path)
    return np.frombuffer(raw, dtype=np.uint8).reshape(n, rows, cols).astype(np.float64) / 255.0


def load_idx_labels(path: str, num_classes: int = 10) -> np.ndarray:
    with open(path, "rb") as f:
        magic, n = struct.unpack(">II", _read_exact(f, 8, path))
        if magic != IDX_LABEL_MAGIC:
            raise IdxFormatError(f"{path}: bad magic 0x{magic:08x}, expected 0x{IDX_LABEL_MAGIC:08x}")
        raw = _read_exact(f, n, path)
    labels = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)
    if len(labels) and labels.max() >= num_classes:
        raise IdxFormatError(f"{path}: label {labels.max()} out of range [0, {num_classes})")
    return labels


def load_idx(images_path: str, labels_path: str, num_classes: int = 10) -> Dataset:
    images = load_idx_images(images_path)
    labels = load_idx_labels(labels_path, num_classes)
    if len(images) != len(labels):
        raise IdxFormatError(
            f"image count {len(images)} != label count {len(labels)}"
        )
    return Dataset(images, labels, num_classes)


def load_mnist(data_dir: str, split: str = "train") -> Dataset:
    prefix = "train" if split == "train" else "t10k"
    return load_idx(
        os.path.join(data_dir, f"{prefix}-images-idx3-ubyte"),
        os.path.join(data_dir, f"{prefix}-labels-idx1-ubyte"),
    )


# ---------------------------------------------------------------------------
# Pre-binned frames (PBF)


def save_pbf(path: str, frames: np.ndarray, labels: np.ndarray, num_classes: int):
    n, t, c, h, w = frames.shape
    with open(path, "wb") as f:
        f.write(PBF_MAGIC)
        f.write(struct.pack("<6I", t, c, h, w, n, num_classes))
        f.write(frames.astype("<f4").tobytes())
        f.write(labels.astype("<u2").tobytes())


def load_pbf(path: str) -> Dataset:
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, path)
        if magic != PBF_MAGIC:
            raise IdxFormatError(f"{path}: bad magic {magic!r}, expected {PBF_MAGIC!r}")
        t, c, h, w, n, num_classes = struct.unpack("<6I", _read_exact(f, 24, path))
        frames = np.frombuffer(
            _read_exact(f, n * t * c * h * w * 4, path), dtype="<f4"
        ).reshape(n, t, c, h, w).astype(np.float64)
        labels = np.frombuffer(_read_exact(f, n * 2, path), dtype="<u2").astype(np.int64)
    return Dataset(frames, labels, num_classes, frames=True)


# ---------------------------------------------------------------------------
# Bundled and synthetic sources


def load_digits_dataset(test_fraction: float = 0.2, seed: int = 0):
    """The scikit-learn 8x8 handwritten digits, split deterministically."""
    from sklearn.datasets import load_digits

    d = load_digits()
    x = d.data.astype(np.float64).reshape(-1, 8, 8) / 16.0
    y = d.target.astype(np.int64)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(y))
    x, y = x[order], y[order]
    n_test = int(len(y) * test_fraction)
    return (
        Dataset(x[n_test:], y[n_test:], 10),
        Dataset(x[:n_test], y[:n_test], 10),
    )


def make_synthetic_fc(n_samples: int, dim: int = 20, num_classes: int = 4,
                      noise: float = 0.2, seed: int = 0) -> Dataset:
    """Noisy class prototypes; an easy separable benchmark for smoke tests."""
    rng = np.random.default_rng(seed)
    protos = rng.random((num_classes, dim))
    y = rng.integers(0, num_classes, n_samples)
    x = protos[y] + noise * rng.standard_normal((n_samples, dim))
    return Dataset(x, y, num_classes)


def make_synthetic_conv(n_samples: int, channels: int = 1, size: int = 10,
                        num_classes: int = 4, noise: float = 0.25,
                        seed: int = 0) -> Dataset:
    """Oriented-pattern images (horizontal/vertical bars, diagonal, blob)."""
    rng = np.random.default_rng(seed)
    protos = np.zeros((num_classes, channels, size, size))
    mid = size // 2
    protos[0, :, mid - 1 : mid + 1, :] = 1.0
    if num_classes > 1:
        protos[1, :, :, mid - 1 : mid + 1] = 1.0
    if num_classes > 2:
        for i in range(size):
            protos[2, :, i, i] = 1.0
    if num_classes > 3:
        protos[3, :, mid - 2 : mid + 2, mid - 2 : mid + 2] = 1.0
    y = rng.integers(0, num_classes, n_samples)
    x = protos[y] + noise * rng.standard_normal((n_samples, channels, size, size))
    return Dataset(x, y, num_classes)


def make_synthetic_event_frames(n_samples: int, T: int, channels: int = 2,
                                size: int = 8, num_classes: int = 4,
                                seed: int = 0) -> Dataset:
    """Bernoulli spike frames standing in for pre-binned DVS recordings."""
    base = make_synthetic_conv(n_samples, channels, size, num_classes, 0.0, seed)
    rng = np.random.default_rng(seed + 1)
    rate = np.clip(0.1 + 0.8 * base.x, 0.0, 1.0)
    frames = (rng.random((n_samples, T) + base.x.shape[1:]) < rate[:, None]).astype(np.float64)
    return Dataset(frames, base.y, num_classes, frames=True)


# ---------------------------------------------------------------------------
# Normalization, encoding, batching


def normalize(train: Dataset, test: Dataset):
    """Standardize both splits with the train split's global mean/std."""
    mu = float(train.x.mean())
    sigma = float(train.x.std())
    sigma = max(sigma, 1e-8)
    t = Dataset((train.x - mu) / sigma, train.y, train.num_classes, train.frames)
    v = Dataset((test.x - mu) / sigma, test.y, test.num_classes, test.frames)
    return t, v, (mu, sigma)


def encode(batch_x: np.ndarray, spec: EncoderSpec, T: int,
           rng: RngState | None = None) -> np.ndarray:
    """Turn a batch of samples into a (T, B, *shape) input-current sequence."""
    if spec.kind is EncoderKind.CONSTANT_CURRENT:
        return np.broadcast_to(batch_x, (T,) + batch_x.shape).copy()
    if spec.kind is EncoderKind.PRE_BINNED_FRAMES:
        if batch_x.shape[1] != T:
            raise ValueError(f"stored frame count {batch_x.shape[1]} != T={T}")
        return np.ascontiguousarray(np.moveaxis(batch_x, 1, 0))
    if spec.kind is EncoderKind.POISSON_SYNTHETIC:
        if rng is None:
            raise ValueError("Poisson encoding needs an rng")
        p = np.clip(spec.rate * batch_x, 0.0, 1.0)
        draws = rng.gen.random((T,) + batch_x.shape)
        return (draws < p).astype(np.float64)
    raise ValueError(f"unknown encoder kind {spec.kind}")


def batches(dataset: Dataset, batch_size: int, rng: RngState | None = None):
    """Deterministic minibatch iterator; shuffles when given an rng."""
    n = len(dataset)
    order = np.arange(n)
    if rng is not None:
        rng.gen.shuffle(order)
    for start in range(0, n, batch_size):
        idx = order[start : start + batch_size]
        yield dataset.x[idx], dataset.y[idx]

"""Dataset loading (MNIST IDX, CIFAR-10 binary), balanced splits, batching."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import ConfigError, FormatError

MNIST_IMAGE_MAGIC = 0x00000803
MNIST_LABEL_MAGIC = 0x00000801
CIFAR_RECORD_BYTES = 3073  # 1 label byte + 3 x 1024 channel bytes


@dataclass
class LabeledDataset:
    """Images (N, C, H, W) scaled to [0, 1] plus integer labels."""

    images: np.ndarray
    labels: np.ndarray
    m: int

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise FormatError(
                f"image/label counts disagree: {self.images.shape[0]} vs {self.labels.shape[0]}"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.m):
            raise FormatError(f"labels out of range [0, {self.m})")

    def __len__(self) -> int:
        return self.images.shape[0]

    def subset(self, indices) -> "LabeledDataset":
        return LabeledDataset(self.images[indices], self.labels[indices], self.m)

    def astype(self, dtype) -> "LabeledDataset":
        return LabeledDataset(self.images.astype(dtype), self.labels, self.m)


def _open_maybe_gzip(path):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_u32be(f, what):
    raw = f.read(4)
    if len(raw) != 4:
        raise FormatError(f"truncated file while reading {what}")
    return struct.unpack(">I", raw)[0]


def load_mnist(image_path, label_path, dtype=np.float64) -> LabeledDataset:
    """Parse an MNIST IDX image/label file pair (optionally gzipped)."""
    with _open_maybe_gzip(image_path) as f:
        magic = _read_u32be(f, "image magic")
        if magic != MNIST_IMAGE_MAGIC:
            raise FormatError(f"bad image magic 0x{magic:08x} in {image_path}")
        count = _read_u32be(f, "image count")
        rows = _read_u32be(f, "row count")
        cols = _read_u32be(f, "column count")
        payload = f.read(count * rows * cols)
        if len(payload) != count * rows * cols:
            raise FormatError(f"truncated image payload in {image_path}")
        images = np.frombuffer(payload, dtype=np.uint8).reshape(count, 1, rows, cols)
    with _open_maybe_gzip(label_path) as f:
        magic = _read_u32be(f, "label magic")
        if magic != MNIST_LABEL_MAGIC:
            raise FormatError(f"bad label magic 0x{magic:08x} in {label_path}")
        lcount = _read_u32be(f, "label count")
        payload = f.read(lcount)
        if len(payload) != lcount:
            raise FormatError(f"truncated label payload in {label_path}")
        labels = np.frombuffer(payload, dtype=np.uint8).astype(np.int64)
    if lcount != count:
        raise FormatError(f"image count {count} != label count {lcount}")
    return LabeledDataset(images.astype(dtype) / 255.0, labels, m=10)


def load_cifar10(batch_paths: Sequence, dtype=np.float64) -> LabeledDataset:
    """Parse CIFAR-10 binary batches (3073-byte records, RGB planes)."""
    all_images, all_labels = [], []
    for path in batch_paths:
        with _open_maybe_gzip(path) as f:
            raw = f.read()
        if not raw or len(raw) % CIFAR_RECORD_BYTES:
            raise FormatError(
                f"{path}: length {len(raw)} is not a multiple of {CIFAR_RECORD_BYTES}"
            )
        records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
        all_labels.append(records[:, 0].astype(np.int64))
        all_images.append(records[:, 1:].reshape(-1, 3, 32, 32))
    images = np.concatenate(all_images)
    labels = np.concatenate(all_labels)
    return LabeledDataset(images.astype(dtype) / 255.0, labels, m=10)


def stratified_split(
    dataset: LabeledDataset, train_size: int, val_size: int, seed: int
) -> tuple[LabeledDataset, LabeledDataset]:
    """Disjoint class-balanced train/validation subsets (seeded)."""
    m = dataset.m
    if train_size % m or val_size % m:
        raise ConfigError(
            f"train/val sizes ({train_size}, {val_size}) must be divisible by {m} classes"
        )
    per_train = train_size // m
    per_val = val_size // m
    rng = np.random.default_rng(seed)
    train_idx, val_idx = [], []
    for cls in range(m):
        pool = np.flatnonzero(dataset.labels == cls)
        if pool.size < per_train + per_val:
            raise ConfigError(
                f"class {cls} has {pool.size} examples, needs {per_train + per_val}"
            )
        picked = rng.permutation(pool)[: per_train + per_val]
        train_idx.append(picked[:per_train])
        val_idx.append(picked[per_train:])
    return (
        dataset.subset(np.concatenate(train_idx)),
        dataset.subset(np.concatenate(val_idx)),
    )


def batches(
    dataset: LabeledDataset, batch_size: int, epoch_seed: int
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Seeded per-epoch shuffle; the last batch may be smaller."""
    if batch_size < 1:
        raise ConfigError(f"batch size must be >= 1, got {batch_size}")
    order = np.random.default_rng(epoch_seed).permutation(len(dataset))
    for start in range(0, len(dataset), batch_size):
        sel = order[start : start + batch_size]
        yield dataset.images[sel], dataset.labels[sel]

"""Readers for the MNIST / FashionMNIST IDX files and CIFAR-10 binary batches.

Images stay as uint8 arrays of shape (height, width, channels) until
:func:`normalize_image` turns them into floats in [0, 1].  Files may be
gzip-compressed; the container is detected from its leading bytes.
"""
import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD = 1 + 3 * 1024
NUM_CLASSES = 10


class DatasetFormatError(ValueError):
    """Raised when a file does not match the expected on-disk layout."""


@dataclass
class LabeledSet:
    images: list
    labels: np.ndarray

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise DatasetFormatError(
                f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self):
        return len(self.labels)


def _read_bytes(path):
    data = Path(path).read_bytes()
    if data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    return data


def _check_labels(labels, num_classes=NUM_CLASSES):
    if len(labels) and int(labels.max()) >= num_classes:
        raise DatasetFormatError(
            f"label {int(labels.max())} out of range for {num_classes} classes")


def load_idx_images(path):
    """Return a uint8 array of shape (count, rows, cols, 1)."""
    data = _read_bytes(path)
    if len(data) < 16:
        raise DatasetFormatError(f"{path}: truncated IDX header")
    magic, count, rows, cols = struct.unpack(">IIII", data[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise DatasetFormatError(f"{path}: bad IDX image magic 0x{magic:08x}")
    expected = count * rows * cols
    if len(data) - 16 != expected:
        raise DatasetFormatError(
            f"{path}: expected {expected} pixel bytes, found {len(data) - 16}")
    pixels = np.frombuffer(data, dtype=np.uint8, offset=16)
    return pixels.reshape(count, rows, cols, 1)


def load_idx_labels(path, num_classes=NUM_CLASSES):
    data = _read_bytes(path)
    if len(data) < 8:
        raise DatasetFormatError(f"{path}: truncated IDX header")
    magic, count = struct.unpack(">II", data[:8])
    if magic != IDX_LABELS_MAGIC:
        raise DatasetFormatError(f"{path}: bad IDX label magic 0x{magic:08x}")
    if len(data) - 8 != count:
        raise DatasetFormatError(
            f"{path}: expected {count} label bytes, found {len(data) - 8}")
    labels = np.frombuffer(data, dtype=np.uint8, offset=8)
    _check_labels(labels, num_classes)
    return labels


def write_idx_images(path, images):
    images = np.asarray(images, dtype=np.uint8)
    if images.ndim == 4:
        images = images[..., 0]
    count, rows, cols = images.shape
    header = struct.pack(">IIII", IDX_IMAGES_MAGIC, count, rows, cols)
    Path(path).write_bytes(header + images.tobytes())


def write_idx_labels(path, labels):
    labels = np.asarray(labels, dtype=np.uint8)
    Path(path).write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)) + labels.tobytes())


def load_cifar10_batch(path):
    """Read a CIFAR-10 binary batch into channel-interleaved 32x32x3 images."""
    data = _read_bytes(path)
    if len(data) % CIFAR_RECORD:
        raise DatasetFormatError(
            f"{path}: length {len(data)} is not a multiple of {CIFAR_RECORD}")
    records = np.frombuffer(data, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = records[:, 0].copy()
    _check_labels(labels)
    # planar (3, 32, 32) -> interleaved (32, 32, 3)
    planes = records[:, 1:].reshape(-1, 3, 32, 32)
    images = np.ascontiguousarray(planes.transpose(0, 2, 3, 1))
    return LabeledSet(images=list(images), labels=labels)


def normalize_image(img):
    """Map every byte b to b / 255."""
    return np.asarray(img, dtype=np.uint8).astype(np.float64) / 255.0


def _find(directory, patterns):
    for pattern in patterns:
        hits = sorted(Path(directory).glob(pattern))
        if hits:
            return hits[0]
    raise FileNotFoundError(f"no file matching {patterns} in {directory}")


def load_dataset(source, dataset="mnist", split="train"):
    """Load a whole split as a :class:`LabeledSet`.

    ``source`` is either a directory holding the standard file names or a
    single images file (IDX) / batch file (CIFAR-10).
    """
    source = Path(source)
    if dataset in ("mnist", "fashion"):
        if source.is_dir():
            prefix = "t10k" if split == "test" else "train"
            img_path = _find(source, [f"{prefix}-images-idx3-ubyte*", "*images-idx3-ubyte*"])
            lbl_path = _find(source, [f"{prefix}-labels-idx1-ubyte*", "*labels-idx1-ubyte*"])
        else:
            img_path = source
            lbl_path = source.with_name(source.name.replace("images-idx3", "labels-idx1"))
        images = load_idx_images(img_path)
        labels = load_idx_labels(lbl_path)
        return LabeledSet(images=list(images), labels=labels)
    if dataset == "cifar10":
        if source.is_file():
            return load_cifar10_batch(source)
        names = ["test_batch*.bin"] if split == "test" else ["data_batch_*.bin"]
        paths = sorted(p for n in names for p in source.glob(n))
        if not paths:
            raise FileNotFoundError(f"no CIFAR-10 batches in {source}")
        parts = [load_cifar10_batch(p) for p in paths]
        return LabeledSet(images=[im for p in parts for im in p.images],
                          labels=np.concatenate([p.labels for p in parts]))
    raise ValueError(f"unknown dataset {dataset!r}")

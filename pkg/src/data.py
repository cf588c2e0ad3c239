import gzip
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Union

import numpy as np

from .errors import DatasetConsistencyError, DatasetFormatError, EmptyDatasetError, InvalidInputError

logger = logging.getLogger(__name__)

IMAGE_MAGIC = 2051  # 0x00000803
LABEL_MAGIC = 2049  # 0x00000801


@dataclass(frozen=True)
class Dataset:
    """Flattened images in [0, 1] with integer digit labels"""
    images: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.images.ndim != 2:
            raise InvalidInputError(f"images must be (N, D), got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise DatasetConsistencyError(
                f"{len(self.images)} images but {len(self.labels)} labels"
            )

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def image_dim(self) -> int:
        return self.images.shape[1]

    def subset(self, indices: np.ndarray) -> "Dataset":
        return Dataset(self.images[indices], self.labels[indices])


def _read_bytes(path: Union[str, Path]) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as f:
        return f.read()


def _parse_images(raw: bytes, path) -> np.ndarray:
    if len(raw) < 16:
        raise DatasetFormatError(f"{path}: truncated image header")
    magic, count, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IMAGE_MAGIC:
        raise DatasetFormatError(f"{path}: image magic {magic}, expected {IMAGE_MAGIC}")
    payload = np.frombuffer(raw, dtype=np.uint8, offset=16)
    if payload.size != count * rows * cols:
        raise DatasetFormatError(
            f"{path}: expected {count * rows * cols} pixel bytes, found {payload.size}"
        )
    return payload.reshape(count, rows * cols).astype(float) / 255.0


def _parse_labels(raw: bytes, path) -> np.ndarray:
    if len(raw) < 8:
        raise DatasetFormatError(f"{path}: truncated label header")
    magic, count = struct.unpack(">II", raw[:8])
    if magic != LABEL_MAGIC:
        raise DatasetFormatError(f"{path}: label magic {magic}, expected {LABEL_MAGIC}")
    payload = np.frombuffer(raw, dtype=np.uint8, offset=8)
    if payload.size != count:
        raise DatasetFormatError(f"{path}: expected {count} labels, found {payload.size}")
    return payload.astype(np.int64)


def load_idx(images_path: Union[str, Path], labels_path: Union[str, Path]) -> Dataset:
    """Parse an IDX image/label pair (optionally gzipped); pixels scaled to [0, 1]"""
    images = _parse_images(_read_bytes(images_path), images_path)
    labels = _parse_labels(_read_bytes(labels_path), labels_path)
    if len(images) != len(labels):
        raise DatasetConsistencyError(
            f"{images_path} holds {len(images)} images but {labels_path} holds {len(labels)} labels"
        )
    logger.info("loaded %d images of dim %d from %s", len(images), images.shape[1], images_path)
    return Dataset(images, labels)


def write_idx(images_path: Union[str, Path], labels_path: Union[str, Path], images: np.ndarray,
              labels: np.ndarray, rows: int = 28, cols: int = 28) -> None:
    """Write raw uint8 images (N, rows*cols) and labels as an IDX pair"""
    images = np.asarray(images, dtype=np.uint8).reshape(len(images), rows * cols)
    labels = np.asarray(labels, dtype=np.uint8)
    Path(images_path).write_bytes(struct.pack(">IIII", IMAGE_MAGIC, len(images), rows, cols) + images.tobytes())
    Path(labels_path).write_bytes(struct.pack(">II", LABEL_MAGIC, len(labels)) + labels.tobytes())


def filter_digits(ds: Dataset, digits: Iterable[int]) -> Dataset:
    """Keep only the requested labels, preserving order"""
    digits = sorted(set(int(d) for d in digits))
    if not digits or any(d < 0 or d > 9 for d in digits):
        raise InvalidInputError(f"digits must be a nonempty subset of 0..9, got {digits}")
    mask = np.isin(ds.labels, digits)
    if not mask.any():
        raise EmptyDatasetError(f"no samples with labels {digits}")
    return Dataset(ds.images[mask], ds.labels[mask])

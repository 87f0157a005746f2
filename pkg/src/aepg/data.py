"""Datasets: synthetic Gaussian blobs, IDX files and numeric CSV."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxError(ValueError):
    pass


class IdxMagicError(IdxError):
    def __init__(self, path, observed: int, expected: int):
        self.observed = observed
        self.expected = expected
        super().__init__(f"{path}: bad magic 0x{observed:08x}, expected 0x{expected:08x}")


class IdxTruncatedError(IdxError):
    pass


class IdxCountMismatchError(IdxError):
    pass


class CsvValueError(ValueError):
    def __init__(self, row: int, col: int, cell: str):
        self.row, self.col = row, col
        super().__init__(f"non-numeric cell {cell!r} at row {row}, column {col}")


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray
    y: np.ndarray
    n_classes: int
    split: str = "train"

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.intp)
        if x.ndim != 2 or y.shape != (x.shape[0],):
            raise ValueError(f"features {x.shape} and labels {y.shape} do not align")
        if np.isnan(x).any():
            raise ValueError("features contain NaN")
        if y.size and (y.min() < 0 or y.max() >= self.n_classes):
            raise ValueError(f"labels outside [0, {self.n_classes})")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, idx) -> Dataset:
        return Dataset(self.x[idx], self.y[idx], self.n_classes, self.split)


def gaussian_blobs(n_classes: int, dim: int, n_per_class: int, spread: float, margin: float,
                   seed: int | np.random.Generator, train_frac: float = 0.8,
                   informative_dim: int | None = None) -> tuple[Dataset, Dataset]:
    """Isotropic Gaussian classes with means on the radius-``margin`` sphere.

    With ``informative_dim`` the means lie on the sphere of a random
    ``informative_dim``-dimensional subspace, so the remaining directions carry
    only noise. Each class is split 80/20 into train/test, so both splits
    contain every class.
    """
    if n_classes < 2 or dim < 2:
        raise ValueError("need at least 2 classes and 2 dimensions")
    if n_per_class < 2 or spread < 0 or margin <= 0 or not 0 < train_frac < 1:
        raise ValueError("invalid blob parameters")
    if informative_dim is not None and not 2 <= informative_dim <= dim:
        raise ValueError("informative_dim must lie in [2, dim]")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if informative_dim is None or informative_dim == dim:
        dirs = rng.normal(size=(n_classes, dim))
    else:
        basis, _ = np.linalg.qr(rng.normal(size=(dim, informative_dim)))
        dirs = rng.normal(size=(n_classes, informative_dim)) @ basis.T
    means = margin * dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    n_train = int(round(train_frac * n_per_class))
    n_train = min(max(n_train, 1), n_per_class - 1)
    xs_tr, ys_tr, xs_te, ys_te = [], [], [], []
    for c in range(n_classes):
        pts = means[c] + spread * rng.normal(size=(n_per_class, dim))
        xs_tr.append(pts[:n_train])
        xs_te.append(pts[n_train:])
        ys_tr.append(np.full(n_train, c))
        ys_te.append(np.full(n_per_class - n_train, c))
    train = Dataset(np.concatenate(xs_tr), np.concatenate(ys_tr), n_classes, "train")
    test = Dataset(np.concatenate(xs_te), np.concatenate(ys_te), n_classes, "test")
    return train, test


# ------------------------------------------------------------------ IDX


def _read_idx(path, expected_magic: int) -> tuple[list[int], bytes]:
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise IdxTruncatedError(f"{path}: file shorter than the magic number")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise IdxMagicError(path, magic, expected_magic)
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IdxTruncatedError(f"{path}: header truncated")
    dims = list(struct.unpack(f">{ndim}I", raw[4:header]))
    body = raw[header:]
    need = int(np.prod(dims))
    if len(body) < need:
        raise IdxTruncatedError(f"{path}: expected {need} data bytes, found {len(body)}")
    return dims, body[:need]


def read_idx_images(path) -> np.ndarray:
    """Raw uint8 images flattened to (N, rows*cols)."""
    dims, body = _read_idx(path, IDX_IMAGES_MAGIC)
    return np.frombuffer(body, dtype=np.uint8).reshape(dims[0], -1)


def read_idx_labels(path) -> np.ndarray:
    dims, body = _read_idx(path, IDX_LABELS_MAGIC)
    return np.frombuffer(body, dtype=np.uint8).reshape(dims[0])


def load_idx(images_path, labels_path, n_classes: int | None = None, split: str = "train") -> Dataset:
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if len(images) != len(labels):
        raise IdxCountMismatchError(f"{len(images)} images but {len(labels)} labels")
    k = n_classes if n_classes is not None else int(labels.max()) + 1 if labels.size else 1
    return Dataset(images.astype(np.float64) / 255.0, labels.astype(np.intp), k, split)


def write_idx_images(path, images: np.ndarray) -> None:
    images = np.asarray(images, dtype=np.uint8)
    header = struct.pack(">IIII", IDX_IMAGES_MAGIC, *images.shape)
    Path(path).write_bytes(header + images.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    Path(path).write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, labels.size) + labels.tobytes())


# ------------------------------------------------------------------ CSV


def _read_numeric_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ValueError(f"{path}: empty CSV")

    def parse(row, i):
        out = []
        for j, cell in enumerate(row):
            try:
                out.append(float(cell))
            except ValueError:
                raise CsvValueError(i, j, cell) from None
        return out

    try:
        parse(rows[0], 0)
        start = 0
    except CsvValueError:
        start = 1  # header row
    return np.array([parse(r, i) for i, r in enumerate(rows[start:], start)], dtype=np.float64)


def load_csv(path, label_column: int = -1, test_path=None,
             n_classes: int | None = None) -> Dataset | tuple[Dataset, Dataset]:
    """Numeric CSV with an optional header row.

    Features are standardized with the train file's mean and std (std of a
    constant column is taken as 1). With ``test_path`` the test split is
    standardized with the same train statistics and both splits are returned.
    """
    table = _read_numeric_csv(path)
    col = label_column % table.shape[1]
    x = np.delete(table, col, axis=1)
    y = table[:, col].astype(np.intp)
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    tables = [(x, y)]
    if test_path is not None:
        t = _read_numeric_csv(test_path)
        tables.append((np.delete(t, col, axis=1), t[:, col].astype(np.intp)))
    k = n_classes if n_classes is not None else int(max(ys.max() for _, ys in tables)) + 1
    out = [Dataset((xs - mu) / sd, ys, k, split)
           for (xs, ys), split in zip(tables, ("train", "test"))]
    return out[0] if test_path is None else (out[0], out[1])

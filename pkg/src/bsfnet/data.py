"""Datasets: CSV and IDX loading, standardization, label encoding."""

from __future__ import annotations

import csv
import gzip
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import FormatError, InputError, ParseError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    feature_names: list[str] | None = None
    class_names: list[str] | None = None
    categories: dict[str, list[str]] = field(default_factory=dict)
    mean: np.ndarray | None = None
    std: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.features) != len(self.labels):
            raise InputError(f"{len(self.features)} samples but {len(self.labels)} labels")
        if len(self.labels) and self.labels.min() < 0:
            raise InputError("labels must be non-negative class indices")

    def __len__(self):
        return len(self.labels)

    @property
    def n_classes(self) -> int:
        if self.class_names is not None:
            return len(self.class_names)
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    @property
    def sample_shape(self) -> tuple:
        return tuple(self.features.shape[1:])

    @property
    def is_tabular(self) -> bool:
        return self.features.ndim == 2

    def subset(self, idx) -> "Dataset":
        return replace(self, features=self.features[idx], labels=self.labels[idx])

    def select_features(self, idx: Sequence[int]) -> "Dataset":
        """Keep the given columns, in the given order, with their names."""
        idx = [int(i) for i in idx]
        names = [self.feature_names[i] for i in idx] if self.feature_names else None
        cats = {k: v for k, v in self.categories.items() if names and k in names}
        return replace(
            self, features=self.features[:, idx], feature_names=names, categories=cats,
            mean=None if self.mean is None else self.mean[idx],
            std=None if self.std is None else self.std[idx],
        )

    def to_csv(self, path, label_column: str = "class") -> None:
        """Write back in the format :func:`load_csv` reads.

        Categorical columns are written as their original strings, so
        reloading reproduces the same integer codes.
        """
        names = self.feature_names or [f"f{i}" for i in range(self.features.shape[1])]
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(list(names) + [label_column])
            for row, label in zip(self.features, self.labels):
                cells = []
                for name, v in zip(names, row):
                    cats = self.categories.get(name)
                    cells.append(cats[int(v)] if cats else repr(float(v)))
                cells.append(self.class_names[label] if self.class_names else str(int(label)))
                w.writerow(cells)


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def load_csv(path, label_column: str, categorical_columns: Sequence[str] = ()) -> Dataset:
    """Read a comma-separated file with a header row.

    Categorical columns get integer codes in order of first appearance.
    Labels become class indices: numeric labels in ascending numeric order,
    anything else in order of first appearance.
    """
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as f:
            rows = list(csv.reader(f))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    if not rows:
        raise ParseError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if label_column not in header:
        raise ParseError(f"{path}: no label column {label_column!r}", column=label_column)
    unknown = [c for c in categorical_columns if c not in header]
    if unknown:
        raise ParseError(f"{path}: unknown categorical column", column=unknown[0])
    body = [r for r in rows[1:] if r]
    if not body:
        raise ParseError(f"{path}: no data rows")
    for i, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise ParseError(f"{path}: expected {len(header)} cells, found {len(r)}", row=i)

    label_idx = header.index(label_column)
    feature_cols = [j for j in range(len(header)) if j != label_idx]
    categorical = set(categorical_columns)
    categories: dict[str, list[str]] = {}
    features = np.empty((len(body), len(feature_cols)))
    for k, j in enumerate(feature_cols):
        name = header[j]
        if name in categorical:
            codes: dict[str, int] = {}
            for i, r in enumerate(body):
                features[i, k] = codes.setdefault(r[j].strip(), len(codes))
            categories[name] = list(codes)
            continue
        for i, r in enumerate(body):
            try:
                features[i, k] = float(r[j])
            except ValueError:
                raise ParseError(f"{path}: non-numeric value {r[j]!r}", row=i + 2, column=name) from None

    raw_labels = [r[label_idx].strip() for r in body]
    uniq = list(dict.fromkeys(raw_labels))
    if all(_is_number(v) for v in uniq):
        uniq.sort(key=float)
    lookup = {v: n for n, v in enumerate(uniq)}
    if len(uniq) < 2:
        raise InputError(f"{path}: need at least two classes, found {len(uniq)}")
    return Dataset(
        features=features,
        labels=np.array([lookup[v] for v in raw_labels]),
        feature_names=[header[j] for j in feature_cols],
        class_names=uniq,
        categories=categories,
    )


def _read_maybe_gzip(path) -> bytes:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    return gzip.decompress(raw) if raw[:2] == b"\x1f\x8b" else raw


def _idx_header(raw: bytes, magic: int, ndim: int, path) -> tuple[int, ...]:
    need = 4 * (1 + ndim)
    if len(raw) < need:
        raise FormatError(f"{path}: truncated IDX header")
    found = struct.unpack(">I", raw[:4])[0]
    if found != magic:
        raise FormatError(f"{path}: magic number {found:#010x}, expected {magic:#010x}")
    dims = struct.unpack(f">{ndim}I", raw[4:need])
    if len(raw) - need != int(np.prod(dims)):
        raise FormatError(f"{path}: payload of {len(raw) - need} bytes does not match dimensions {dims}")
    return dims


def load_idx(images_path, labels_path, limit: int | None = None) -> Dataset:
    """MNIST-style IDX image/label pair (optionally gzipped).

    Pixels are scaled to [0, 1]; images come out as ``[n, 1, rows, cols]``.
    """
    img_raw = _read_maybe_gzip(images_path)
    lab_raw = _read_maybe_gzip(labels_path)
    n, rows, cols = _idx_header(img_raw, IDX_IMAGES_MAGIC, 3, images_path)
    (m,) = _idx_header(lab_raw, IDX_LABELS_MAGIC, 1, labels_path)
    if n != m:
        raise FormatError(f"{n} images but {m} labels")
    if limit is not None:
        n = min(n, int(limit))
    pixels = np.frombuffer(img_raw, dtype=np.uint8, count=n * rows * cols, offset=16)
    labels = np.frombuffer(lab_raw, dtype=np.uint8, count=n, offset=8).astype(np.int64)
    features = pixels.reshape(n, 1, rows, cols).astype(np.float64) / 255.0
    return Dataset(features=features, labels=labels,
                   class_names=[str(c) for c in range(max(10, int(labels.max(initial=0)) + 1))])


def column_stats(features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column means and population standard deviations (constant columns get 1)."""
    mean = features.mean(axis=0)
    std = features.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return mean, std


def standardize(data: Dataset, stats: tuple[np.ndarray, np.ndarray] | None = None) -> Dataset:
    """Center and scale each column; pass ``stats`` to reuse training-set statistics."""
    if not data.is_tabular:
        raise InputError("standardize expects a tabular dataset")
    mean, std = stats if stats is not None else column_stats(data.features)
    return replace(data, features=(data.features - mean) / std, mean=mean, std=std)


def one_hot(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise InputError(f"labels must lie in [0, {n_classes})")
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out

"""Dataset container, CSV ingestion, splitting, unit-interval scaling, class weights."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .rng import rng_from

__all__ = [
    "LabeledDataset",
    "ScaleParams",
    "Holdout",
    "KFold",
    "ParseError",
    "SchemaError",
    "load_csv",
    "save_csv",
    "split",
    "split_indices",
    "save_split_indices",
    "load_split_indices",
    "scale_unit_interval",
    "class_weights",
]


class ParseError(ValueError):
    """Malformed CSV content (non-rectangular rows, non-numeric or non-finite cells)."""


class SchemaError(ValueError):
    """Content violates the declared schema (unknown label under a fixed class count)."""


@dataclass(frozen=True)
class LabeledDataset:
    """Immutable feature matrix plus dense integer class labels.

    Labels are always in ``0..class_count-1``; ``label_names`` records the
    original label of each dense id when the source used other tokens.
    """

    features: np.ndarray  # (n, p) float64
    labels: np.ndarray  # (n,) int64
    class_count: int
    feature_names: tuple[str, ...] | None = None
    label_names: tuple[str, ...] | None = None

    def __post_init__(self):
        feats = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        labs = np.ascontiguousarray(np.asarray(self.labels, dtype=np.int64))
        if feats.ndim != 2:
            raise ValueError("features must be a 2-d matrix")
        if labs.ndim != 1 or labs.shape[0] != feats.shape[0]:
            raise ValueError("labels must be one per feature row")
        if feats.shape[0] < 1 or feats.shape[1] < 1:
            raise ValueError("dataset needs n >= 1 rows and p >= 1 features")
        if not np.all(np.isfinite(feats)):
            raise ValueError("features contain non-finite values")
        if self.class_count < 2:
            raise ValueError("class_count must be >= 2")
        if labs.size and (labs.min() < 0 or labs.max() >= self.class_count):
            raise ValueError("labels must lie in [0, class_count-1]")
        feats.setflags(write=False)
        labs.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labs)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def subset(self, index: np.ndarray) -> "LabeledDataset":
        return replace(self, features=self.features[index], labels=self.labels[index])

    def with_arrays(self, features=None, labels=None) -> "LabeledDataset":
        return replace(
            self,
            features=self.features if features is None else features,
            labels=self.labels if labels is None else labels,
        )


@dataclass(frozen=True)
class ScaleParams:
    """Per-feature min/max fitted on a training set."""

    feature_min: np.ndarray
    feature_max: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.feature_min, dtype=np.float64)
        hi = np.asarray(self.feature_max, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("min/max must be vectors of equal length")
        if np.any(lo > hi):
            raise ValueError("feature_min must be <= feature_max")
        object.__setattr__(self, "feature_min", lo)
        object.__setattr__(self, "feature_max", hi)

    def apply(self, features: np.ndarray) -> np.ndarray:
        span = self.feature_max - self.feature_min
        safe = np.where(span > 0, span, 1.0)
        out = (features - self.feature_min) / safe
        # degenerate features (min == max) map to constant 0
        return np.where(span > 0, out, 0.0)


@dataclass(frozen=True)
class Holdout:
    fraction: float = 0.8

    def __post_init__(self):
        if not 0.0 < self.fraction < 1.0:
            raise ValueError("holdout fraction must be in (0, 1)")


@dataclass(frozen=True)
class KFold:
    k: int

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("kfold needs k >= 2")


def _sniff_header(first_row: list[str], label_column: int) -> bool:
    """A header is any first row whose feature cells do not all parse as numbers."""
    for j, cell in enumerate(first_row):
        if j == label_column:
            continue
        try:
            float(cell)
        except ValueError:
            return True
    return False


def load_csv(
    path,
    label_column: int | str = -1,
    class_count: int | None = None,
    has_header: bool | None = None,
) -> LabeledDataset:
    """Read a rectangular numeric CSV with one label column.

    Integer label tokens map to dense ids in sorted numeric order (so files
    already labeled 0..J-1 round-trip unchanged); other tokens map in order
    of first appearance.  With ``class_count`` given, labels outside the
    declared schema raise ``SchemaError``.
    """
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    if not rows:
        raise ParseError(f"{path}: no rows")

    width = len(rows[0])
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ParseError(f"{path}: row {i + 1} has {len(row)} cells, expected {width}")
    if width < 2:
        raise ParseError(f"{path}: need at least one feature column plus the label column")

    header: list[str] | None = None
    if isinstance(label_column, str):
        header = [c.strip() for c in rows[0]]
        if label_column not in header:
            raise ParseError(f"{path}: no column named {label_column!r}")
        label_idx = header.index(label_column)
        body = rows[1:]
    else:
        label_idx = label_column % width
        if has_header is None:
            has_header = _sniff_header(rows[0], label_idx)
        header = [c.strip() for c in rows[0]] if has_header else None
        body = rows[1:] if has_header else rows
    if not body:
        raise ParseError(f"{path}: no rows")

    n, p = len(body), width - 1
    features = np.empty((n, p), dtype=np.float64)
    raw_labels: list[str] = []
    offset = 2 if header is not None else 1
    for i, row in enumerate(body):
        k = 0
        for j, cell in enumerate(row):
            if j == label_idx:
                raw_labels.append(cell.strip())
                continue
            try:
                value = float(cell)
            except ValueError:
                raise ParseError(f"{path}: row {i + offset}, column {j + 1}: not a number: {cell!r}") from None
            if not math.isfinite(value):
                raise ParseError(f"{path}: row {i + offset}, column {j + 1}: non-finite value {cell!r}")
            features[i, k] = value
            k += 1

    labels, j_found, names = _encode_labels(raw_labels, class_count, path)
    j = class_count if class_count is not None else j_found
    feature_names = None
    if header is not None:
        feature_names = tuple(h for idx, h in enumerate(header) if idx != label_idx)
    return LabeledDataset(features, labels, j, feature_names=feature_names, label_names=names)


def _encode_labels(raw: list[str], class_count: int | None, path) -> tuple[np.ndarray, int, tuple[str, ...]]:
    all_int = True
    ints: list[int] = []
    for tok in raw:
        try:
            ints.append(int(tok))
        except ValueError:
            all_int = False
            break
    if all_int:
        uniq = sorted(set(ints))
        if class_count is not None:
            bad = [v for v in uniq if not 0 <= v < class_count]
            if bad:
                raise SchemaError(f"{path}: label {bad[0]} outside declared 0..{class_count - 1}")
            mapping = {v: v for v in range(class_count)}
            names = tuple(str(v) for v in range(class_count))
        else:
            mapping = {v: i for i, v in enumerate(uniq)}
            names = tuple(str(v) for v in uniq)
        encoded = np.array([mapping[v] for v in ints], dtype=np.int64)
        return encoded, len(uniq), names

    order: dict[str, int] = {}
    for tok in raw:
        if tok not in order:
            if class_count is not None and len(order) == class_count:
                raise SchemaError(f"{path}: label {tok!r} exceeds declared class count {class_count}")
            order[tok] = len(order)
    encoded = np.array([order[t] for t in raw], dtype=np.int64)
    return encoded, len(order), tuple(order)


def save_csv(dataset: LabeledDataset, path, write_header: bool = True) -> None:
    """Write the dataset in the format ``load_csv`` reads (label column last)."""
    names = dataset.feature_names or tuple(f"f{j}" for j in range(dataset.p))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if write_header:
            writer.writerow(list(names) + ["label"])
        for i in range(dataset.n):
            row = [repr(float(v)) for v in dataset.features[i]]
            if dataset.label_names is not None:
                row.append(dataset.label_names[dataset.labels[i]])
            else:
                row.append(str(int(dataset.labels[i])))
            writer.writerow(row)


def split_indices(n: int, mode: Holdout | KFold, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Seeded train/test index pairs; kfold test folds partition ``range(n)``."""
    perm = rng_from(seed).permutation(n)
    if isinstance(mode, Holdout):
        n_train = int(round(mode.fraction * n))
        return [(np.sort(perm[:n_train]), np.sort(perm[n_train:]))]
    if mode.k > n:
        raise ValueError(f"kfold k={mode.k} exceeds n={n}")
    folds = np.array_split(perm, mode.k)
    pairs = []
    for i in range(mode.k):
        test = np.sort(folds[i])
        train = np.sort(np.concatenate([folds[j] for j in range(mode.k) if j != i]))
        pairs.append((train, test))
    return pairs


def split(dataset: LabeledDataset, mode: Holdout | KFold, seed: int) -> list[tuple[LabeledDataset, LabeledDataset]]:
    return [
        (dataset.subset(train), dataset.subset(test))
        for train, test in split_indices(dataset.n, mode, seed)
    ]


def save_split_indices(pairs, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fold", "role", "row"])
        for fold, (train, test) in enumerate(pairs):
            for idx in train:
                writer.writerow([fold, "train", int(idx)])
            for idx in test:
                writer.writerow([fold, "test", int(idx)])


def load_split_indices(path) -> list[tuple[np.ndarray, np.ndarray]]:
    folds: dict[int, dict[str, list[int]]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for fold, role, row in reader:
            folds.setdefault(int(fold), {"train": [], "test": []})[role].append(int(row))
    return [
        (np.array(folds[f]["train"], dtype=np.int64), np.array(folds[f]["test"], dtype=np.int64))
        for f in sorted(folds)
    ]


def scale_unit_interval(
    train: LabeledDataset, others: tuple[LabeledDataset, ...] = ()
) -> tuple[tuple[LabeledDataset, ...], ScaleParams]:
    """Fit per-feature min/max on ``train`` only; map all datasets through it.

    Non-train values may land outside [0, 1]; degenerate features map to 0.
    """
    params = ScaleParams(train.features.min(axis=0), train.features.max(axis=0))
    scaled = tuple(ds.with_arrays(features=params.apply(ds.features)) for ds in (train, *others))
    return scaled, params


def class_weights(dataset: LabeledDataset) -> np.ndarray:
    """Empirical class frequencies, sorted descending, summing to 1."""
    counts = np.bincount(dataset.labels, minlength=dataset.class_count)
    w = counts / counts.sum()
    return np.sort(w)[::-1]

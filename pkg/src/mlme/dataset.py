"""Multi-label dataset loading, validation, partitioning and instance weights.

A dataset couples an N x (m+1) feature matrix (column 0 is a constant 1.0
bias term) with an N x d binary label matrix.  All downstream linear models
are (m+1)-dimensional, so the bias is materialized here once instead of
being special-cased in every model.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .errors import (
    ArgumentError,
    DataParseError,
    LabelError,
    SchemaError,
    UnsupportedAttributeError,
)


class Instance(NamedTuple):
    features: np.ndarray  # length m+1, features[0] == 1.0
    labels: np.ndarray    # length d, entries in {0, 1}


@dataclass(frozen=True)
class Dataset:
    """Immutable container for N instances of (biased features, binary labels)."""

    features: np.ndarray  # (N, m+1) float64
    labels: np.ndarray    # (N, d) int8

    def __post_init__(self):
        # copy so freezing never mutates a caller-owned array
        X = np.array(self.features, dtype=np.float64, order="C")
        Y = np.array(self.labels, dtype=np.int8, order="C")
        if X.ndim != 2 or Y.ndim != 2:
            raise ArgumentError("features and labels must be 2-D arrays")
        if X.shape[0] != Y.shape[0]:
            raise ArgumentError(
                f"feature rows ({X.shape[0]}) != label rows ({Y.shape[0]})")
        if X.shape[0] < 1:
            raise ArgumentError("dataset needs at least one instance")
        if X.shape[1] < 1 or not np.all(X[:, 0] == 1.0):
            raise ArgumentError("features[:, 0] must be the constant 1.0 bias term")
        if not np.all(np.isfinite(X)):
            raise ArgumentError("feature values must be finite")
        if not np.isin(Y, (0, 1)).all():
            raise LabelError("labels must be 0 or 1")
        X.flags.writeable = False
        Y.flags.writeable = False
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", Y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def m(self) -> int:
        """Feature dimensionality excluding the bias term."""
        return self.features.shape[1] - 1

    @property
    def d(self) -> int:
        return self.labels.shape[1]

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, i: int) -> Instance:
        return Instance(self.features[i], self.labels[i])

    def __iter__(self) -> Iterator[Instance]:
        for i in range(self.n):
            yield self[i]

    @classmethod
    def from_raw(cls, raw_features: np.ndarray, labels: np.ndarray) -> "Dataset":
        """Build a dataset from an unbias-ed (N, m) feature matrix."""
        raw = np.asarray(raw_features, dtype=np.float64)
        if raw.ndim != 2:
            raise ArgumentError("raw feature matrix must be 2-D")
        X = np.hstack([np.ones((raw.shape[0], 1)), raw])
        return cls(X, np.asarray(labels))

    def subset(self, indices: Sequence[int]) -> "Dataset":
        idx = np.asarray(indices, dtype=np.intp)
        return Dataset(self.features[idx], self.labels[idx])

    def save_csv(self, path) -> None:
        """Write the dataset back out as CSV (bias column dropped).

        Floats are written with repr precision so that a reload is
        bitwise-identical to the original dataset.
        """
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# m={self.m} d={self.d}\n")
            for i in range(self.n):
                feats = [repr(v) for v in self.features[i, 1:].tolist()]
                labs = [str(int(v)) for v in self.labels[i]]
                fh.write(",".join(feats + labs) + "\n")


@dataclass(frozen=True)
class WeightVector:
    """Nonnegative per-instance weights with positive total mass."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64, order="C")
        if w.ndim != 1:
            raise ArgumentError("weights must be 1-D")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ArgumentError("weights must be finite and nonnegative")
        if w.sum() <= 0:
            raise ArgumentError("weights must have positive sum")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, n: int) -> "WeightVector":
        return cls(np.full(n, 1.0 / n))

    def __len__(self) -> int:
        return len(self.weights)

    def normalize(self) -> "WeightVector":
        return WeightVector(self.weights / self.weights.sum())

    def subset(self, indices: Sequence[int]) -> "WeightVector":
        idx = np.asarray(indices, dtype=np.intp)
        return WeightVector(self.weights[idx])


def as_weight_array(w, n: int) -> np.ndarray:
    """Accept a WeightVector or a plain array; validate length and sign."""
    arr = w.weights if isinstance(w, WeightVector) else np.asarray(w, dtype=np.float64)
    if arr.shape != (n,):
        raise ArgumentError(f"weight vector has length {arr.shape}, expected ({n},)")
    if np.any(arr < 0):
        raise ArgumentError("weights must be nonnegative")
    return arr


def load_csv(path, d: int) -> Dataset:
    """Load a comma-separated file whose last ``d`` columns are binary labels.

    Lines starting with '#' and blank lines are skipped.  The feature count m
    is inferred from the first data row; a bias column is prepended.
    """
    if d < 1:
        raise ArgumentError("label count d must be >= 1")
    rows = []
    labels = []
    n_cols = None
    row_no = 0
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            row_no += 1
            parts = line.split(",")
            if n_cols is None:
                n_cols = len(parts)
                if n_cols < d + 1:
                    raise SchemaError(
                        f"row {row_no}: needs at least {d + 1} columns "
                        f"(>=1 feature + {d} labels), got {n_cols}")
            elif len(parts) != n_cols:
                raise SchemaError(
                    f"row {row_no}: expected {n_cols} columns, got {len(parts)}")
            try:
                values = [float(p) for p in parts]
            except ValueError:
                bad = next(p for p in parts if not _is_float(p))
                raise DataParseError(
                    f"row {row_no}: could not parse value '{bad.strip()}'") from None
            lab = values[-d:]
            if any(v not in (0.0, 1.0) for v in lab):
                raise LabelError(
                    f"row {row_no}: label values must be 0 or 1, got {lab}")
            rows.append(values[:-d])
            labels.append([int(v) for v in lab])
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return Dataset.from_raw(np.asarray(rows), np.asarray(labels))


def _is_float(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def load_arff(path, label_names: Sequence[str]) -> Dataset:
    """Load a Mulan-style dense ARFF file, extracting labels by attribute name.

    Numeric attributes and {0,1} nominal attributes are accepted; anything
    else raises.  Label attributes may appear at any column position.
    """
    attrs: list[tuple[str, str]] = []  # (name, kind) with kind in {numeric, binary}
    data_rows: list[list[str]] = []
    in_data = False
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("%"):
                continue
            low = line.lower()
            if not in_data:
                if low.startswith("@attribute"):
                    attrs.append(_parse_arff_attribute(line))
                elif low.startswith("@data"):
                    in_data = True
                continue
            if line.startswith("{"):
                raise UnsupportedAttributeError(
                    "sparse ARFF data rows are not supported")
            data_rows.append([p.strip() for p in line.split(",")])
    if not attrs:
        raise SchemaError(f"{path}: no @attribute declarations found")
    if not data_rows:
        raise SchemaError(f"{path}: no data rows")

    names = [a[0] for a in attrs]
    missing = [ln for ln in label_names if ln not in names]
    if missing:
        raise SchemaError(f"unknown label attribute(s): {', '.join(missing)}")
    label_idx = [names.index(ln) for ln in label_names]
    feature_idx = [i for i in range(len(attrs)) if i not in set(label_idx)]

    n_cols = len(attrs)
    feats = np.empty((len(data_rows), len(feature_idx)))
    labs = np.empty((len(data_rows), len(label_idx)), dtype=np.int8)
    for r, parts in enumerate(data_rows):
        if len(parts) != n_cols:
            raise SchemaError(
                f"row {r + 1}: expected {n_cols} columns, got {len(parts)}")
        try:
            for c, j in enumerate(feature_idx):
                feats[r, c] = float(parts[j])
        except ValueError:
            raise DataParseError(
                f"row {r + 1}: could not parse value '{parts[j]}'") from None
        for c, j in enumerate(label_idx):
            v = parts[j]
            if v in ("0", "1"):
                labs[r, c] = int(v)
                continue
            if not _is_float(v) or float(v) not in (0.0, 1.0):
                raise LabelError(
                    f"row {r + 1}: label '{names[j]}' must be 0 or 1, got '{v}'")
            labs[r, c] = int(float(v))
    return Dataset.from_raw(feats, labs)


def _parse_arff_attribute(line: str) -> tuple[str, str]:
    body = line[len("@attribute"):].strip()
    if body.startswith(("'", '"')):
        quote = body[0]
        end = body.index(quote, 1)
        name = body[1:end]
        rest = body[end + 1:].strip()
    else:
        split = body.split(None, 1)
        if len(split) != 2:
            raise SchemaError(f"malformed attribute line: {line}")
        name, rest = split
    rest = rest.strip()
    if rest.startswith("{"):
        values = {v.strip().strip("'\"") for v in rest.strip("{}").split(",")}
        if values <= {"0", "1"}:
            return name, "binary"
        raise UnsupportedAttributeError(
            f"attribute '{name}' has non-binary nominal domain {sorted(values)}")
    if rest.lower() in ("numeric", "real", "integer"):
        return name, "numeric"
    raise UnsupportedAttributeError(
        f"attribute '{name}' has unsupported type '{rest}'")


def split_folds(data: Dataset, k: int, seed: int) -> list[tuple[Dataset, Dataset]]:
    """Seeded k-fold partition into (train, test) pairs.

    Test partitions are disjoint, cover every instance exactly once and
    differ in size by at most one.
    """
    if k < 2:
        raise ArgumentError("fold count k must be >= 2")
    if k > data.n:
        raise ArgumentError(f"fold count k={k} exceeds N={data.n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(data.n)
    parts = np.array_split(perm, k)
    folds = []
    for i in range(k):
        test_idx = np.sort(parts[i])
        train_idx = np.sort(np.concatenate([parts[j] for j in range(k) if j != i]))
        folds.append((data.subset(train_idx), data.subset(test_idx)))
    return folds


def holdout_split(
    data: Dataset,
    weights,
    ratio: float,
    seed: int,
) -> tuple[tuple[Dataset, np.ndarray], tuple[Dataset, np.ndarray]]:
    """Seeded disjoint split into (train, holdout) with weights carried along.

    The holdout size is round(ratio * N) clamped to [1, N-1].  Weights come
    back as plain arrays because one side of a partition may carry zero
    total mass, which the WeightVector invariant rules out.
    """
    if not 0.0 < ratio < 1.0:
        raise ArgumentError("holdout ratio must be in (0, 1)")
    if data.n < 2:
        raise ArgumentError("holdout split needs at least 2 instances")
    w = as_weight_array(weights, data.n)
    n_hold = int(round(ratio * data.n))
    n_hold = min(max(n_hold, 1), data.n - 1)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(data.n)
    hold_idx = np.sort(perm[:n_hold])
    train_idx = np.sort(perm[n_hold:])
    return (
        (data.subset(train_idx), w[train_idx].copy()),
        (data.subset(hold_idx), w[hold_idx].copy()),
    )


@dataclass(frozen=True)
class Standardizer:
    """Per-feature z-scoring fit on training data; the bias column is untouched."""

    mean: np.ndarray   # (m,) over non-bias columns
    scale: np.ndarray  # (m,) strictly positive

    @classmethod
    def fit(cls, data: Dataset) -> "Standardizer":
        cols = data.features[:, 1:]
        mean = cols.mean(axis=0)
        scale = cols.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        return cls(mean, scale)

    def transform(self, data: Dataset) -> Dataset:
        cols = (data.features[:, 1:] - self.mean) / self.scale
        return Dataset.from_raw(cols, data.labels)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "Standardizer":
        return cls(np.asarray(doc["mean"], dtype=np.float64),
                   np.asarray(doc["scale"], dtype=np.float64))

"""Datasets, CSV ingestion, synthetic Gaussian clusters and CV splitting."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SYNTHETIC_CENTERS = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])


class DatasetError(ValueError):
    """Raised for malformed or degenerate dataset input."""


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    class_names: tuple[str, ...]
    name: str = "dataset"

    def __post_init__(self):
        features = np.asarray(self.features, dtype=float)
        labels = np.asarray(self.labels, dtype=np.int64)
        if features.ndim != 2:
            raise DatasetError("features must be a 2D matrix")
        if labels.ndim != 1 or labels.shape[0] != features.shape[0]:
            raise DatasetError("labels must be a vector with one entry per instance")
        if len(self.class_names) < 2:
            raise DatasetError("fewer than 2 classes")
        if labels.size and (labels.min() < 0 or labels.max() >= len(self.class_names)):
            raise DatasetError("label index out of range")
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_names", tuple(self.class_names))

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def n_instances(self) -> int:
        return self.labels.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(features, labels)`` rows selected by ``idx``."""
        idx = np.asarray(idx, dtype=np.int64)
        return self.features[idx], self.labels[idx]


def load_csv(path, label_column: str = "label", name: str | None = None) -> Dataset:
    """Read a headered CSV file with numeric features and one label column.

    Labels are mapped to indices in order of first appearance.
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"missing file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: no header row") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise DatasetError(f"{path}: label column {label_column!r} not found")
        label_pos = header.index(label_column)
        feature_cols = [i for i in range(len(header)) if i != label_pos]

        rows: list[list[float]] = []
        raw_labels: list[str] = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DatasetError(
                    f"{path}: row {lineno} has {len(row)} cells, expected {len(header)}"
                )
            values = []
            for i in feature_cols:
                try:
                    values.append(float(row[i]))
                except ValueError:
                    raise DatasetError(
                        f"{path}: non-numeric value {row[i]!r} at row {lineno}, "
                        f"column {header[i]!r}"
                    ) from None
            rows.append(values)
            raw_labels.append(row[label_pos].strip())

    if not rows:
        raise DatasetError(f"{path}: empty dataset")
    index: dict[str, int] = {}
    for lab in raw_labels:
        index.setdefault(lab, len(index))
    if len(index) < 2:
        raise DatasetError(f"{path}: fewer than 2 classes")
    labels = np.array([index[lab] for lab in raw_labels], dtype=np.int64)
    features = np.array(rows, dtype=float).reshape(len(rows), len(feature_cols))
    return Dataset(features, labels, tuple(index), name=name or path.stem)


def save_csv(dataset: Dataset, path, label_column: str = "label") -> None:
    """Write ``dataset`` as CSV; feature columns are named x1..xd."""
    path = Path(path)
    header = [f"x{j + 1}" for j in range(dataset.n_features)] + [label_column]
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for x, y in zip(dataset.features, dataset.labels):
            writer.writerow([repr(float(v)) for v in x] + [dataset.class_names[y]])


def synthetic_name(sigma: float) -> str:
    return f"synthetic_sigma{sigma:g}"


def generate_synthetic(sigma: float, n_per_class: int, seed: int = 0) -> Dataset:
    """Four isotropic 2D Gaussian clusters centred at (1,0), (0,1), (-1,0), (0,-1).

    Instances are ordered class by class.
    """
    if not sigma > 0:
        raise DatasetError("sigma must be positive")
    if n_per_class < 1:
        raise DatasetError("n_per_class must be positive")
    rng = np.random.default_rng(seed)
    n_classes = len(SYNTHETIC_CENTERS)
    noise = rng.normal(0.0, sigma, size=(n_classes * n_per_class, 2))
    labels = np.repeat(np.arange(n_classes), n_per_class)
    features = SYNTHETIC_CENTERS[labels] + noise
    return Dataset(
        features,
        labels,
        tuple(str(c) for c in range(n_classes)),
        name=synthetic_name(sigma),
    )


@dataclass(frozen=True)
class SplitPlan:
    repeats: int = 10
    folds: int = 10
    calibration_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if not 0.0 < self.calibration_fraction < 1.0:
            raise ValueError("calibration_fraction must lie in (0, 1)")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class FoldSplit:
    repeat: int
    fold: int
    proper_train_idx: np.ndarray
    calibration_idx: np.ndarray
    test_idx: np.ndarray = field(repr=False)

    @property
    def train_idx(self) -> np.ndarray:
        """Proper training and calibration indices together, sorted."""
        return np.sort(np.concatenate([self.proper_train_idx, self.calibration_idx]))


def fold_rng(seed: int, repeat: int, fold: int | None = None) -> np.random.Generator:
    key = [seed, repeat] if fold is None else [seed, repeat, fold]
    return np.random.default_rng(np.random.SeedSequence(key))


def _largest_remainder(quotas: np.ndarray, total: int) -> np.ndarray:
    base = np.floor(quotas).astype(np.int64)
    short = total - int(base.sum())
    if short > 0:
        # stable: ties go to the lower class index
        order = np.argsort(-(quotas - base), kind="stable")
        base[order[:short]] += 1
    return base


def _stratified_holdout(idx: np.ndarray, labels: np.ndarray, fraction: float,
                        rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    classes = np.unique(labels[idx])
    members = [idx[labels[idx] == c] for c in classes]
    total = int(round(fraction * idx.size))
    quotas = np.array([fraction * m.size for m in members])
    counts = _largest_remainder(quotas, total)
    held, kept = [], []
    for m, k in zip(members, counts):
        perm = rng.permutation(m)
        held.append(perm[:k])
        kept.append(perm[k:])
    return np.sort(np.concatenate(kept)), np.sort(np.concatenate(held))


def make_splits(dataset: Dataset, plan: SplitPlan) -> list[FoldSplit]:
    """Stratified repeated k-fold splits with a stratified calibration holdout.

    Each repeat partitions the dataset into ``plan.folds`` test folds. The
    remaining instances of each fold are divided into a proper training set and
    a calibration set of ``plan.calibration_fraction``.
    """
    labels = dataset.labels
    counts = np.bincount(labels, minlength=dataset.n_classes)
    present = counts[counts > 0]
    if present.min() < plan.folds:
        raise DatasetError(
            f"class with {present.min()} instances cannot be split into {plan.folds} folds"
        )
    splits = []
    for r in range(plan.repeats):
        rng = fold_rng(plan.seed, r)
        assignment = np.empty(dataset.n_instances, dtype=np.int64)
        offset = 0
        for c in range(dataset.n_classes):
            members = rng.permutation(np.flatnonzero(labels == c))
            assignment[members] = (offset + np.arange(members.size)) % plan.folds
            offset = (offset + members.size) % plan.folds
        for f in range(plan.folds):
            test_idx = np.flatnonzero(assignment == f)
            train_idx = np.flatnonzero(assignment != f)
            proper, cal = _stratified_holdout(
                train_idx, labels, plan.calibration_fraction, fold_rng(plan.seed, r, f)
            )
            splits.append(FoldSplit(r, f, proper, cal, test_idx))
    return splits


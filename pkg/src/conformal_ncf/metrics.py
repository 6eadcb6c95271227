"""Validity and efficiency metrics over batches of prediction sets."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .conformal import sets_to_region


@dataclass(frozen=True)
class BatchOutcome:
    """Prediction sets as a boolean ``(n, n_classes)`` membership matrix plus truths."""

    membership: np.ndarray
    truths: np.ndarray

    def __post_init__(self):
        membership = np.asarray(self.membership, dtype=bool)
        truths = np.asarray(self.truths, dtype=np.int64)
        if membership.ndim != 2 or membership.shape[0] == 0:
            raise ValueError("a batch needs at least one prediction set")
        if truths.shape != (membership.shape[0],):
            raise ValueError("one truth per prediction set is required")
        if truths.min() < 0 or truths.max() >= membership.shape[1]:
            raise ValueError("true label out of range")
        object.__setattr__(self, "membership", membership)
        object.__setattr__(self, "truths", truths)

    @classmethod
    def from_sets(cls, sets: Iterable[Iterable[int]], truths, n_classes: int) -> "BatchOutcome":
        return cls(sets_to_region(sets, n_classes), truths)

    @property
    def n_classes(self) -> int:
        return self.membership.shape[1]

    @property
    def sizes(self) -> np.ndarray:
        return self.membership.sum(axis=1)

    @property
    def covered(self) -> np.ndarray:
        return self.membership[np.arange(self.truths.size), self.truths]


@dataclass(frozen=True)
class MetricRecord:
    err: float
    oneC: float
    avgC: float
    e_oneC: float | None
    n_singletons: int

    @property
    def n_correct_singletons(self) -> int:
        return 0 if self.e_oneC is None else int(round(self.e_oneC * self.n_singletons))


def one_c(batch: BatchOutcome) -> float:
    return float(np.mean(batch.sizes == 1))


def avg_c(batch: BatchOutcome) -> float:
    return float(np.mean(batch.sizes))


def empirical_error(batch: BatchOutcome) -> float:
    return float(np.mean(~batch.covered))


def effective_one_c(batch: BatchOutcome) -> float | None:
    """Share of singleton sets that hold the true label; None without singletons."""
    single = batch.sizes == 1
    n = int(single.sum())
    if n == 0:
        return None
    return float(batch.covered[single].sum() / n)


def evaluate_batch(batch: BatchOutcome) -> MetricRecord:
    return MetricRecord(
        err=empirical_error(batch),
        oneC=one_c(batch),
        avgC=avg_c(batch),
        e_oneC=effective_one_c(batch),
        n_singletons=int((batch.sizes == 1).sum()),
    )


def pearson_correlation(xs, ys) -> float | None:
    """Sample Pearson coefficient, or None when either input has zero variance."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValueError("need two equal-length vectors with at least 2 entries")
    dx = x - x.mean()
    dy = y - y.mean()
    denom = math.sqrt(float(dx @ dx) * float(dy @ dy))
    if denom == 0.0:
        return None
    return float(np.clip((dx @ dy) / denom, -1.0, 1.0))


def pooled_effective_one_c(records: Iterable[MetricRecord]) -> float | None:
    """Pool singleton counts across records before taking the ratio."""
    singles = correct = 0
    for rec in records:
        singles += rec.n_singletons
        correct += rec.n_correct_singletons
    return None if singles == 0 else correct / singles

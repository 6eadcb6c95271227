"""Inductive conformal classification with hinge and margin nonconformity.

p-values default to the non-smoothed convention
``(#{calibration scores >= s} + 1) / (q + 1)``; passing uniform tie-breakers
gives smoothed p-values. A label enters the prediction set when its p-value is
strictly greater than the significance level.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable

import numpy as np


class NCF(str, enum.Enum):
    """Nonconformity functions."""

    INVERSE_PROBABILITY = "IP"
    MARGIN = "M"


def check_epsilon(eps: float) -> float:
    eps = float(eps)
    if not 0.0 < eps < 1.0:
        raise ValueError(f"significance level must lie in (0, 1), got {eps}")
    return eps


def _as_proba_matrix(probs) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    if probs.ndim == 1:
        probs = probs[None, :]
    if probs.ndim != 2 or probs.shape[1] < 2:
        raise ValueError("probabilities must have at least two classes")
    return probs


def score_matrix(ncf: NCF, probs) -> np.ndarray:
    """Nonconformity score of every (instance, label) pair.

    Returns an ``(n, n_classes)`` array for an ``(n, n_classes)`` probability matrix.
    """
    probs = _as_proba_matrix(probs)
    ncf = NCF(ncf)
    if ncf is NCF.INVERSE_PROBABILITY:
        return 1.0 - probs
    # highest probability among the other labels
    top = np.argmax(probs, axis=1)
    ordered = np.sort(probs, axis=1)
    first, second = ordered[:, -1], ordered[:, -2]
    other = np.repeat(first[:, None], probs.shape[1], axis=1)
    rows = np.arange(probs.shape[0])
    other[rows, top] = second
    return other - probs


def score_labels(ncf: NCF, probs, labels) -> np.ndarray:
    """Scores of each instance paired with its own label."""
    probs = _as_proba_matrix(probs)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (probs.shape[0],):
        raise ValueError("one label per probability row is required")
    if labels.size and (labels.min() < 0 or labels.max() >= probs.shape[1]):
        raise ValueError("label out of range")
    return score_matrix(ncf, probs)[np.arange(labels.size), labels]


def score(ncf: NCF, probs, label: int) -> float:
    """Nonconformity of a single (probability vector, label) pair.

    >>> round(score(NCF.INVERSE_PROBABILITY, [0.7, 0.2, 0.1], 0), 12)
    0.3
    >>> round(score(NCF.MARGIN, [0.7, 0.2, 0.1], 0), 12)
    -0.5
    """
    probs = np.asarray(probs, dtype=float)
    if not 0 <= label < probs.shape[-1]:
        raise ValueError(f"label {label} out of range for {probs.shape[-1]} classes")
    return float(score_matrix(ncf, probs)[0, label])


@dataclass(frozen=True)
class CalibrationTable:
    scores: np.ndarray

    def __post_init__(self):
        scores = np.sort(np.asarray(self.scores, dtype=float).ravel())
        if scores.size == 0:
            raise ValueError("empty calibration set")
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)

    @property
    def size(self) -> int:
        return self.scores.shape[0]

    def p_values(self, test_scores, tie_breaker=None) -> np.ndarray:
        """p-values of ``test_scores`` against the table.

        With ``tie_breaker`` (uniform draws in [0, 1), broadcastable to the
        scores) the smoothed form ``(#{> s} + u * (#{= s} + 1)) / (q + 1)`` is
        used instead of counting ties in full.
        """
        test_scores = np.asarray(test_scores, dtype=float)
        lo = np.searchsorted(self.scores, test_scores, side="left")
        at_least = self.size - lo
        if tie_breaker is None:
            return (at_least + 1.0) / (self.size + 1.0)
        greater = self.size - np.searchsorted(self.scores, test_scores, side="right")
        ties = at_least - greater
        u = np.asarray(tie_breaker, dtype=float)
        return (greater + u * (ties + 1.0)) / (self.size + 1.0)


def p_value(table: CalibrationTable, test_score: float) -> float:
    return float(table.p_values(test_score))


@dataclass(frozen=True)
class PredictionSet:
    labels: frozenset
    epsilon: float

    def __post_init__(self):
        object.__setattr__(self, "labels", frozenset(int(c) for c in self.labels))

    def __len__(self):
        return len(self.labels)

    def __contains__(self, label):
        return label in self.labels

    def __iter__(self):
        return iter(sorted(self.labels))

    @property
    def is_singleton(self) -> bool:
        return len(self.labels) == 1


@dataclass(frozen=True)
class ConformalPredictor:
    model: object
    ncf: NCF
    calibration: CalibrationTable

    @property
    def n_classes(self) -> int:
        return self.model.n_classes

    def p_values_from_proba(self, probs, tie_breaker=None) -> np.ndarray:
        """p-values from precomputed probabilities.

        ``tie_breaker`` holds one uniform draw per instance (shape ``(n,)``)
        and switches to smoothed p-values.
        """
        if tie_breaker is not None:
            tie_breaker = np.asarray(tie_breaker, dtype=float)[:, None]
        return self.calibration.p_values(score_matrix(self.ncf, probs), tie_breaker)

    def p_values(self, X, tie_breaker=None) -> np.ndarray:
        """p-value of every candidate label; one row per instance."""
        X = np.asarray(X, dtype=float)
        if tie_breaker is not None:
            tie_breaker = np.atleast_1d(tie_breaker)
        p = self.p_values_from_proba(self.model.predict_proba(np.atleast_2d(X)), tie_breaker)
        return p[0] if X.ndim == 1 else p

    def region(self, X, eps: float, tie_breaker=None) -> np.ndarray:
        """Boolean membership matrix of the prediction sets at level ``eps``."""
        return self.p_values(np.atleast_2d(X), tie_breaker) > check_epsilon(eps)

    def predict_set(self, x, eps: float, tie_breaker=None) -> PredictionSet:
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise ValueError("predict_set expects a single feature vector")
        mask = self.region(x, eps, tie_breaker)[0]
        return PredictionSet(np.flatnonzero(mask), eps)


def calibrate(model, ncf: NCF, X_cal, y_cal) -> ConformalPredictor:
    """Score the calibration instances under ``model`` and freeze the sorted table."""
    X_cal = np.asarray(X_cal, dtype=float)
    y_cal = np.asarray(y_cal, dtype=np.int64)
    if X_cal.ndim != 2 or X_cal.shape[0] == 0:
        raise ValueError("empty calibration set")
    probs = model.predict_proba(X_cal)
    table = CalibrationTable(score_labels(ncf, probs, y_cal))
    return ConformalPredictor(model, NCF(ncf), table)


def sets_from_p_values(p_values, eps: float) -> np.ndarray:
    return np.asarray(p_values) > check_epsilon(eps)


def combine_masks(ip_mask: np.ndarray, m_mask: np.ndarray) -> np.ndarray:
    """Row-wise IP_M rule on boolean membership matrices."""
    ip_mask = np.asarray(ip_mask, dtype=bool)
    m_mask = np.asarray(m_mask, dtype=bool)
    take_m = (m_mask.sum(axis=-1) == 1) & (ip_mask.sum(axis=-1) != 1)
    return np.where(take_m[..., None], m_mask, ip_mask)


def combine_ip_m(ip_set: PredictionSet, m_set: PredictionSet) -> PredictionSet:
    """Use the margin set when it is a singleton and the IP set is not."""
    if len(m_set) == 1 and len(ip_set) != 1:
        return PredictionSet(m_set.labels, ip_set.epsilon)
    return ip_set


def ip_m_regions(ip_p_values, m_p_values, eps: float) -> np.ndarray:
    """IP sets at ``eps`` merged with margin sets at ``eps / 2``."""
    eps = check_epsilon(eps)
    return combine_masks(np.asarray(ip_p_values) > eps, np.asarray(m_p_values) > eps / 2)


def predict_ip_m(model, X_cal, y_cal, x, eps: float, tie_breaker=None) -> PredictionSet:
    """IP_M prediction set for one instance from a fitted model and calibration data."""
    ip = calibrate(model, NCF.INVERSE_PROBABILITY, X_cal, y_cal)
    m = calibrate(model, NCF.MARGIN, X_cal, y_cal)
    return combine_ip_m(ip.predict_set(x, eps, tie_breaker),
                        m.predict_set(x, check_epsilon(eps) / 2, tie_breaker))


def region_to_sets(mask: np.ndarray, eps: float) -> list[PredictionSet]:
    return [PredictionSet(np.flatnonzero(row), eps) for row in np.atleast_2d(mask)]


def sets_to_region(sets: Iterable[Iterable[int]], n_classes: int) -> np.ndarray:
    sets = list(sets)
    mask = np.zeros((len(sets), n_classes), dtype=bool)
    for i, s in enumerate(sets):
        for c in s:
            if not 0 <= c < n_classes:
                raise ValueError(f"label {c} out of range")
            mask[i, c] = True
    return mask

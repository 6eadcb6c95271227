"""Probabilistic baseline classifiers: k-NN, Gaussian naive Bayes, CART.

Every fitted model exposes ``predict_proba`` returning one probability row per
instance over all ``n_classes`` classes of the parent dataset, including classes
that were absent from the training view (they get probability 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset, SplitPlan, make_splits

KINDS = ("knn", "gnb", "dtree")

# rows of the query block processed per distance computation in k-NN
_KNN_CHUNK = 256


@dataclass(frozen=True)
class ClassifierSpec:
    kind: str
    k_neighbors: int = 5
    min_samples_split_floor: int = 5
    min_samples_split_fraction: float = 0.05
    variance_smoothing: float = 1e-9
    name: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown classifier kind {self.kind!r}; expected one of {KINDS}")
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")
        if self.min_samples_split_floor < 1:
            raise ValueError("min_samples_split_floor must be >= 1")
        if not 0.0 <= self.min_samples_split_fraction < 1.0:
            raise ValueError("min_samples_split_fraction must lie in [0, 1)")
        if not self.variance_smoothing > 0:
            raise ValueError("variance_smoothing must be positive")

    @property
    def label(self) -> str:
        return self.name or self.kind

    def min_samples_split(self, n_train: int) -> int:
        return max(self.min_samples_split_floor,
                   math.ceil(round(self.min_samples_split_fraction * n_train, 9)))


class FittedClassifier:
    """Base class for fitted models; subclasses implement ``_proba``."""

    spec: ClassifierSpec
    n_classes: int
    n_features: int

    def predict_proba(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        X = x[None, :] if single else x
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(
                f"expected {self.n_features} features, got shape {x.shape}"
            )
        proba = self._proba(X)
        return proba[0] if single else proba

    def predict(self, x) -> np.ndarray:
        """Argmax label; ties go to the lowest class index."""
        return np.argmax(self.predict_proba(x), axis=-1)

    def _proba(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class KNeighbors(FittedClassifier):
    def __init__(self, spec, X, y, n_classes):
        self.spec = spec
        self.n_classes = n_classes
        self.n_features = X.shape[1]
        self._X = X.copy()
        self._y = y.copy()

    def _proba(self, X):
        k = min(self.spec.k_neighbors, self._X.shape[0])
        out = np.empty((X.shape[0], self.n_classes))
        for start in range(0, X.shape[0], _KNN_CHUNK):
            block = X[start:start + _KNN_CHUNK]
            d = ((block[:, None, :] - self._X[None, :, :]) ** 2).sum(axis=2)
            # stable sort keeps the lower training index first among equal distances
            nearest = np.argsort(d, axis=1, kind="stable")[:, :k]
            votes = self._y[nearest]
            for c in range(self.n_classes):
                out[start:start + block.shape[0], c] = (votes == c).sum(axis=1)
        return out / k


class GaussianNB(FittedClassifier):
    def __init__(self, spec, X, y, n_classes):
        self.spec = spec
        self.n_classes = n_classes
        self.n_features = X.shape[1]
        epsilon = spec.variance_smoothing * float(X.var(axis=0).max())
        if epsilon == 0.0:
            epsilon = spec.variance_smoothing
        self.epsilon = epsilon

        counts = np.bincount(y, minlength=n_classes)
        self.means = np.zeros((n_classes, self.n_features))
        self.variances = np.ones((n_classes, self.n_features))
        for c in np.flatnonzero(counts):
            Xc = X[y == c]
            self.means[c] = Xc.mean(axis=0)
            self.variances[c] = Xc.var(axis=0) + epsilon
        with np.errstate(divide="ignore"):
            self.log_prior = np.log(counts / counts.sum())

    def _proba(self, X):
        jll = -0.5 * (
            np.log(2.0 * np.pi * self.variances).sum(axis=1)[None, :]
            + (((X[:, None, :] - self.means[None]) ** 2) / self.variances[None]).sum(axis=2)
        ) + self.log_prior[None, :]
        # explicit renormalisation: at extreme log-likelihoods logsumexp alone drifts from 1
        proba = np.exp(jll - jll.max(axis=1, keepdims=True))
        return proba / proba.sum(axis=1, keepdims=True)


@dataclass
class _Node:
    counts: np.ndarray
    feature: int = -1
    threshold: float = 0.0
    left: "_Node | None" = None
    right: "_Node | None" = None
    depth: int = 0
    proba: np.ndarray = field(init=False)

    def __post_init__(self):
        self.proba = self.counts / self.counts.sum()

    @property
    def is_leaf(self) -> bool:
        return self.left is None


def _best_split(X: np.ndarray, y: np.ndarray, n_classes: int):
    """Exhaustive Gini search; returns ``(feature, threshold)`` or None.

    Ties in impurity go to the lower feature index, then the lower threshold.
    """
    n = y.shape[0]
    onehot = np.eye(n_classes)[y]
    best = None
    best_impurity = np.inf
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        valid = np.flatnonzero(xs[1:] > xs[:-1])
        if valid.size == 0:
            continue
        left = np.cumsum(onehot[order], axis=0)[valid]
        right = onehot.sum(axis=0) - left
        n_left = (valid + 1).astype(float)
        n_right = n - n_left
        # n * weighted Gini
        impurity = (n_left - (left ** 2).sum(axis=1) / n_left) + (
            n_right - (right ** 2).sum(axis=1) / n_right
        )
        i = int(np.argmin(impurity))
        if impurity[i] < best_impurity:
            lo, hi = xs[valid[i]], xs[valid[i] + 1]
            threshold = lo / 2.0 + hi / 2.0
            if threshold >= hi or threshold < lo:
                threshold = lo
            best_impurity = impurity[i]
            best = (j, float(threshold))
    return best


class DecisionTree(FittedClassifier):
    """Binary CART grown until nodes are pure or smaller than min_samples_split."""

    def __init__(self, spec, X, y, n_classes):
        self.spec = spec
        self.n_classes = n_classes
        self.n_features = X.shape[1]
        self.min_samples_split = spec.min_samples_split(X.shape[0])
        self.root = self._grow(X, y, 0)

    def _grow(self, X, y, depth):
        node = _Node(np.bincount(y, minlength=self.n_classes).astype(float), depth=depth)
        if y.shape[0] < self.min_samples_split or np.count_nonzero(node.counts) <= 1:
            return node
        split = _best_split(X, y, self.n_classes)
        if split is None:
            return node
        node.feature, node.threshold = split
        go_left = X[:, node.feature] <= node.threshold
        node.left = self._grow(X[go_left], y[go_left], depth + 1)
        node.right = self._grow(X[~go_left], y[~go_left], depth + 1)
        return node

    def leaves(self) -> list[_Node]:
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.append(node)
            else:
                stack.extend([node.right, node.left])
        return out

    @property
    def depth(self) -> int:
        return max(leaf.depth for leaf in self.leaves())

    def _proba(self, X):
        out = np.empty((X.shape[0], self.n_classes))
        stack = [(self.root, np.arange(X.shape[0]))]
        while stack:
            node, rows = stack.pop()
            if rows.size == 0:
                continue
            if node.is_leaf:
                out[rows] = node.proba
                continue
            go_left = X[rows, node.feature] <= node.threshold
            stack.append((node.left, rows[go_left]))
            stack.append((node.right, rows[~go_left]))
        return out


_MODELS = {"knn": KNeighbors, "gnb": GaussianNB, "dtree": DecisionTree}


def fit(spec: ClassifierSpec, X, y, n_classes: int | None = None) -> FittedClassifier:
    """Fit the classifier described by ``spec`` on ``(X, y)``.

    ``n_classes`` defaults to ``max(y) + 1``; pass the parent dataset's class
    count when some classes may be missing from the training view.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("empty training view")
    if y.shape != (X.shape[0],):
        raise ValueError("labels must match the number of training rows")
    if n_classes is None:
        n_classes = int(y.max()) + 1
    if y.min() < 0 or y.max() >= n_classes:
        raise ValueError("label index out of range")
    return _MODELS[spec.kind](spec, X, y, n_classes)


def baseline_error(spec: ClassifierSpec, dataset: Dataset, plan: SplitPlan) -> float:
    """Mean argmax 0/1 test error over the CV folds without a calibration holdout."""
    errors = []
    for split in make_splits(dataset, plan):
        X_train, y_train = dataset.subset(split.train_idx)
        X_test, y_test = dataset.subset(split.test_idx)
        model = fit(spec, X_train, y_train, dataset.n_classes)
        errors.append(float(np.mean(model.predict(X_test) != y_test)))
    return float(np.mean(errors))

"""Experiment harness: the (dataset, classifier, NCF, epsilon, fold) grid,
result files, paired t-tests and IP / IP_M / M comparison matrices."""

from __future__ import annotations

import csv
import logging
import math
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .classifiers import ClassifierSpec, fit
from .conformal import NCF, calibrate, check_epsilon, combine_masks
from .dataset import Dataset, SplitPlan, generate_synthetic, load_csv, make_splits, synthetic_name
from .metrics import BatchOutcome, MetricRecord, evaluate_batch, pearson_correlation, pooled_effective_one_c

log = logging.getLogger(__name__)

DEFAULT_EPSILONS = (0.01, 0.05, 0.1, 0.15, 0.2)
NCF_ORDER = ("IP", "IP_M", "M")
METRICS = ("oneC", "avgC")
RESULT_COLUMNS = (
    "dataset", "classifier", "ncf", "epsilon", "repeat", "fold", "n_test",
    "err", "oneC", "avgC", "e_oneC", "n_singletons",
)
BASELINE_COLUMNS = ("dataset", "classifier", "repeat", "fold", "n_test", "b_err")


@dataclass(frozen=True)
class DatasetSource:
    """Either a CSV file or a synthetic Gaussian-cluster recipe."""

    path: str | None = None
    label: str = "label"
    sigma: float | None = None
    n_per_class: int = 2000
    seed: int | None = None
    name: str | None = None

    def __post_init__(self):
        if (self.path is None) == (self.sigma is None):
            raise ValueError("a dataset source needs exactly one of path or sigma")
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError("sigma must be positive")

    @property
    def id(self) -> str:
        if self.name:
            return self.name
        if self.path is not None:
            return Path(self.path).stem
        return synthetic_name(self.sigma)

    def load(self, default_seed: int = 0) -> Dataset:
        if self.path is not None:
            return load_csv(self.path, self.label, name=self.id)
        seed = default_seed if self.seed is None else self.seed
        ds = generate_synthetic(self.sigma, self.n_per_class, seed)
        return Dataset(ds.features, ds.labels, ds.class_names, name=self.id)


@dataclass(frozen=True)
class ExperimentGrid:
    datasets: tuple[DatasetSource, ...]
    classifiers: tuple[ClassifierSpec, ...]
    epsilons: tuple[float, ...] = DEFAULT_EPSILONS
    plan: SplitPlan = field(default_factory=SplitPlan)
    smoothing: bool = True

    def __post_init__(self):
        object.__setattr__(self, "datasets", tuple(self.datasets))
        object.__setattr__(self, "classifiers", tuple(self.classifiers))
        object.__setattr__(self, "epsilons", tuple(float(e) for e in self.epsilons))
        if not self.datasets:
            raise ValueError("datasets: at least one dataset is required")
        if not self.classifiers:
            raise ValueError("classifiers: at least one classifier is required")
        if not self.epsilons:
            raise ValueError("epsilons: at least one significance level is required")
        for e in self.epsilons:
            if not 0.0 < e < 1.0:
                raise ValueError(f"epsilons: {e} is outside (0, 1)")
        if any(b <= a for a, b in zip(self.epsilons, self.epsilons[1:])):
            raise ValueError("epsilons: values must be strictly increasing")
        ids = [c.label for c in self.classifiers]
        if len(set(ids)) != len(ids):
            raise ValueError("classifiers: names must be unique (set 'name' to disambiguate)")
        ids = [d.id for d in self.datasets]
        if len(set(ids)) != len(ids):
            raise ValueError("datasets: ids must be unique (set 'name' to disambiguate)")


@dataclass(frozen=True)
class FoldResult:
    dataset: str
    classifier: str
    ncf: str
    epsilon: float
    repeat: int
    fold: int
    n_test: int
    metrics: MetricRecord

    @property
    def key(self) -> tuple:
        return (self.dataset, self.classifier, self.ncf, self.epsilon, self.repeat, self.fold)


@dataclass(frozen=True)
class BaselineResult:
    dataset: str
    classifier: str
    repeat: int
    fold: int
    n_test: int
    b_err: float


@dataclass
class ExperimentOutput:
    results: list[FoldResult]
    baselines: list[BaselineResult]
    failures: list[str]


def fold_outcomes(model, X_cal, y_cal, X_test, y_test, epsilons: Sequence[float],
                  tie_breaker=None):
    """Metric records of IP, IP_M and M at every epsilon for one fitted model.

    Both nonconformity functions share the model, the calibration instances
    and, for smoothed p-values, the per-instance tie-breakers.
    Yields ``(ncf, epsilon, MetricRecord)``.
    """
    probs = model.predict_proba(X_test)
    p = {
        ncf: calibrate(model, ncf, X_cal, y_cal).p_values_from_proba(probs, tie_breaker)
        for ncf in (NCF.INVERSE_PROBABILITY, NCF.MARGIN)
    }
    for eps in epsilons:
        eps = check_epsilon(eps)
        ip = p[NCF.INVERSE_PROBABILITY] > eps
        m = p[NCF.MARGIN] > eps
        ip_m = combine_masks(ip, p[NCF.MARGIN] > eps / 2)
        for name, mask in (("IP", ip), ("IP_M", ip_m), ("M", m)):
            yield name, eps, evaluate_batch(BatchOutcome(mask, y_test))


@lru_cache(maxsize=8)
def _load(source: DatasetSource, default_seed: int) -> Dataset:
    return source.load(default_seed)


@lru_cache(maxsize=8)
def _splits(source: DatasetSource, plan: SplitPlan):
    return make_splits(_load(source, plan.seed), plan)


def tie_breakers(seed: int, repeat: int, fold: int, n: int) -> np.ndarray:
    """Uniform draws for smoothed p-values, one per test instance of a fold."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, repeat, fold, 1]))
    return rng.random(n)


def _run_fold(task):
    source, classifiers, epsilons, plan, split_no, smoothing, with_baseline = task
    dataset = _load(source, plan.seed)
    split = _splits(source, plan)[split_no]
    X_p, y_p = dataset.subset(split.proper_train_idx)
    X_c, y_c = dataset.subset(split.calibration_idx)
    X_t, y_t = dataset.subset(split.test_idx)
    u = tie_breakers(plan.seed, split.repeat, split.fold, y_t.size) if smoothing else None
    results, baselines, failures = [], [], []
    for spec in classifiers:
        try:
            model = fit(spec, X_p, y_p, dataset.n_classes)
            rows = [
                FoldResult(source.id, spec.label, ncf, eps, split.repeat, split.fold,
                           int(y_t.size), rec)
                for ncf, eps, rec in fold_outcomes(model, X_c, y_c, X_t, y_t, epsilons, u)
            ]
            if with_baseline:
                X_tr, y_tr = dataset.subset(split.train_idx)
                full = fit(spec, X_tr, y_tr, dataset.n_classes)
                b_err = float(np.mean(full.predict(X_t) != y_t))
                baselines.append(BaselineResult(source.id, spec.label, split.repeat,
                                                split.fold, int(y_t.size), b_err))
            results.extend(rows)
        except Exception as exc:  # reported, combination skipped
            failures.append(f"{source.id}/{spec.label} fold {split.repeat}.{split.fold}: {exc}")
    return results, baselines, failures


def run_experiment(grid: ExperimentGrid, workers: int = 1, baseline: bool = True) -> ExperimentOutput:
    """Run the whole grid; output order is independent of ``workers``."""
    tasks, failures = [], []
    for source in grid.datasets:
        try:
            n_splits = len(_splits(source, grid.plan))
        except Exception as exc:
            msg = f"{source.id}: {exc}"
            log.warning("skipping dataset %s", msg)
            failures.append(msg)
            continue
        tasks.extend(
            (source, grid.classifiers, grid.epsilons, grid.plan, i, grid.smoothing, baseline)
            for i in range(n_splits)
        )

    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_fold, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        chunks = [_run_fold(t) for t in tasks]

    results, baselines = [], []
    for res, base, fail in chunks:
        results.extend(res)
        baselines.extend(base)
        for msg in fail:
            log.warning("skipping %s", msg)
        failures.extend(fail)

    d_rank = {s.id: i for i, s in enumerate(grid.datasets)}
    c_rank = {c.label: i for i, c in enumerate(grid.classifiers)}
    n_rank = {n: i for i, n in enumerate(NCF_ORDER)}
    results.sort(key=lambda r: (d_rank[r.dataset], c_rank[r.classifier], n_rank[r.ncf],
                                r.epsilon, r.repeat, r.fold))
    baselines.sort(key=lambda b: (d_rank[b.dataset], c_rank[b.classifier], b.repeat, b.fold))
    return ExperimentOutput(results, baselines, failures)


def run_grid(grid: ExperimentGrid, workers: int = 1) -> list[FoldResult]:
    return run_experiment(grid, workers, baseline=False).results


# --- result files ---------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_results_csv(results: Iterable[FoldResult], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        for r in results:
            m = r.metrics
            writer.writerow([_fmt(v) for v in (
                r.dataset, r.classifier, r.ncf, r.epsilon, r.repeat, r.fold, r.n_test,
                m.err, m.oneC, m.avgC, m.e_oneC, m.n_singletons,
            )])


class ResultsFormatError(ValueError):
    pass


def read_results_csv(path) -> list[FoldResult]:
    path = Path(path)
    out = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != RESULT_COLUMNS:
            raise ResultsFormatError(f"{path}: line 1: expected header {','.join(RESULT_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                if len(row) != len(RESULT_COLUMNS):
                    raise ValueError(f"expected {len(RESULT_COLUMNS)} fields, got {len(row)}")
                rec = dict(zip(RESULT_COLUMNS, row))
                if rec["ncf"] not in NCF_ORDER:
                    raise ValueError(f"unknown ncf {rec['ncf']!r}")
                metrics = MetricRecord(
                    err=float(rec["err"]),
                    oneC=float(rec["oneC"]),
                    avgC=float(rec["avgC"]),
                    e_oneC=float(rec["e_oneC"]) if rec["e_oneC"] else None,
                    n_singletons=int(rec["n_singletons"]),
                )
                out.append(FoldResult(
                    rec["dataset"], rec["classifier"], rec["ncf"], float(rec["epsilon"]),
                    int(rec["repeat"]), int(rec["fold"]), int(rec["n_test"]), metrics,
                ))
            except ValueError as exc:
                raise ResultsFormatError(f"{path}: line {lineno}: {exc}") from None
    return out


def write_baseline_csv(baselines: Iterable[BaselineResult], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(BASELINE_COLUMNS)
        for b in baselines:
            writer.writerow([_fmt(v) for v in (b.dataset, b.classifier, b.repeat, b.fold,
                                                b.n_test, b.b_err)])


def read_baseline_csv(path) -> list[BaselineResult]:
    out = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for lineno, rec in enumerate(csv.DictReader(fh), start=2):
            try:
                out.append(BaselineResult(rec["dataset"], rec["classifier"], int(rec["repeat"]),
                                          int(rec["fold"]), int(rec["n_test"]),
                                          float(rec["b_err"])))
            except (KeyError, TypeError, ValueError) as exc:
                raise ResultsFormatError(f"{path}: line {lineno}: {exc}") from None
    return out


# --- significance and comparison ------------------------------------------


@dataclass(frozen=True)
class TTest:
    t: float
    p: float
    significant: bool


def paired_t_test(xs, ys, alpha: float = 0.05) -> TTest:
    """Two-tailed paired Student's t-test on ``xs - ys``.

    All-zero differences are never significant. Constant nonzero differences
    have zero spread; they are reported as significant with an infinite t.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape:
        raise ValueError("paired samples must have equal length")
    if x.ndim != 1 or x.size < 2:
        raise ValueError("need at least 2 pairs")
    d = x - y
    if np.all(d == 0.0):
        return TTest(0.0, 1.0, False)
    if np.all(d == d[0]):
        return TTest(math.copysign(math.inf, d[0]), 0.0, True)
    n = d.size
    t = float(d.mean() / (d.std(ddof=1) / math.sqrt(n)))
    p = float(2.0 * stats.t.sf(abs(t), n - 1))
    return TTest(t, p, p < alpha)


def threshold_compare(mean_a: float, mean_b: float, metric: str, n_classes: int) -> str:
    """'better', 'worse' or 'neither' for setup a against setup b at the 2% threshold.

    The threshold is 2% of the metric's range: 1 for oneC, ``n_classes`` for avgC.
    """
    if metric == "oneC":
        gain, scale = mean_a - mean_b, 1.0
    elif metric == "avgC":
        gain, scale = mean_b - mean_a, float(n_classes)
    else:
        raise ValueError(f"unknown metric {metric!r}")
    limit = 0.02 * scale
    if gain > limit:
        return "better"
    if -gain > limit:
        return "worse"
    return "neither"


@dataclass(frozen=True)
class Cell:
    sign: str = ""  # "+", "-" or ""
    star: bool = False

    def __str__(self):
        return self.sign + ("*" if self.star else "")


@dataclass(frozen=True)
class ComparisonMatrix:
    metric: str
    cells: dict  # (row ncf, column ncf) -> Cell
    order: tuple[str, ...] = NCF_ORDER

    def cell(self, row: str, col: str) -> Cell:
        return self.cells.get((row, col), Cell())

    @property
    def has_sign(self) -> bool:
        return any(c.sign for c in self.cells.values())

    @property
    def has_star(self) -> bool:
        return any(c.star for c in self.cells.values())

    def is_antisymmetric(self) -> bool:
        flip = {"+": "-", "-": "+", "": ""}
        for r in self.order:
            if self.cell(r, r).sign or self.cell(r, r).star:
                return False
            for c in self.order:
                a, b = self.cell(r, c), self.cell(c, r)
                if flip[a.sign] != b.sign or a.star != b.star:
                    return False
        return True


def _metric_vectors(results: Sequence[FoldResult], metric: str) -> dict[str, np.ndarray]:
    by_ncf: dict[str, list] = defaultdict(list)
    for r in results:
        by_ncf[r.ncf].append(((r.repeat, r.fold), getattr(r.metrics, metric)))
    missing = [n for n in NCF_ORDER if n not in by_ncf]
    if missing:
        raise ValueError(f"missing NCF results: {', '.join(missing)}")
    keys = {n: [k for k, _ in sorted(v)] for n, v in by_ncf.items()}
    if any(keys[n] != keys[NCF_ORDER[0]] for n in NCF_ORDER):
        raise ValueError("NCFs do not share the same folds")
    return {n: np.array([v for _, v in sorted(by_ncf[n])]) for n in NCF_ORDER}


def build_matrix(results: Sequence[FoldResult], metric: str, n_classes: int,
                 alpha: float = 0.05) -> ComparisonMatrix:
    """Compare IP, IP_M and M for one (dataset, classifier, epsilon) on ``metric``.

    A cell gets a sign when the 2% threshold is exceeded or the paired t-test
    is significant; the star marks significance.
    """
    vectors = _metric_vectors(results, metric)
    higher_is_better = metric == "oneC"
    cells = {}
    for i, row in enumerate(NCF_ORDER):
        for col in NCF_ORDER[i + 1:]:
            a, b = vectors[row], vectors[col]
            verdict = threshold_compare(a.mean(), b.mean(), metric, n_classes)
            test = paired_t_test(a, b, alpha)
            if verdict == "neither" and not test.significant:
                continue
            if verdict == "neither":
                diff = a.mean() - b.mean()
                if diff == 0.0:
                    diff = test.t
                verdict = "better" if (diff > 0) == higher_is_better else "worse"
            sign = "+" if verdict == "better" else "-"
            cells[(row, col)] = Cell(sign, test.significant)
            cells[(col, row)] = Cell("-" if sign == "+" else "+", test.significant)
    return ComparisonMatrix(metric, cells)


def group_results(results: Iterable[FoldResult]) -> dict[tuple, list[FoldResult]]:
    """Group by (dataset, classifier, epsilon), preserving first-seen order."""
    groups: dict[tuple, list[FoldResult]] = {}
    for r in results:
        groups.setdefault((r.dataset, r.classifier, r.epsilon), []).append(r)
    return groups


def build_all_matrices(results: Sequence[FoldResult], n_classes: dict[str, int],
                       alpha: float = 0.05) -> dict[tuple, ComparisonMatrix]:
    """Matrices keyed by (dataset, classifier, epsilon, metric)."""
    out = {}
    for (ds, clf, eps), group in group_results(results).items():
        for metric in METRICS:
            out[(ds, clf, eps, metric)] = build_matrix(group, metric, n_classes[ds], alpha)
    return out


def infer_n_classes(results: Iterable[FoldResult]) -> dict[str, int]:
    """Lower bound on class counts from avgC maxima; used when only results.csv is at hand."""
    best: dict[str, int] = {}
    for r in results:
        best[r.dataset] = max(best.get(r.dataset, 2), math.ceil(r.metrics.avgC - 1e-9))
    return best


# --- summaries ------------------------------------------------------------


def summarize_validity(results: Iterable[FoldResult]) -> dict[str, dict[tuple[str, float], float]]:
    """Mean empirical error per (NCF, epsilon): one table per dataset plus 'MEAN'.

    Per-dataset values average every classifier and fold; 'MEAN' averages the
    per-dataset tables.
    """
    acc: dict[str, dict[tuple, list[float]]] = defaultdict(lambda: defaultdict(list))
    for r in results:
        acc[r.dataset][(r.ncf, r.epsilon)].append(r.metrics.err)
    if not acc:
        raise ValueError("no results to summarize")
    tables = {ds: {k: float(np.mean(v)) for k, v in cells.items()} for ds, cells in acc.items()}
    keys = sorted({k for t in tables.values() for k in t}, key=lambda k: (k[1], NCF_ORDER.index(k[0])))
    tables["MEAN"] = {
        k: float(np.mean([t[k] for ds, t in tables.items() if ds != "MEAN" and k in t]))
        for k in keys
    }
    return tables


def write_validity_csv(tables, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["dataset", "ncf", "epsilon", "err"])
        for ds, table in tables.items():
            for (ncf, eps), err in sorted(table.items(), key=lambda kv: (kv[0][1], NCF_ORDER.index(kv[0][0]))):
                writer.writerow([ds, ncf, _fmt(eps), _fmt(err)])


def mean_baseline_errors(baselines: Iterable[BaselineResult]) -> dict[tuple[str, str], float]:
    acc: dict[tuple, list[float]] = defaultdict(list)
    for b in baselines:
        acc[(b.dataset, b.classifier)].append(b.b_err)
    return {k: float(np.mean(v)) for k, v in acc.items()}


@dataclass(frozen=True)
class EffectiveOneCSummary:
    dataset: str
    per_classifier: dict  # classifier -> mean E_oneC (None if never defined)
    mean: float | None
    corr_b_acc: float | None


def summarize_effective_one_c(results: Iterable[FoldResult],
                              baseline: dict[tuple[str, str], float] | None = None,
                              ) -> list[EffectiveOneCSummary]:
    """Per-classifier E_oneC, pooled over folds, then averaged over (NCF, epsilon).

    With baseline errors, also the Pearson correlation between per-classifier
    E_oneC and baseline accuracy ``1 - b_err``.
    """
    cells: dict[str, dict[str, dict[tuple, list]]] = defaultdict(lambda: defaultdict(lambda: defaultdict(list)))
    for r in results:
        cells[r.dataset][r.classifier][(r.ncf, r.epsilon)].append(r.metrics)
    out = []
    for ds, by_clf in cells.items():
        per_clf = {}
        for clf, by_cell in by_clf.items():
            values = [v for v in (pooled_effective_one_c(recs) for recs in by_cell.values()) if v is not None]
            per_clf[clf] = float(np.mean(values)) if values else None
        defined = [v for v in per_clf.values() if v is not None]
        corr = None
        if baseline is not None:
            pairs = [(v, 1.0 - baseline[(ds, clf)]) for clf, v in per_clf.items()
                     if v is not None and (ds, clf) in baseline]
            if len(pairs) >= 2:
                corr = pearson_correlation([p[0] for p in pairs], [p[1] for p in pairs])
        out.append(EffectiveOneCSummary(ds, per_clf, float(np.mean(defined)) if defined else None, corr))
    return out


def mean_metric(results: Iterable[FoldResult], metric: str) -> dict[tuple, float]:
    """Unweighted fold mean keyed by (dataset, classifier, ncf, epsilon)."""
    acc: dict[tuple, list[float]] = defaultdict(list)
    for r in results:
        acc[(r.dataset, r.classifier, r.ncf, r.epsilon)].append(getattr(r.metrics, metric))
    return {k: float(np.mean(v)) for k, v in acc.items()}

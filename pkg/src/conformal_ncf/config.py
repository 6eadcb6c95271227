"""JSON experiment configuration.

Example::

    {
      "datasets": [{"synthetic": {"sigma": 0.6, "n_per_class": 2000}},
                   {"path": "iris.csv", "label": "class"}],
      "classifiers": ["knn", {"kind": "dtree", "min_samples_split_floor": 5}],
      "epsilons": [0.01, 0.05, 0.1, 0.15, 0.2],
      "repeats": 10, "folds": 10, "calibration_fraction": 0.2, "seed": 0,
      "workers": 4, "output_dir": "out", "plot": true, "smoothing": true
    }
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .classifiers import ClassifierSpec
from .dataset import SplitPlan
from .evaluation import DEFAULT_EPSILONS, DatasetSource, ExperimentGrid

WORKERS_ENV = "CONFORMAL_NCF_WORKERS"

_TOP_LEVEL = {
    "datasets", "classifiers", "epsilons", "repeats", "folds", "calibration_fraction",
    "seed", "workers", "output_dir", "plot", "smoothing", "baseline",
}
_SPEC_FIELDS = {f.name for f in fields(ClassifierSpec)}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass(frozen=True)
class ExperimentConfig:
    grid: ExperimentGrid
    output_dir: str = "results"
    workers: int | None = None
    plot: bool = True
    baseline: bool = True

    def resolved_workers(self) -> int:
        if self.workers is not None:
            return self.workers
        env = os.environ.get(WORKERS_ENV)
        if env:
            try:
                return max(1, int(env))
            except ValueError:
                raise ConfigError(f"{WORKERS_ENV}: not an integer: {env!r}") from None
        return 1

    def to_dict(self) -> dict:
        g = self.grid
        datasets = []
        for d in g.datasets:
            if d.path is not None:
                entry = {"path": d.path, "label": d.label}
            else:
                synth = {"sigma": d.sigma, "n_per_class": d.n_per_class}
                if d.seed is not None:
                    synth["seed"] = d.seed
                entry = {"synthetic": synth}
            if d.name:
                entry["name"] = d.name
            datasets.append(entry)
        defaults = ClassifierSpec("knn")
        classifiers = []
        for c in g.classifiers:
            spec = {k: v for k, v in asdict(c).items()
                    if k == "kind" or v != getattr(defaults, k)}
            classifiers.append(spec)
        out = {
            "datasets": datasets,
            "classifiers": classifiers,
            "epsilons": list(g.epsilons),
            "repeats": g.plan.repeats,
            "folds": g.plan.folds,
            "calibration_fraction": g.plan.calibration_fraction,
            "seed": g.plan.seed,
            "smoothing": g.smoothing,
            "output_dir": self.output_dir,
            "plot": self.plot,
            "baseline": self.baseline,
        }
        if self.workers is not None:
            out["workers"] = self.workers
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config: top level must be a JSON object")
        unknown = set(raw) - _TOP_LEVEL
        if unknown:
            raise ConfigError(f"{sorted(unknown)[0]}: unknown field")
        datasets = [_parse_dataset(i, d) for i, d in enumerate(_require_list(raw, "datasets"))]
        if not datasets:
            raise ConfigError("datasets: at least one dataset is required")
        classifiers = [_parse_classifier(i, c)
                       for i, c in enumerate(raw.get("classifiers", ["knn", "gnb", "dtree"]))]
        epsilons = raw.get("epsilons", list(DEFAULT_EPSILONS))
        if not isinstance(epsilons, list) or not all(_is_number(e) for e in epsilons):
            raise ConfigError("epsilons: must be a list of numbers")
        try:
            plan = SplitPlan(
                repeats=_int(raw, "repeats", 10),
                folds=_int(raw, "folds", 10),
                calibration_fraction=_float(raw, "calibration_fraction", 0.2),
                seed=_int(raw, "seed", 0),
            )
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None
        try:
            grid = ExperimentGrid(tuple(datasets), tuple(classifiers), tuple(epsilons), plan,
                                  smoothing=_bool(raw, "smoothing", True))
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None
        workers = raw.get("workers")
        if workers is not None and (not isinstance(workers, int) or isinstance(workers, bool)
                                    or workers < 1):
            raise ConfigError("workers: must be a positive integer")
        output_dir = raw.get("output_dir", "results")
        if not isinstance(output_dir, str) or not output_dir:
            raise ConfigError("output_dir: must be a non-empty string")
        return cls(grid, output_dir, workers, _bool(raw, "plot", True), _bool(raw, "baseline", True))


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _require_list(raw, key):
    if key not in raw:
        raise ConfigError(f"{key}: missing")
    if not isinstance(raw[key], list):
        raise ConfigError(f"{key}: must be a list")
    return raw[key]


def _int(raw, key, default):
    v = raw.get(key, default)
    if not isinstance(v, int) or isinstance(v, bool):
        raise ConfigError(f"{key}: must be an integer")
    return v


def _float(raw, key, default):
    v = raw.get(key, default)
    if not _is_number(v):
        raise ConfigError(f"{key}: must be a number")
    return float(v)


def _bool(raw, key, default):
    v = raw.get(key, default)
    if not isinstance(v, bool):
        raise ConfigError(f"{key}: must be true or false")
    return v


def _parse_dataset(i: int, entry) -> DatasetSource:
    where = f"datasets[{i}]"
    if not isinstance(entry, dict):
        raise ConfigError(f"{where}: must be an object")
    name = entry.get("name")
    try:
        if "synthetic" in entry:
            synth = entry["synthetic"]
            if not isinstance(synth, dict) or "sigma" not in synth:
                raise ConfigError(f"{where}.synthetic.sigma: missing")
            if not _is_number(synth["sigma"]) or synth["sigma"] <= 0:
                raise ConfigError(f"{where}.synthetic.sigma: must be a positive number")
            n = synth.get("n_per_class", 2000)
            if not isinstance(n, int) or isinstance(n, bool) or n < 1:
                raise ConfigError(f"{where}.synthetic.n_per_class: must be a positive integer")
            seed = synth.get("seed")
            if seed is not None and (not isinstance(seed, int) or seed < 0):
                raise ConfigError(f"{where}.synthetic.seed: must be a non-negative integer")
            return DatasetSource(sigma=float(synth["sigma"]), n_per_class=n, seed=seed, name=name)
        if "path" in entry:
            if not isinstance(entry["path"], str):
                raise ConfigError(f"{where}.path: must be a string")
            return DatasetSource(path=entry["path"], label=entry.get("label", "label"), name=name)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    raise ConfigError(f"{where}: needs either 'path' or 'synthetic'")


def _parse_classifier(i: int, entry) -> ClassifierSpec:
    where = f"classifiers[{i}]"
    if isinstance(entry, str):
        entry = {"kind": entry}
    if not isinstance(entry, dict) or "kind" not in entry:
        raise ConfigError(f"{where}.kind: missing")
    unknown = set(entry) - _SPEC_FIELDS
    if unknown:
        raise ConfigError(f"{where}.{sorted(unknown)[0]}: unknown field")
    try:
        return ClassifierSpec(**entry)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def resolve_paths(config: ExperimentConfig, base: Path) -> ExperimentConfig:
    """Make relative CSV paths relative to the config file's directory."""
    datasets = []
    for d in config.grid.datasets:
        if d.path is not None and not Path(d.path).is_absolute():
            d = DatasetSource(path=str(base / d.path), label=d.label, name=d.name or Path(d.path).stem)
        datasets.append(d)
    g = config.grid
    grid = ExperimentGrid(tuple(datasets), g.classifiers, g.epsilons, g.plan, g.smoothing)
    return ExperimentConfig(grid, config.output_dir, config.workers, config.plot, config.baseline)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: {path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return resolve_paths(ExperimentConfig.from_dict(raw), path.resolve().parent)

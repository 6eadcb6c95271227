"""oneC / avgC versus significance level figures, written as SVG."""

from __future__ import annotations

import re
from pathlib import Path
from typing import Iterable

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .evaluation import NCF_ORDER, FoldResult, mean_metric  # noqa: E402

# M dashed, IP dash-dot, IP_M thin solid
LINE_STYLES = {
    "M": dict(linestyle="--", linewidth=1.5, color="tab:blue"),
    "IP": dict(linestyle="-.", linewidth=1.5, color="tab:red"),
    "IP_M": dict(linestyle="-", linewidth=0.8, color="black"),
}
LABELS = {"oneC": "oneC", "avgC": "avgC"}

_RC = {
    "svg.hashsalt": "conformal-ncf",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "figure.figsize": (4.0, 3.0),
}


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", text)


def figure_path(out_dir, dataset: str, classifier: str, metric: str) -> Path:
    return Path(out_dir) / f"{_slug(dataset)}__{_slug(classifier)}__{metric}.svg"


def plot_metric(means: dict, dataset: str, classifier: str, metric: str, path) -> Path:
    """One figure: ``metric`` against epsilon with a line per NCF."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        for ncf in NCF_ORDER:
            pts = sorted((eps, v) for (ds, clf, n, eps), v in means.items()
                         if ds == dataset and clf == classifier and n == ncf)
            if not pts:
                continue
            xs, ys = zip(*pts)
            (line,) = ax.plot(xs, ys, label=ncf, **LINE_STYLES[ncf])
            line.set_gid(f"line-{ncf}")
        ax.set_xlabel("significance level ε")
        ax.set_ylabel(LABELS[metric])
        ax.set_title(f"{dataset}: {classifier}")
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return Path(path)


def plot_results(results: Iterable[FoldResult], out_dir) -> list[Path]:
    """Write oneC and avgC figures for every (dataset, classifier) in ``results``."""
    results = list(results)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pairs = list(dict.fromkeys((r.dataset, r.classifier) for r in results))
    written = []
    for metric in ("oneC", "avgC"):
        means = mean_metric(results, metric)
        for ds, clf in pairs:
            written.append(plot_metric(means, ds, clf, metric, figure_path(out_dir, ds, clf, metric)))
    return sorted(written)

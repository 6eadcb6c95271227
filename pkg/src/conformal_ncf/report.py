"""Plain-text / Markdown rendering of comparison matrices and summary tables."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

from .evaluation import (
    METRICS,
    NCF_ORDER,
    ComparisonMatrix,
    EffectiveOneCSummary,
    FoldResult,
    build_all_matrices,
    group_results,
)

ROW_NAMES = {"IP": "ip", "IP_M": "ip_m", "M": "m"}


def render_matrix_block(dataset: str, classifier: str, epsilons: Sequence[float],
                        matrices: dict[tuple, ComparisonMatrix]) -> str:
    """Markdown table for one (dataset, classifier): one column triple per epsilon."""
    head = ["metric", "row"]
    for eps in epsilons:
        head += [f"ε={eps:g} {ROW_NAMES[c]}" for c in NCF_ORDER]
    lines = [f"### {dataset} / {classifier}", "",
             "| " + " | ".join(head) + " |",
             "|" + "---|" * len(head)]
    for metric in METRICS:
        for row in NCF_ORDER:
            cells = [metric, ROW_NAMES[row]]
            for eps in epsilons:
                m = matrices[(dataset, classifier, eps, metric)]
                cells += [str(m.cell(row, col)) for col in NCF_ORDER]
            lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines)


def render_matrices(results: Sequence[FoldResult], n_classes: dict[str, int],
                    alpha: float = 0.05) -> str:
    matrices = build_all_matrices(results, n_classes, alpha)
    eps_by_pair: dict[tuple, list[float]] = {}
    for ds, clf, eps in group_results(results):
        eps_by_pair.setdefault((ds, clf), []).append(eps)
    blocks = [
        "# Comparison matrices",
        "",
        "Row setup against column setup: `+` better, `-` worse, `*` significant "
        f"(paired t-test, α={alpha:g}). A sign appears when the difference exceeds "
        "2% of the metric range (1 for oneC, the class count for avgC) or is significant.",
    ]
    for (ds, clf), epsilons in eps_by_pair.items():
        blocks += ["", render_matrix_block(ds, clf, sorted(epsilons), matrices)]
    blocks += ["", "## Share of setups with a difference", "",
               "| dataset | metric | thres. | stat. |", "|---|---|---|---|"]
    for ds in dict.fromkeys(k[0] for k in matrices):
        for metric in METRICS:
            ms = [m for k, m in matrices.items() if k[0] == ds and k[3] == metric]
            thr = sum(m.has_sign for m in ms) / len(ms)
            stat = sum(m.has_star for m in ms) / len(ms)
            blocks.append(f"| {ds} | {metric} | {100 * thr:.1f}% | {100 * stat:.1f}% |")
    return "\n".join(blocks) + "\n"


def render_validity(tables: dict[str, dict[tuple[str, float], float]]) -> str:
    lines = ["## Empirical error rates", ""]
    for ds, table in tables.items():
        epsilons = sorted({eps for _, eps in table})
        lines += [f"### {ds}", "", "| ε | " + " | ".join(NCF_ORDER) + " |",
                  "|---|" + "---|" * len(NCF_ORDER)]
        for eps in epsilons:
            vals = [f"{table[(n, eps)]:.2f}" if (n, eps) in table else "" for n in NCF_ORDER]
            lines.append(f"| {eps:.2f} | " + " | ".join(vals) + " |")
        lines.append("")
    return "\n".join(lines)


def _num(v, digits=3) -> str:
    return "" if v is None else f"{v:.{digits}f}"


def render_summary(validity, eonec: Sequence[EffectiveOneCSummary],
                   baseline: dict[tuple[str, str], float] | None) -> str:
    parts = ["# Experiment summary", "", render_validity(validity)]
    if baseline:
        parts += ["## Baseline error (no calibration holdout)", "",
                  "| dataset | classifier | b_err |", "|---|---|---|"]
        parts += [f"| {ds} | {clf} | {err:.3f} |" for (ds, clf), err in baseline.items()]
        parts.append("")
    parts += ["## Effective oneC", "",
              "| dataset | classifier | E_oneC |", "|---|---|---|"]
    for s in eonec:
        parts += [f"| {s.dataset} | {clf} | {_num(v)} |" for clf, v in s.per_classifier.items()]
    parts += ["", "| dataset | E_oneC mean | corr. b_acc |", "|---|---|---|"]
    parts += [f"| {s.dataset} | {_num(s.mean)} | {_num(s.corr_b_acc)} |" for s in eonec]
    return "\n".join(parts) + "\n"


def write_text(text: str, path) -> Path:
    path = Path(path)
    path.write_text(text, encoding="utf-8")
    return path

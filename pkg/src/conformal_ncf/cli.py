"""Command-line interface: ``synth``, ``run``, ``plot`` and ``report``.

Exit codes: 0 success, 1 usage or validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .dataset import DatasetError, generate_synthetic, save_csv
from .evaluation import (
    ResultsFormatError,
    infer_n_classes,
    mean_baseline_errors,
    read_baseline_csv,
    read_results_csv,
    run_experiment,
    summarize_effective_one_c,
    summarize_validity,
    write_baseline_csv,
    write_results_csv,
    write_validity_csv,
)
from .plotting import plot_results
from .report import render_matrices, render_summary, write_text

log = logging.getLogger("conformal_ncf")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive: {text}")
    return v


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1: {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="conformal-ncf", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic 4-cluster dataset as CSV")
    p.add_argument("--sigma", type=_positive_float, required=True)
    p.add_argument("--n", type=_positive_int, default=2000, help="instances per class")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("run", help="run an experiment grid from a JSON config")
    p.add_argument("config", type=Path)
    p.add_argument("--workers", type=_positive_int, help="override the config worker count")
    p.add_argument("--output-dir", type=Path, help="override the config output_dir")
    p.add_argument("--no-plot", action="store_true")

    p = sub.add_parser("plot", help="oneC/avgC vs epsilon SVG figures from results.csv")
    p.add_argument("--results", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("report", help="validity table, matrices and summary from results.csv")
    p.add_argument("--results", type=Path, required=True)
    p.add_argument("--baseline", type=Path, help="baseline.csv (default: next to results)")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--no-plot", action="store_true")
    return parser


def cmd_synth(args) -> int:
    ds = generate_synthetic(args.sigma, args.n, args.seed)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_csv(ds, args.out)
    log.info("wrote %d instances to %s", ds.n_instances, args.out)
    return EXIT_OK


def write_reports(results, baselines, n_classes, out_dir: Path, plot: bool, alpha: float = 0.05):
    validity = summarize_validity(results)
    write_validity_csv(validity, out_dir / "validity.csv")
    write_text(render_matrices(results, n_classes, alpha), out_dir / "matrices.md")
    b_err = mean_baseline_errors(baselines) if baselines else None
    eonec = summarize_effective_one_c(results, b_err)
    write_text(render_summary(validity, eonec, b_err), out_dir / "summary.md")
    if plot:
        plot_results(results, out_dir / "figures")


def cmd_run(args) -> int:
    config = load_config(args.config)
    out_dir = args.output_dir or Path(config.output_dir)
    workers = args.workers or config.resolved_workers()
    grid = config.grid
    log.info("running %d dataset(s) x %d classifier(s) x %d epsilon(s) with %d worker(s)",
             len(grid.datasets), len(grid.classifiers), len(grid.epsilons), workers)
    output = run_experiment(grid, workers=workers, baseline=config.baseline)
    for msg in output.failures:
        print(f"warning: {msg}", file=sys.stderr)
    if not output.results:
        print("error: every dataset/classifier combination failed", file=sys.stderr)
        return EXIT_RUNTIME
    out_dir.mkdir(parents=True, exist_ok=True)
    write_results_csv(output.results, out_dir / "results.csv")
    if output.baselines:
        write_baseline_csv(output.baselines, out_dir / "baseline.csv")
    n_classes = {}
    for source in grid.datasets:
        try:
            n_classes[source.id] = source.load(grid.plan.seed).n_classes
        except Exception:
            continue
    meta = {"config": config.to_dict(), "n_classes": n_classes}
    (out_dir / "run.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    write_reports(output.results, output.baselines, n_classes, out_dir,
                  plot=config.plot and not args.no_plot)
    log.info("wrote results to %s", out_dir)
    return EXIT_OK


def cmd_plot(args) -> int:
    results = read_results_csv(args.results)
    for path in plot_results(results, args.out):
        log.info("wrote %s", path)
    return EXIT_OK


def cmd_report(args) -> int:
    results = read_results_csv(args.results)
    if not results:
        raise ResultsFormatError(f"{args.results}: no result rows")
    baseline_path = args.baseline or args.results.with_name("baseline.csv")
    baselines = read_baseline_csv(baseline_path) if baseline_path.is_file() else []
    meta_path = args.results.with_name("run.json")
    n_classes = infer_n_classes(results)
    if meta_path.is_file():
        n_classes.update(json.loads(meta_path.read_text(encoding="utf-8")).get("n_classes", {}))
    else:
        log.warning("no run.json next to %s; class counts inferred from avgC", args.results)
    args.out.mkdir(parents=True, exist_ok=True)
    write_reports(results, baselines, n_classes, args.out, plot=not args.no_plot, alpha=args.alpha)
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "run": cmd_run, "plot": cmd_plot, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ResultsFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

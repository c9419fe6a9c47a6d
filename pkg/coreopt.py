"""Command-line entry point: run optimizers, compare them, inspect results."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import send2trash
from rich.console import Console
from rich.logging import RichHandler

from evaluation import ConfigError, CoreOptError
from harness import (
    ALGORITHMS,
    LONG_SAMPLES,
    ExperimentConfig,
    compare,
    load_experiment,
    run_experiment,
    sweep,
)
from problem import load_instance, search_space_size
from stats import format_p, friedman, friedman_frame, load_scores, nemenyi, nemenyi_frame, render_text
from surrogate import BRUTE_FORCE_LIMIT, CoreObjective, brute_force

logger = logging.getLogger("coreopt")


def configure_logging(verbosity: int) -> None:
    level = {-1: logging.WARNING, 0: logging.INFO}.get(verbosity, logging.DEBUG)
    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(rich_tracebacks=True, show_path=verbosity > 0)],
        force=True,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coreopt", description=__doc__)
    parser.add_argument("--config", type=Path, help="experiment TOML file")
    parser.add_argument("--out", type=Path, help="output directory (overrides the config)")
    parser.add_argument("--seed", type=int, help="run a single seed instead of the configured list")
    parser.add_argument("--workers", type=int, help="evaluation worker processes")
    parser.add_argument("--max-samples", type=int, dest="max_samples", help="sample budget per run")
    parser.add_argument("--long", action="store_true", help=f"use the long budget of {LONG_SAMPLES} samples")
    noise = parser.add_mutually_exclusive_group()
    noise.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    noise.add_argument("--quiet", action="store_true", help="warnings and errors only")

    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the configured optimizers and write record CSVs")
    run.add_argument("--algo", action="append", choices=sorted(ALGORITHMS), help="restrict to these algorithms")
    run.add_argument("--clean", action="store_true", help="move an existing output directory to the trash first")

    sub.add_parser("compare", help="summary, curves, Friedman and Nemenyi tables over finished runs")
    sub.add_parser("sweep", help="hyper-parameter grid from the [sweep] table")

    st = sub.add_parser("stats", help="Friedman and Nemenyi on a score CSV")
    st.add_argument("scores", type=Path)
    st.add_argument("--alpha", type=float, default=0.1)

    oracle = sub.add_parser("oracle", help="search space size and, when small enough, the exhaustive optimum")
    oracle.add_argument("instance", type=Path)
    oracle.add_argument("--limit", type=int, default=BRUTE_FORCE_LIMIT)

    report = sub.add_parser("report", help="browse the tables written by compare")
    report.add_argument("directory", type=Path, nargs="?")
    report.add_argument("--instance", type=Path, help="instance used to decode best patterns")
    report.add_argument("--plain", action="store_true", help="print the tables instead of opening the viewer")
    return parser


def _experiment(args: argparse.Namespace) -> ExperimentConfig:
    if args.config is None:
        raise ConfigError(f"{args.command} needs --config")
    max_samples = LONG_SAMPLES if args.long else args.max_samples
    return load_experiment(
        args.config,
        out=args.out,
        seeds=None if args.seed is None else [args.seed],
        workers=args.workers,
        max_samples=max_samples,
    )


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _experiment(args)
    if args.algo:
        missing = [a for a in args.algo if a not in cfg.algorithms]
        if missing:
            raise ConfigError(f"--algo {', '.join(missing)} not listed in {args.config}")
        cfg = load_experiment(
            args.config,
            out=cfg.out,
            seeds=list(cfg.seeds),
            workers=cfg.workers,
            max_samples=cfg.max_samples,
            algorithms=tuple(args.algo),
        )
    if args.clean and cfg.out.exists():
        send2trash.send2trash(str(cfg.out))
        logger.info("moved %s to the trash", cfg.out)
    written = run_experiment(cfg)
    logger.info("wrote %d run files under %s", len(written), cfg.out / "runs")
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    result = compare(_experiment(args))
    Console().print(result.report, highlight=False)
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _experiment(args)
    if cfg.sweep is None:
        raise ConfigError(f"{args.config} has no [sweep] table")
    table = sweep(cfg)
    Console().print(render_text(table), highlight=False)
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    scores = load_scores(args.scores)
    fr = friedman(scores)
    nm = nemenyi(scores)
    console = Console()
    console.print(f"Friedman chi2 = {fr.statistic:.3f}, p = {format_p(fr.p_value)}", highlight=False)
    console.print(render_text(friedman_frame(fr), p_columns=["p_value"]), highlight=False)
    frame = nemenyi_frame(nm)
    console.print(render_text(frame, p_columns=list(frame.columns), index=True), highlight=False)
    for a, b, p in nm.significant_pairs(args.alpha):
        console.print(f"  * {a} vs {b}: p = {format_p(p)}", highlight=False)
    return 0


def cmd_oracle(args: argparse.Namespace) -> int:
    inst = load_instance(args.instance)
    size = search_space_size(inst)
    console = Console()
    console.print(f"{inst.name}: {inst.dim} slots, search space {size:.4g}", highlight=False)
    if size > args.limit:
        console.print(f"larger than {args.limit}; no exhaustive search", highlight=False)
        return 0
    vector, best, count = brute_force(CoreObjective(inst), args.limit)
    console.print(f"optimum {best:.6f} at {list(vector)} after {count} evaluations", highlight=False)
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    from report_app import ReportApp, print_tables

    directory = args.directory or args.out
    if directory is None and args.config is not None:
        directory = _experiment(args).out
    if directory is None:
        raise ConfigError("report needs a results directory")
    instance = load_instance(args.instance) if args.instance else None
    if args.plain:
        print_tables(directory, Console())
        return 0
    ReportApp(directory, instance).run()
    return 0


COMMANDS = {
    "run": cmd_run,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
    "stats": cmd_stats,
    "oracle": cmd_oracle,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(-1 if args.quiet else (1 if args.verbose else 0))
    try:
        return COMMANDS[args.command](args)
    except CoreOptError as e:
        logger.error("%s", e)
        return 2


if __name__ == "__main__":
    sys.exit(main())

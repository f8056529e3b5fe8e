"""Command-line entry point: ``cranbf run`` and ``cranbf summarize``.

Exit codes: 0 success, 1 configuration error, 2 runtime or solver failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .harness import ConfigError, ExperimentSpec, format_summary, run_experiment, summarize

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors, not argparse's default status 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="cranbf", description="C-RAN beamforming experiments")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run a Monte-Carlo sweep and write a CSV")
    run.add_argument("--config", required=True, help="JSON experiment specification")
    run.add_argument("--seed", type=int, help="override master_seed")
    run.add_argument("--trials", type=int, help="override trials")
    run.add_argument("--out", help="override output_path")
    run.add_argument("--algorithms", help="comma-separated override, e.g. scfa,ilr,es")
    run.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    run.add_argument("--trace", action="store_true", help="write per-trial SCFA traces")
    run.add_argument("--debug", action="store_true", help="add a problem_hash column")
    run.add_argument("-v", "--verbose", action="store_true")

    summ = sub.add_parser("summarize", help="aggregate a results CSV")
    summ.add_argument("--in", dest="path", required=True, help="results CSV")
    return ap


def _cmd_run(args) -> int:
    try:
        spec = ExperimentSpec.from_json(args.config)
        changes = {}
        if args.seed is not None:
            changes["master_seed"] = args.seed
        if args.trials is not None:
            changes["trials"] = args.trials
        if args.out is not None:
            changes["output_path"] = args.out
        if args.algorithms is not None:
            changes["algorithms"] = tuple(a.strip() for a in args.algorithms.split(",") if a.strip())
        spec = dataclasses.replace(spec, **changes)
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        out = run_experiment(spec, jobs=args.jobs, trace=args.trace, debug=args.debug)
    except Exception as exc:  # solver failures, infeasible draws, I/O
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {out}")
    return EXIT_OK


def _cmd_summarize(args) -> int:
    try:
        table = summarize(args.path)
    except (OSError, ValueError, KeyError) as exc:
        print(f"summarize failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(format_summary(table))
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "run":
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return _cmd_run(args)
    return _cmd_summarize(args)


if __name__ == "__main__":
    sys.exit(main())

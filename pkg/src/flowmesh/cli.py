"""Command line entry point: run scenario files, stream trace records."""

from __future__ import annotations

import argparse
import sys

from .errors import ScenarioError
from .runner import run_scenario
from .scenario import parse_scenario
from .trace import write_trace


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowmesh",
        description="Deterministic runtime for mixed sensor/software "
        "component applications over synchronized flows.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_parser = sub.add_parser("run", help="execute a scenario file")
    run_parser.add_argument("file", help="scenario file path")
    run_parser.add_argument("--seed", type=int, default=0,
                            help="radio loss seed (default 0)")
    run_parser.add_argument("--until", type=int, default=100,
                            help="run until this virtual tick (default 100)")
    run_parser.add_argument("--trace", default=None,
                            help="write the trace to this path")
    run_parser.add_argument("--format", choices=("text", "jsonl"), default="text",
                            help="trace serialization (default text)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command != "run":  # pragma: no cover - argparse enforces this
        return 2
    try:
        with open(args.file, "r", encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        scenario = parse_scenario(text)
    except ScenarioError as exc:
        print(f"error: {args.file}: {exc}", file=sys.stderr)
        return 2
    summary, tracer = run_scenario(scenario, seed=args.seed, until=args.until)
    if args.trace:
        write_trace(tracer.records, args.trace, args.format)
    for line in summary.lines():
        print(line)
    return summary.exit_code


if __name__ == "__main__":
    sys.exit(main())

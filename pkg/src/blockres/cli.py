"""Command line front end.

Subcommands: run a scenario file, run the canonical demo cycle, run the self
test, or reformat a stored report.  Exit code 0 means every check passed, 1
means a check failed, 2 means the input was malformed.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Sequence

from .harness import (
    env_seed,
    report_to_csv,
    report_to_json,
    run_demo,
    run_scenario,
    self_test,
)
from .serialize import InputError

EXIT_PASS = 0
EXIT_CHECK_FAILED = 1
EXIT_INPUT_ERROR = 2


def _emit(text: str, output: str | None) -> None:
    if output is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        with open(output, "w") as fh:
            fh.write(text)


def _finish(report, args) -> int:
    payload = report_to_json(report)
    if args.json:
        _emit(json.dumps(payload, indent=2), args.output)
    else:
        _emit("\n".join(report.lines()), args.output)
        if args.output is not None:
            sys.stdout.write("\n".join(report.lines()) + "\n")
    return EXIT_PASS if report.passed else EXIT_CHECK_FAILED


def _cmd_run(args) -> int:
    return _finish(run_scenario(args.scenario), args)


def _cmd_demo(args) -> int:
    seed = args.seed
    if seed is None:
        seed = env_seed()
    return _finish(run_demo(seed), args)


def _cmd_selftest(args) -> int:
    seed = args.seed
    if seed is None:
        seed = env_seed()
    report = self_test(trials=args.trials, seed=0 if seed is None else seed)
    return _finish(report, args)


def _cmd_report(args) -> int:
    try:
        with open(args.report) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise InputError(args.report, f"cannot read report: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InputError(args.report, f"invalid JSON: {exc}") from None
    if not isinstance(data, dict) or "checks" not in data:
        raise InputError(args.report, "not a report file (missing 'checks')")
    if args.format == "json":
        _emit(json.dumps(data, indent=2), args.output)
    else:
        if data.get("kind") != "scenario":
            raise InputError(args.report, "csv format needs a scenario report with measures")
        _emit(report_to_csv(data), args.output)
    return EXIT_PASS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blockres",
        description="Convert block coherence to entanglement and back, with certified checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario JSON file")
    run_p.add_argument("scenario", help="path to the scenario file")
    run_p.set_defaults(func=_cmd_run)

    demo_p = sub.add_parser("demo", help="run the canonical conversion cycle")
    demo_p.add_argument("--seed", type=int, default=None, help="input state seed")
    demo_p.set_defaults(func=_cmd_demo)

    self_p = sub.add_parser("selftest", help="run the numerical property sweep")
    self_p.add_argument("--trials", type=int, default=100, help="sweep size")
    self_p.add_argument("--seed", type=int, default=None, help="sweep seed")
    self_p.set_defaults(func=_cmd_selftest)

    rep_p = sub.add_parser("report", help="reformat a stored report file")
    rep_p.add_argument("report", help="path to a report JSON file")
    rep_p.add_argument("--format", choices=("json", "csv"), default="json")
    rep_p.set_defaults(func=_cmd_report)

    for p in (run_p, demo_p, self_p, rep_p):
        p.add_argument("--json", action="store_true", help="emit the full JSON report")
        p.add_argument("--output", default=None, help="write to a file instead of stdout")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point: ``netheat <command> --scenario <path> [--out <dir>]``."""
from __future__ import annotations

import argparse
import json
import sys

from .coefficients import CoefficientError
from .graph import GraphError
from .scenario import COMMANDS, ScenarioError, _clean, parse_scenario, run


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="netheat", description="Heat flow on metric graphs with time-dependent coefficients.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--scenario", required=True, help="path to a scenario JSON file")
    p.add_argument("--out", default=None, help="output directory (created if missing)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        sc = parse_scenario(args.scenario)
        report = run(sc, args.command, args.out)
    except FileNotFoundError as exc:
        print(f"netheat: error: {exc}", file=sys.stderr)
        return 2
    except (ScenarioError, GraphError, CoefficientError) as exc:
        print(f"netheat: invalid scenario: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"netheat: {args.command} failed: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(_clean({"command": report.command, **report.summary, "files": report.files}), indent=2))
    if args.command == "analyze" and report.summary.get("bound_satisfied") is False:
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())

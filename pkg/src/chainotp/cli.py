"""Command-line scenario runner.

`chainotp run <scenario-file>` executes a schedule and prints the
step-numbered transcript; `chainotp report <scenario-file>` prints the
gas/throughput/storage report. `--json` switches both to the structured
format, `--seed` overrides the scenario's RNG seed. The file argument may
also name a bundled scenario (see `bundled_scenario_names`).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .scenario import (
    ScenarioConfig,
    ScenarioParseError,
    bundled_scenario_names,
    emit_cost_report,
    load_bundled_scenario,
    parse_scenario,
    run_scenario,
)

import json


def _load_config(target: str) -> ScenarioConfig:
    path = Path(target)
    if path.is_file():
        return parse_scenario(path.read_text())
    if target in bundled_scenario_names():
        return load_bundled_scenario(target)
    raise FileNotFoundError(
        f"no such scenario file: {target!r} (bundled: {', '.join(bundled_scenario_names())})"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chainotp",
        description="Deterministic runner for the ledger-backed 2.5-factor authentication scheme",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_cmd = sub.add_parser("run", help="execute a scenario schedule")
    run_cmd.add_argument("scenario", help="scenario file path or bundled scenario name")
    run_cmd.add_argument("--seed", type=int, default=None, help="override the scenario RNG seed")
    run_cmd.add_argument("--json", action="store_true", help="emit the JSON transcript")

    report_cmd = sub.add_parser("report", help="print the cost/throughput/storage report")
    report_cmd.add_argument("scenario", help="scenario file path or bundled scenario name")
    report_cmd.add_argument("--json", action="store_true", help="emit the report as JSON")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _load_config(args.scenario)
    except (ScenarioParseError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if args.command == "report":
        report = emit_cost_report(config)
        if args.json:
            print(json.dumps(report.as_dict(), sort_keys=True, indent=2))
        else:
            print("\n".join(report.text_lines()))
        return 0

    result = run_scenario(config, seed_override=args.seed)
    if args.json:
        sys.stdout.write(result.to_json())
    else:
        print("\n".join(result.text_lines()))
    return result.exit_status


if __name__ == "__main__":
    raise SystemExit(main())

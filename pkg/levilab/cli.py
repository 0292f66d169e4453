"""
Command-line front end: run scenario files and list the example catalog

Exit codes: 0 = every task ran, 2 = scenario validation error,
3 = at least one task raised a runtime error.
"""
import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from levilab.config import settings
from levilab.exceptions import ScenarioValidationError
from levilab.models import Report, Scenario
from levilab.services.library import example_library
from levilab.services.parallel import set_default_threads
from levilab.services.scenario import run_scenario
from levilab.utils.logging import logger, set_level

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


def load_scenario(path) -> Scenario:
    """
    Read and validate a scenario file.

    Raises:
        ScenarioValidationError: If the file is missing, is not JSON or does not validate;
            the error names the offending field
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ScenarioValidationError(f"scenario file not found: {path}")
    except json.JSONDecodeError as e:
        raise ScenarioValidationError(f"invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}")
    try:
        return Scenario.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        loc = ".".join(str(part) for part in first["loc"])
        raise ScenarioValidationError(first["msg"], loc or None)


def report_json(report: Report) -> str:
    return json.dumps(report.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"


def _headline(result: Optional[dict]) -> str:
    if not result:
        return ""
    parts = []
    for key in ("verdict", "overall", "counts", "consistent", "passed", "violation", "max_residual", "residual",
                "defect", "dims", "decreasing", "csv"):
        if key in result:
            parts.append(f"{key}={json.dumps(result[key], sort_keys=True)}")
    return " ".join(parts)


def report_text(report: Report) -> str:
    """Human-readable summary, one line per task"""
    lines = [f"scenario: {report.scenario}", f"seed: {report.seed}", f"status: {report.status}", ""]
    for t in report.tasks:
        line = f"[{t.status}] {t.id} ({t.kind})"
        if t.error is not None:
            line += f" {t.error.type}: {t.error.message}"
        else:
            detail = _headline(t.result)
            if detail:
                line += f" {detail}"
        lines.append(line)
    return "\n".join(lines) + "\n"


def bundled_scenarios() -> List[str]:
    if not SCENARIO_DIR.is_dir():
        return []
    return sorted(p.name for p in SCENARIO_DIR.glob("*.json"))


def list_examples() -> str:
    """Sorted listing of the example catalog and the bundled scenarios"""
    lines = ["examples:"]
    for entry in example_library():
        lines.append(f"  {entry.name:<20} {entry.kind:<7} {entry.description}")
    lines.append("scenarios:")
    for name in bundled_scenarios():
        lines.append(f"  {name}")
    return "\n".join(lines) + "\n"


def run(path, threads: Optional[int] = None, seed: Optional[int] = None, out: Optional[str] = None) -> int:
    """
    Run one scenario file and write report.json and report.txt.

    Args:
        path: Scenario file
        threads (int, optional): Overrides the scenario thread count
        seed (int, optional): Overrides the scenario seed
        out (str, optional): Output directory; defaults to the scenario's, then settings.OUTPUT_DIR

    Returns:
        int: Exit code
    """
    try:
        scenario = load_scenario(path)
    except ScenarioValidationError as e:
        logger.error("Scenario validation failed", path=str(path), error=str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION

    out_dir = Path(out or scenario.output.dir or settings.OUTPUT_DIR)
    out_dir.mkdir(parents=True, exist_ok=True)
    set_default_threads(threads if threads is not None else scenario.threads)
    try:
        report = run_scenario(scenario, seed, threads, out_dir)
    except ScenarioValidationError as e:
        logger.error("Scenario validation failed", path=str(path), error=str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    finally:
        set_default_threads(None)

    (out_dir / "report.json").write_text(report_json(report), encoding="utf-8")
    (out_dir / "report.txt").write_text(report_text(report), encoding="utf-8")
    logger.info("Scenario finished", scenario=scenario.name, status=report.status, out=str(out_dir))
    print(report_text(report), end="")
    return EXIT_OK if report.status == "ok" else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="levilab", description="q-plurisubharmonicity and q-pseudoconvexity toolkit")
    parser.add_argument("--log-level", default=None, help="Log level (default: settings.LOG_LEVEL)")
    subparsers = parser.add_subparsers(dest="command")

    run_parser = subparsers.add_parser("run", help="Run a scenario file")
    run_parser.add_argument("path", help="Scenario JSON file")
    run_parser.add_argument("--threads", type=int, default=None, help="Worker threads (default: scenario / cores)")
    run_parser.add_argument("--seed", type=int, default=None, help="Override the scenario seed")
    run_parser.add_argument("--out", default=None, help="Output directory")

    subparsers.add_parser("list", help="List catalog examples and bundled scenarios")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.log_level:
        set_level(args.log_level)
    if args.command == "run":
        if args.threads is not None and args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return EXIT_VALIDATION
        return run(args.path, args.threads, args.seed, args.out)
    if args.command == "list":
        print(list_examples(), end="")
        return EXIT_OK
    parser.print_help()
    return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())

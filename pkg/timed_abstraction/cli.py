"""Command-line interface for timed-abstraction.

Exit codes: 0 when every requested verdict passes, 1 when some verdict fails,
2 on usage or input errors.
"""

__all__ = ["run_cli", "main", "EXIT_OK", "EXIT_FAILED", "EXIT_INPUT_ERROR"]

import argparse
import json
import sys
from collections.abc import Sequence
from pathlib import Path

from . import __version__
from .config_manager import ModelConfig
from .exceptions import TimedAbstractionError
from .launcher import ALL_CHECKS, AbstractionLauncher
from .serialization import export_dot, import_ta_json, write_run_csv
from .timed_automaton import simulate_run

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INPUT_ERROR = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="timed-abstraction",
        description="Build and verify timed-automaton abstractions of dynamical systems",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    def model_command(name: str, help_text: str) -> argparse.ArgumentParser:
        command = commands.add_parser(name, help=help_text)
        command.add_argument("model", help="Model file (.yaml, .yml or .json)")
        command.add_argument("--profile", help="Option profile to apply")
        return command

    model_command("validate", "Check partition functions are nonincreasing and diagnose their levels")

    partition = model_command("partition", "Build the partition and print the cell census")
    partition.add_argument("--csv", help="Write grid-point cell membership to this CSV file")

    abstract = model_command("abstract", "Estimate transit times and generate the timed automaton")
    abstract.add_argument("-o", "--output", required=True, help="Timed automaton JSON output")
    abstract.add_argument("--dot", help="Also write a GraphViz dot file")

    simulate = commands.add_parser("simulate", help="Simulate the system (--ode) or the automaton (--ta)")
    simulate.add_argument("source", help="Model file, or timed automaton JSON with --ta")
    mode = simulate.add_mutually_exclusive_group(required=True)
    mode.add_argument("--ode", action="store_true", help="Integrate the ODE")
    mode.add_argument("--ta", action="store_true", help="Sample a run of the timed automaton")
    simulate.add_argument(
        "--from", dest="start", help="Initial state x1,...,xn (--ode) or initial location (--ta)"
    )
    simulate.add_argument("-t", "--time", type=float, required=True, help="End time / horizon")
    simulate.add_argument("--seed", type=int, help="Random seed for --ta (default: model seed)")
    simulate.add_argument("-o", "--output", help="CSV output path")
    simulate.add_argument("--profile", help="Option profile to apply")

    verify = model_command("verify", "Run verification checks")
    verify.add_argument(
        "--check",
        action="append",
        default=None,
        help=f"Check to run ({', '.join(ALL_CHECKS)}, all); repeatable or comma-separated",
    )
    verify.add_argument("--ta", dest="ta_file", help="Use this timed automaton JSON instead of generating one")
    verify.add_argument("--report", help="Write the verification report to this file")
    verify.add_argument("--format", choices=("json", "text"), default="json", help="Report format")

    export = commands.add_parser("export", help="Convert a timed automaton JSON file")
    export.add_argument("ta_file", help="Timed automaton JSON")
    export.add_argument("--dot", required=True, help="GraphViz dot output path")

    init = commands.add_parser("init", help="Write a template model file")
    init.add_argument("path", help="Output path")
    init.add_argument("--format", choices=("yaml", "json"), default=None, help="Defaults to the path suffix")
    return parser


def _parse_point(text: str, dim: int) -> list[float]:
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError as e:
        raise ValueError(f"Malformed state '{text}': expected {dim} comma-separated numbers") from e
    if len(values) != dim:
        raise ValueError(f"State '{text}' has {len(values)} components, expected {dim}")
    return values


def _is_ta_document(path: str) -> bool:
    if Path(path).suffix.lower() != ".json":
        return False
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError):
        return False
    return isinstance(data, dict) and "edges" in data and "system" not in data


def _simulate(args: argparse.Namespace) -> int:
    if args.ta and _is_ta_document(args.source):
        ta = import_ta_json(args.source)
        e0 = args.start or sorted(ta.initial)[0]
        run = simulate_run(ta, e0, 42 if args.seed is None else args.seed, args.time)
        print(f"✅ Run from {e0} ({run.outcome}): {' -> '.join(run.locations)}")
        if args.output:
            write_run_csv(run, ta.clocks, args.output)
            print(f"💾 Run written to {args.output}")
        return EXIT_OK

    launcher = AbstractionLauncher(model_file=args.source, profile=args.profile)
    if args.ode:
        if not args.start:
            raise ValueError("--ode requires --from x1,...,xn")
        launcher.simulate_ode(_parse_point(args.start, launcher.system.dim), args.time, output=args.output)
    else:
        launcher.simulate_ta(e0=args.start, horizon=args.time, seed=args.seed, output=args.output)
    return EXIT_OK


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "init":
        output_format = args.format or ("json" if Path(args.path).suffix.lower() == ".json" else "yaml")
        ModelConfig.create_template(args.path, format=output_format)
        return EXIT_OK

    if args.command == "export":
        export_dot(import_ta_json(args.ta_file), args.dot, name=Path(args.ta_file).stem)
        print(f"💾 Dot graph written to {args.dot}")
        return EXIT_OK

    if args.command == "simulate":
        return _simulate(args)

    launcher = AbstractionLauncher(model_file=args.model, profile=args.profile)
    if args.command == "validate":
        report = launcher.validate()
        return EXIT_OK if report.all_passed else EXIT_FAILED

    if args.command == "partition":
        launcher.build_partition(membership_csv=args.csv)
        return EXIT_OK

    if args.command == "abstract":
        launcher.generate_abstraction(output=args.output, dot=args.dot)
        return EXIT_OK

    checks = [name.strip() for value in (args.check or ["all"]) for name in value.split(",") if name.strip()]
    if args.ta_file:
        launcher.use_abstraction(args.ta_file)
    report = launcher.verify(checks, report_path=args.report, format=args.format)
    return EXIT_OK if report.all_passed else EXIT_FAILED


def run_cli(argv: Sequence[str] | None = None) -> int:
    """
    Run the command line and return the exit code.

    Input errors are printed to stderr as a single line; no traceback escapes.
    """
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_INPUT_ERROR

    try:
        return _dispatch(args)
    except (TimedAbstractionError, ValueError, OSError, ConnectionError) as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()

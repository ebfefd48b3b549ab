from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from dotenv import load_dotenv

from config.settings import Settings, SettingsError, load_settings
from core.error_utils import get_exception_location
from core.normalize import POLICIES, POLICY_AUTO
from core.scenario_runner import ScenarioRunner
from models.report_model import Report
from models.scenario_model import (
    SUITE_ELIMINATION,
    SUITE_KDV,
    SUITE_NORMALIZE,
    SUITES,
    Scenario,
)
from services.scenario_service import (
    ScenarioFormatError,
    ScenarioService,
    ScenarioServiceError,
    parse_choices,
    parse_int_list,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


def _configure_logging(settings: Settings) -> None:
    """
    Configure console + file logging with source file and line numbers.
    """
    level = getattr(logging, settings.log_level, logging.INFO)
    log_file = settings.log_file

    handlers: list[logging.Handler] = [logging.StreamHandler()]
    try:
        handlers.append(logging.FileHandler(log_file, encoding="utf-8"))
    except OSError:
        print(f"Warning: unable to open log file '{log_file}', using console logging only.")

    logging.basicConfig(
        level=level,
        format="%(asctime)s | %(levelname)s | %(name)s | %(filename)s:%(lineno)d | %(message)s",
        handlers=handlers,
        force=True,
    )


def _build_parser(settings: Settings) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="laxalg", description="Lax hierarchy and normalization checks.")
    parser.add_argument("--report", help="Also write the report to this file.")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Run a scenario file.")
    run.add_argument("scenario", help="Path to an INI scenario file.")

    kdv = commands.add_parser("kdv", help="Scalar hierarchy flow for L = ξ^r + lower terms.")
    kdv.add_argument("--r", type=int, default=2)
    kdv.add_argument("--j", type=int, default=3)
    kdv.add_argument("--j2", type=int, help="Second flow for the zero-curvature check.")
    kdv.add_argument("--torder", type=int, default=settings.torder)
    kdv.add_argument("--cap", type=int, default=settings.series_cap, help="Degree of the random coefficients.")
    kdv.add_argument("--seed", type=int, default=settings.seed)

    normalize = commands.add_parser("normalize", help="Run the normalization procedure on generic data.")
    normalize.add_argument("--policy", choices=POLICIES, default=POLICY_AUTO)
    normalize.add_argument("--degrees", required=True, help="Comma-separated generator degrees.")
    normalize.add_argument("--choices", default="", help="Explicit vectors, e.g. '3: -1, 1'.")
    normalize.add_argument("--seed", type=int, default=settings.seed)

    eliminate = commands.add_parser("eliminate", help="Eliminate random expansion matrices.")
    eliminate.add_argument("--dims", required=True, help="'n,d': coordinates and matrix size.")
    eliminate.add_argument("--seed", type=int, default=settings.seed)
    eliminate.add_argument("--count", type=int, default=1)

    check = commands.add_parser("check", help="Run a built-in suite.")
    check.add_argument("--suite", choices=SUITES, required=True)
    check.add_argument("--seed", type=int, default=settings.seed)
    check.add_argument("--count", type=int, default=1)
    return parser


def _scenario_from_args(args: argparse.Namespace, settings: Settings, service: ScenarioService) -> Scenario:
    common = {
        "series_cap": settings.series_cap,
        "xi_floor": settings.xi_floor,
        "torder": settings.torder,
    }
    if args.command == "run":
        return service.load(args.scenario)
    if args.command == "kdv":
        return Scenario(
            name=f"kdv-r{args.r}-j{args.j}",
            suite=SUITE_KDV,
            **{**common, "series_cap": args.cap, "torder": args.torder},
            seed=args.seed,
            r=args.r,
            j=args.j,
            j2=args.j2,
        )
    if args.command == "normalize":
        degrees = parse_int_list(args.degrees, "degrees")
        return Scenario(
            name=f"normalize-{args.policy}",
            suite=SUITE_NORMALIZE,
            degrees=degrees,
            d=len(degrees),
            policy=args.policy,
            choices=parse_choices(args.choices),
            seed=args.seed,
            **common,
        )
    if args.command == "eliminate":
        dims = parse_int_list(args.dims, "dims")
        if len(dims) != 2:
            raise ScenarioFormatError(f"dims: expected 'n,d', got {args.dims!r}")
        return Scenario(
            name=f"eliminate-n{dims[0]}-d{dims[1]}",
            suite=SUITE_ELIMINATION,
            n=dims[0],
            d=dims[1],
            seed=args.seed,
            count=args.count,
            **common,
        )
    return Scenario(name=args.suite, suite=args.suite, seed=args.seed, count=args.count, **common)


def _emit(report: Report, target: Optional[str], service: ScenarioService) -> None:
    sys.stdout.write(report.render())
    if target:
        service.write_report(report, target)


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    try:
        settings = load_settings()
    except SettingsError as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    _configure_logging(settings)

    args = _build_parser(settings).parse_args(argv)
    service = ScenarioService(settings)
    try:
        scenario = _scenario_from_args(args, settings, service)
    except ScenarioServiceError as exc:
        logger.error("Invalid scenario at %s: %s", get_exception_location(exc), exc)
        return EXIT_USAGE

    report = ScenarioRunner(settings).run(scenario)
    try:
        _emit(report, args.report, service)
    except ScenarioServiceError:
        logger.exception("Failed to write the report for '%s'", scenario.name)
        return EXIT_FAILED

    for failure in report.failures:
        print(f"Failed: {failure.name} -> {failure.payload.get('error', 'check did not hold')}", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())

from __future__ import annotations

import configparser
import logging
from fractions import Fraction
from pathlib import Path
from typing import Optional

from config.settings import Settings
from models.report_model import Report
from models.scenario_model import SUITES, Scenario

logger = logging.getLogger(__name__)

SECTION = "scenario"


class ScenarioServiceError(Exception):
    """Base exception raised when scenario files or reports cannot be handled."""


class ScenarioNotFoundError(ScenarioServiceError):
    """Raised when a scenario file does not exist or cannot be read."""


class ScenarioFormatError(ScenarioServiceError):
    """Raised when a scenario file is malformed or violates its invariants."""


def parse_int(raw: str, key: str) -> int:
    try:
        return int(raw.strip())
    except ValueError as exc:
        raise ScenarioFormatError(f"{key}: expected an integer, got {raw!r}") from exc


def parse_int_list(raw: str, key: str) -> tuple[int, ...]:
    parts = [part for part in raw.split(",") if part.strip()]
    return tuple(parse_int(part, key) for part in parts)


def parse_rational(raw: str, key: str) -> Fraction:
    """Exact ``p/q`` or integer text; decimals are refused so nothing is rounded."""
    text = raw.strip()
    numerator, slash, denominator = text.partition("/")
    try:
        if slash:
            return Fraction(int(numerator), int(denominator))
        return Fraction(int(text))
    except (ValueError, ZeroDivisionError) as exc:
        raise ScenarioFormatError(f"{key}: expected p/q, got {raw!r}") from exc


def parse_choices(raw: str, key: str = "choices") -> dict[int, tuple[Fraction, ...]]:
    """``3: -1, 1; 4: 0, 1, -1`` → explicit vectors per 1-based row."""
    choices: dict[int, tuple[Fraction, ...]] = {}
    for group in raw.split(";"):
        if not group.strip():
            continue
        row, colon, values = group.partition(":")
        if not colon:
            raise ScenarioFormatError(f"{key}: group {group.strip()!r} lacks 'row:'")
        choices[parse_int(row, key)] = tuple(
            parse_rational(value, key) for value in values.split(",") if value.strip()
        )
    return choices


def parse_hilbert(raw: str, key: str = "hilbert") -> dict[int, int]:
    """``2:1, 3:6, 4:16`` → section counts by twist."""
    counts: dict[int, int] = {}
    for item in raw.split(","):
        if not item.strip():
            continue
        twist, colon, count = item.partition(":")
        if not colon:
            raise ScenarioFormatError(f"{key}: item {item.strip()!r} lacks 'twist:'")
        counts[parse_int(twist, key)] = parse_int(count, key)
    return counts


class ScenarioService:
    """Reads scenario files and writes reports."""

    def __init__(self, settings: Optional[Settings] = None) -> None:
        self._settings = settings or Settings()

    def load(self, path: str | Path) -> Scenario:
        source = Path(path)
        try:
            text = source.read_text(encoding="utf-8")
        except FileNotFoundError as exc:
            raise ScenarioNotFoundError(f"Scenario file not found: {source}") from exc
        except OSError as exc:
            raise ScenarioNotFoundError(f"Failed to read scenario file {source}: {exc}") from exc
        scenario = self.parse(text, str(source))
        logger.info("Loaded scenario '%s' (%s) from %s", scenario.name, scenario.suite, source)
        return scenario

    def parse(self, text: str, source: str = "<string>") -> Scenario:
        """
        Parse an INI scenario.

        Missing caps, order and seed come from the settings.

        Raises:
            ScenarioFormatError: Syntax errors, unknown suites, non-integer
                values, decreasing degrees or non-positive caps.
        """
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(text, source=source)
        except configparser.Error as exc:
            raise ScenarioFormatError(f"{source}: {exc}") from exc
        if not parser.has_section(SECTION):
            raise ScenarioFormatError(f"{source}: missing [{SECTION}] section")
        section = parser[SECTION]

        suite = section.get("suite", "").strip()
        if suite not in SUITES:
            raise ScenarioFormatError(f"{source}: unknown suite {suite!r}; expected one of {', '.join(SUITES)}")
        settings = self._settings

        def integer(key: str, default: int) -> int:
            return parse_int(section[key], key) if key in section else default

        degrees = parse_int_list(section.get("degrees", ""), "degrees")
        scenario = Scenario(
            name=section.get("name", suite).strip() or suite,
            suite=suite,
            degrees=degrees,
            n=integer("n", 1),
            d=integer("d", len(degrees) or 1),
            series_cap=integer("series_cap", settings.series_cap),
            xi_floor=integer("xi_floor", settings.xi_floor),
            torder=integer("torder", settings.torder),
            policy=section.get("policy", "auto").strip(),
            choices=parse_choices(section.get("choices", "")),
            seed=integer("seed", settings.seed),
            count=integer("count", 1),
            r=integer("r", 2),
            j=integer("j", 3),
            j2=parse_int(section["j2"], "j2") if "j2" in section else None,
            hilbert=parse_hilbert(section.get("hilbert", "")),
            kappa=parse_int(section["kappa"], "kappa") if "kappa" in section else None,
        )
        self._validate(scenario, source)
        return scenario

    @staticmethod
    def _validate(scenario: Scenario, source: str) -> None:
        if any(b < a for a, b in zip(scenario.degrees, scenario.degrees[1:])):
            raise ScenarioFormatError(f"{source}: degrees {scenario.degrees} are not nondecreasing")
        if scenario.degrees and scenario.d != len(scenario.degrees):
            raise ScenarioFormatError(f"{source}: d = {scenario.d} but {len(scenario.degrees)} degrees given")
        for key in ("n", "d", "series_cap", "torder", "count"):
            if getattr(scenario, key) < 1:
                raise ScenarioFormatError(f"{source}: {key} must be positive, got {getattr(scenario, key)}")
        if scenario.xi_floor > 0:
            raise ScenarioFormatError(f"{source}: xi_floor must be at most 0, got {scenario.xi_floor}")

    @staticmethod
    def write_report(report: Report, path: str | Path) -> Path:
        target = Path(path)
        try:
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(report.render(), encoding="utf-8")
        except OSError as exc:
            raise ScenarioServiceError(f"Failed to write report {target}: {exc}") from exc
        logger.info("Wrote %d records for '%s' to %s", len(report.records), report.scenario, target)
        return target

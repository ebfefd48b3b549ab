from __future__ import annotations

from fractions import Fraction
from pathlib import Path

import pytest

from config.settings import Settings
from models.report_model import Report
from models.scenario_model import SUITES
from services.scenario_service import (
    ScenarioFormatError,
    ScenarioNotFoundError,
    ScenarioService,
    parse_choices,
    parse_hilbert,
    parse_rational,
)


def _service() -> ScenarioService:
    return ScenarioService(Settings(series_cap=5, xi_floor=-4, torder=2, seed=11))


def test_load_reads_scenario_and_fills_defaults(tmp_path) -> None:
    path = tmp_path / "fano.ini"
    path.write_text(
        "[scenario]\n"
        "name = fano-explicit\n"
        "suite = normalize\n"
        "degrees = 2, 3, 3, 3, 4\n"
        "policy = explicit\n"
        "choices = 3: 1, -1; 4: 1, -1, -1\n",
        encoding="utf-8",
    )

    scenario = _service().load(path)

    assert scenario.name == "fano-explicit"
    assert scenario.degrees == (2, 3, 3, 3, 4)
    assert scenario.d == 5
    assert scenario.choices == {3: (Fraction(1), Fraction(-1)), 4: (Fraction(1), Fraction(-1), Fraction(-1))}
    assert (scenario.series_cap, scenario.xi_floor, scenario.torder, scenario.seed) == (5, -4, 2, 11)


def test_kdv_keys_are_parsed() -> None:
    scenario = _service().parse("[scenario]\nsuite = kdv\nr = 3\nj = 2\nj2 = 4\ntorder = 1\n")

    assert scenario.name == "kdv"
    assert (scenario.r, scenario.j, scenario.j2, scenario.torder) == (3, 2, 4, 1)


def test_missing_file_raises_not_found(tmp_path) -> None:
    with pytest.raises(ScenarioNotFoundError):
        _service().load(tmp_path / "absent.ini")


@pytest.mark.parametrize(
    "text",
    [
        "suite = kdv\n",
        "[scenario]\nsuite = spectral\n",
        "[scenario]\nsuite = normalize\ndegrees = 3, 1\n",
        "[scenario]\nsuite = normalize\ndegrees = 0, 1\nd = 3\n",
        "[scenario]\nsuite = kdv\ntorder = 0\n",
        "[scenario]\nsuite = kdv\nxi_floor = 2\n",
        "[scenario]\nsuite = kdv\nj = three\n",
        "[scenario]\nsuite = normalize\nchoices = 3: 0.5, 1\n",
    ],
)
def test_malformed_scenarios_are_rejected(text: str) -> None:
    with pytest.raises(ScenarioFormatError):
        _service().parse(text)


def test_value_parsers() -> None:
    assert parse_rational(" -3/6 ", "x") == Fraction(-1, 2)
    assert parse_choices("") == {}
    assert parse_choices("2: 1; 3: 0, 1") == {2: (Fraction(1),), 3: (Fraction(0), Fraction(1))}
    assert parse_hilbert("2:1, 3:6, 4:16") == {2: 1, 3: 6, 4: 16}

    with pytest.raises(ScenarioFormatError):
        parse_hilbert("2=1")
    with pytest.raises(ScenarioFormatError):
        parse_rational("1/0", "x")


def test_write_report_creates_parent_directories(tmp_path) -> None:
    report = Report("demo")
    report.add_check("normalize", True)
    target = tmp_path / "out" / "demo.tsv"

    written = ScenarioService.write_report(report, target)

    assert written == target
    assert target.read_text(encoding="utf-8") == report.render()


SHIPPED = sorted((Path(__file__).resolve().parent.parent / "scenarios").glob("*.ini"))


def test_shipped_scenarios_are_present() -> None:
    names = {path.stem for path in SHIPPED}

    assert {"kdv-j3", "kdv-j5", "elimination", "properties", "recipes"} <= names


@pytest.mark.parametrize("path", SHIPPED, ids=lambda path: path.stem)
def test_shipped_scenarios_parse(path: Path) -> None:
    scenario = ScenarioService().load(path)

    assert scenario.suite in SUITES
    assert scenario.name

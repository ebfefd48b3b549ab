from __future__ import annotations

import pytest

import main as app_main
from models.report_model import Report


class FakeRunner:
    scenarios: list = []
    passed = True

    def __init__(self, settings) -> None:
        self.settings = settings

    def run(self, scenario) -> Report:
        FakeRunner.scenarios.append(scenario)
        report = Report(scenario.name)
        report.add_check("fake", FakeRunner.passed, **({} if FakeRunner.passed else {"error": "boom"}))
        return report


@pytest.fixture(autouse=True)
def _isolated(monkeypatch, tmp_path):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("LOG_FILE", str(tmp_path / "laxalg.log"))
    monkeypatch.setattr(app_main, "ScenarioRunner", FakeRunner)
    FakeRunner.scenarios = []
    FakeRunner.passed = True


def test_kdv_command_builds_scenario(capsys) -> None:
    code = app_main.main(["kdv", "--r", "3", "--j", "2", "--j2", "4", "--torder", "1"])

    scenario = FakeRunner.scenarios[0]
    assert code == app_main.EXIT_OK
    assert (scenario.suite, scenario.r, scenario.j, scenario.j2, scenario.torder) == ("kdv", 3, 2, 4, 1)
    assert scenario.name == "kdv-r3-j2"
    assert "check\tfake\t" in capsys.readouterr().out


def test_normalize_command_parses_degrees_and_choices() -> None:
    code = app_main.main(["normalize", "--policy", "explicit", "--degrees", "0,1,2", "--choices", "3: -1, 1"])

    scenario = FakeRunner.scenarios[0]
    assert code == app_main.EXIT_OK
    assert scenario.degrees == (0, 1, 2)
    assert scenario.d == 3
    assert scenario.policy == "explicit"
    assert set(scenario.choices) == {3}


def test_failing_check_exits_one_and_names_it(capsys) -> None:
    FakeRunner.passed = False

    code = app_main.main(["check", "--suite", "recipes"])

    assert code == app_main.EXIT_FAILED
    assert "Failed: fake -> boom" in capsys.readouterr().err


def test_bad_dims_is_usage_error() -> None:
    assert app_main.main(["eliminate", "--dims", "1,2,3"]) == app_main.EXIT_USAGE
    assert FakeRunner.scenarios == []


def test_missing_scenario_file_is_usage_error(tmp_path) -> None:
    assert app_main.main(["run", str(tmp_path / "absent.ini")]) == app_main.EXIT_USAGE


def test_bad_environment_is_usage_error(monkeypatch) -> None:
    monkeypatch.setenv("LAXALG_TORDER", "0")

    assert app_main.main(["check", "--suite", "ruled"]) == app_main.EXIT_USAGE


def test_report_option_writes_file(tmp_path) -> None:
    target = tmp_path / "reports" / "run.tsv"
    scenario_file = tmp_path / "ruled.ini"
    scenario_file.write_text("[scenario]\nsuite = ruled\nkappa = 1\n", encoding="utf-8")

    code = app_main.main(["--report", str(target), "run", str(scenario_file)])

    assert code == app_main.EXIT_OK
    assert FakeRunner.scenarios[0].kappa == 1
    assert target.read_text(encoding="utf-8").startswith("check\tfake\t")

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

RECORD_SCENARIO = "scenario"
RECORD_CHECK = "check"
RECORD_VALUE = "value"


@dataclass
class ReportRecord:
    kind: str
    name: str
    payload: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.kind != RECORD_CHECK or bool(self.payload.get("passed"))

    def render(self) -> str:
        """One self-delimited line: kind, name and a key-sorted JSON payload."""
        payload = json.dumps(self.payload, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
        return f"{self.kind}\t{self.name}\t{payload}"


@dataclass
class Report:
    scenario: str
    records: list[ReportRecord] = field(default_factory=list)

    def add_scenario(self, **payload: Any) -> None:
        self.records.append(ReportRecord(RECORD_SCENARIO, self.scenario, payload))

    def add_value(self, name: str, **payload: Any) -> None:
        self.records.append(ReportRecord(RECORD_VALUE, name, payload))

    def add_check(self, name: str, passed: bool, **details: Any) -> None:
        self.records.append(ReportRecord(RECORD_CHECK, name, {"passed": passed, **details}))

    @property
    def checks(self) -> list[ReportRecord]:
        return [record for record in self.records if record.kind == RECORD_CHECK]

    @property
    def failures(self) -> list[ReportRecord]:
        return [record for record in self.checks if not record.passed]

    @property
    def passed(self) -> bool:
        return not self.failures

    def render(self) -> str:
        return "".join(f"{record.render()}\n" for record in self.records)

"""Acceptance criteria of the laboratory, runnable as one suite.

Importing the package registers every criterion; ``run_suite`` runs them in
order of their number (0 is the fixture file itself).
"""
from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from rilab.checks import (  # noqa: F401  (registration)
    coupling_checks,
    geometry_checks,
    observable_checks,
    potential_checks,
    process_checks,
    trend_checks,
)
from rilab.checks.base import REGISTRY, CriterionResult, SuiteContext
from rilab.errors import CriterionFailure, ParameterError

logger = logging.getLogger(__name__)


@dataclass
class SuiteReport:
    level: str
    results: list[CriterionResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def failing(self) -> list[CriterionResult]:
        return [r for r in self.results if not r.passed]

    def raise_for_failure(self) -> None:
        if self.failing:
            first = self.failing[0]
            raise CriterionFailure(f"{first.number} {first.name}", first.detail)

    def to_dict(self) -> dict[str, Any]:
        return {"level": self.level, "passed": self.passed,
                "criteria": [r.to_dict() for r in self.results]}


def run_suite(level: str = "fast", only: Sequence[int] | None = None,
              fixtures_path: Path | str | None = None,
              workers: int | None = None) -> SuiteReport:
    """Run the selected criteria.

    Raises:
        ParameterError: If the level is unknown or a selected criterion does not exist
    """
    if level not in ("fast", "full"):
        raise ParameterError(f"level must be fast or full, got {level!r}")
    numbers = sorted(REGISTRY) if not only else sorted(set(only))
    missing = [n for n in numbers if n not in REGISTRY]
    if missing:
        raise ParameterError(f"no criterion numbered {missing[0]}")
    ctx = SuiteContext(level, Path(fixtures_path) if fixtures_path else None, workers or 1)
    report = SuiteReport(level)
    for n in numbers:
        report.results.append(REGISTRY[n].run(ctx))
    return report

"""Criterion registry and the context a criterion runs in."""
from __future__ import annotations

import logging
import time
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal

import numpy as np

from rilab import fixtures
from rilab.errors import RilabError
from rilab.harness import trial_rng

logger = logging.getLogger(__name__)

Level = Literal["fast", "full"]
SUITE_SEED = 0x5EED_2024


@dataclass
class CriterionResult:
    """Verdict of one criterion with the numbers behind it."""

    number: int
    name: str
    passed: bool
    detail: str = ""
    metrics: dict[str, Any] = field(default_factory=dict)
    seconds: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        return {"number": self.number, "name": self.name, "passed": self.passed,
                "detail": self.detail, "metrics": self.metrics}


@dataclass
class SuiteContext:
    """Level, fixture file and seeds shared by the criteria of one run."""

    level: Level = "fast"
    fixtures_path: Path | None = None
    workers: int = 1

    def rng(self, number: int, stream: int = 0) -> np.random.Generator:
        return trial_rng(SUITE_SEED ^ (number << 16), stream)

    def size(self, fast: int, full: int) -> int:
        return full if self.level == "full" else fast

    def fixture(self, name: str) -> float:
        return fixtures.get(name, self.fixtures_path)


Check = Callable[[SuiteContext], tuple[bool, str, dict[str, Any]]]


@dataclass(frozen=True)
class Criterion:
    number: int
    name: str
    check: Check

    def run(self, ctx: SuiteContext) -> CriterionResult:
        began = time.perf_counter()
        try:
            passed, detail, metrics = self.check(ctx)
        except RilabError as e:
            passed, detail, metrics = False, f"{type(e).__name__}: {e}", {}
        seconds = time.perf_counter() - began
        logger.info("criterion %d (%s): %s in %.1fs", self.number, self.name,
                    "pass" if passed else "FAIL", seconds)
        return CriterionResult(self.number, self.name, passed, detail, metrics, seconds)


REGISTRY: dict[int, Criterion] = {}


def criterion(number: int, name: str) -> Callable[[Check], Check]:
    """Register a check under its number."""
    def register(fn: Check) -> Check:
        if number in REGISTRY:
            raise ValueError(f"criterion {number} registered twice")
        REGISTRY[number] = Criterion(number, name, fn)
        return fn
    return register

"""Batch experiments: derived seeds, a process pool, Wilson intervals and JSONL records.

Every trial owns a generator seeded from SplitMix64(point_seed XOR index),
so the estimate of a parameter point depends only on the config, the seed
and the trial indices, not on how trials were split across runs or
workers. Records are folded per parameter point; counts add exactly and
value sums use ``math.fsum``.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field
from functools import lru_cache
from multiprocessing import Pool
from pathlib import Path
from typing import Any, Literal, TextIO

import numpy as np

from rilab.coarse import line_coarsening
from rilab.config import ExperimentConfig
from rilab.errors import ParameterError, RilabError, TrialFailureError
from rilab.events import EventSpec, arm_event, box_measure, event_trial
from rilab.interlacements import sample_process, vacant_field
from rilab.lattice import AnnulusSpec, Box, SiteSet
from rilab.observables import HarmonicWeight, sample_h, upper_tail_bound, weight_V
from rilab.potential import box_capacity, capacity
from rilab.walks import WalkConfig

logger = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1
SPLITMIX_GAMMA = 0x9E3779B97F4A7C15
SPLITMIX_M1 = 0xBF58476D1CE4E5B9
SPLITMIX_M2 = 0x94D049BB133111EB

WILSON_Z = 1.959963984540054
MAX_FAILURE_RATE = 0.01

PLOT_COLUMNS = {
    "decay": ("N", "u", "p_hat", "lo", "hi", "trials"),
    "capacity": ("L", "cap", "lo", "hi", "trials", "exact"),
    "tail": ("u", "u_plus", "rate", "lo", "hi", "bound", "trials"),
}


# seeds -------------------------------------------------------------------------------------


def splitmix64(x: int) -> int:
    """One SplitMix64 output for state ``x``."""
    z = (x + SPLITMIX_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * SPLITMIX_M1) & MASK64
    z = ((z ^ (z >> 27)) * SPLITMIX_M2) & MASK64
    return z ^ (z >> 31)


def trial_seed(base: int, index: int) -> int:
    return splitmix64((base ^ index) & MASK64)


def trial_rng(base: int, index: int) -> np.random.Generator:
    """PCG64 generator of trial ``index`` under ``base``."""
    seq = np.random.SeedSequence(trial_seed(base, index))
    return np.random.Generator(np.random.PCG64(seq))


def threads_from_env() -> int:
    """RILAB_THREADS, else the CPU count."""
    value = os.environ.get("RILAB_THREADS")
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            logger.warning("ignoring RILAB_THREADS=%r", value)
    return os.cpu_count() or 1


# estimates ---------------------------------------------------------------------------------


def wilson_interval(hits: int, n: int, z: float = WILSON_Z) -> tuple[float, float]:
    """Wilson score interval for a Bernoulli rate; (0, 1) when n = 0."""
    if n <= 0:
        return 0.0, 1.0
    p = hits / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = p + z2 / (2.0 * n)
    radius = z * math.sqrt(max(0.0, p * (1.0 - p) / n + z2 / (4.0 * n * n)))
    return max(0.0, (center - radius) / denom), min(1.0, (center + radius) / denom)


@dataclass
class EstimateRecord:
    """Pooled result of one parameter point.

    Attributes:
        experiment: Experiment name
        params: Parameter point
        kind: "rate" (indicator trials) or "mean" (value trials)
        trials: Successful trials
        total: Sum of the trial values (the hit count for rates)
        total_sq: Sum of squared trial values
        seed: Base seed of the run
        failures: Trials that raised
        wall_time: Seconds spent in the trials
        notes: Bias notes (kill radius, window proxies)
        extra: Reference values next to the estimate
    """

    experiment: str
    params: dict[str, Any]
    kind: Literal["rate", "mean"]
    trials: int = 0
    total: float = 0.0
    total_sq: float = 0.0
    seed: int = 0
    failures: int = 0
    wall_time: float = 0.0
    notes: list[str] = field(default_factory=list)
    extra: dict[str, float] = field(default_factory=dict)

    @property
    def hits(self) -> int | None:
        return int(round(self.total)) if self.kind == "rate" else None

    @property
    def estimate(self) -> float:
        return self.total / self.trials if self.trials else 0.0

    @property
    def stderr(self) -> float:
        n = self.trials
        if n < 2:
            return 0.0
        var = max(0.0, (self.total_sq - self.total * self.total / n) / (n - 1))
        return math.sqrt(var / n)

    @property
    def interval(self) -> tuple[float, float]:
        if self.kind == "rate":
            return wilson_interval(self.hits, self.trials)
        half = WILSON_Z * self.stderr
        return self.estimate - half, self.estimate + half

    def key(self) -> str:
        return json.dumps([self.experiment, self.params], sort_keys=True)

    def merge(self, other: EstimateRecord) -> EstimateRecord:
        if self.key() != other.key():
            raise ParameterError("can only merge records of the same parameter point")
        return EstimateRecord(
            self.experiment, dict(self.params), self.kind,
            trials=self.trials + other.trials,
            total=math.fsum([self.total, other.total]),
            total_sq=math.fsum([self.total_sq, other.total_sq]),
            seed=self.seed, failures=self.failures + other.failures,
            wall_time=self.wall_time + other.wall_time,
            notes=sorted(set(self.notes) | set(other.notes)),
            extra={**self.extra, **other.extra},
        )

    def to_dict(self, timing: bool = False) -> dict[str, Any]:
        lo, hi = self.interval
        out = {
            "experiment": self.experiment, "params": self.params, "kind": self.kind,
            "trials": self.trials, "hits": self.hits, "total": self.total,
            "total_sq": self.total_sq, "estimate": self.estimate, "stderr": self.stderr,
            "lo": lo, "hi": hi, "seed": self.seed, "failures": self.failures,
            "notes": list(self.notes), "extra": dict(self.extra),
        }
        if timing:
            out["wall_time"] = self.wall_time
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> EstimateRecord:
        return cls(
            data["experiment"], dict(data["params"]), data["kind"], int(data["trials"]),
            float(data["total"]), float(data["total_sq"]), int(data.get("seed", 0)),
            int(data.get("failures", 0)), float(data.get("wall_time", 0.0)),
            list(data.get("notes", [])), dict(data.get("extra", {})),
        )


def merge_records(*batches: Iterable[EstimateRecord]) -> list[EstimateRecord]:
    """Pool records of the same parameter points, keeping first-seen order."""
    pooled: dict[str, EstimateRecord] = {}
    for batch in batches:
        for r in batch:
            k = r.key()
            pooled[k] = pooled[k].merge(r) if k in pooled else r
    return list(pooled.values())


# experiments -------------------------------------------------------------------------------


Trial = Callable[[dict[str, Any], ExperimentConfig, np.random.Generator], float]


@dataclass(frozen=True)
class Experiment:
    name: str
    kind: Literal["rate", "mean"]
    grid: Callable[[ExperimentConfig], list[dict[str, Any]]]
    trial: Trial
    notes: Callable[[ExperimentConfig], list[str]] = lambda config: []
    reference: Callable[[dict[str, Any], ExperimentConfig], dict[str, float]] = \
        lambda params, config: {}


def _walk_cfg(config: ExperimentConfig) -> WalkConfig:
    return WalkConfig(kappa=config.kappa)


def _kill_note(config: ExperimentConfig) -> list[str]:
    bias = _walk_cfg(config).bias_bound(config.d)
    return [f"kill radius kappa={config.kappa:g}, bias <= {bias:.2e}"]


def _levels(config: ExperimentConfig) -> list[dict[str, Any]]:
    return [{"u": u} for u in config.levels]


def _radii_levels(key: str) -> Callable[[ExperimentConfig], list[dict[str, Any]]]:
    def grid(config: ExperimentConfig) -> list[dict[str, Any]]:
        return [{key: r, "u": u} for r in config.radii for u in config.levels]
    return grid


def _void(params, config, rng) -> float:
    measure = box_measure(Box.ball(0, config.d))
    s = sample_process(measure.base, params["u"], _walk_cfg(config), rng, measure=measure)
    return float(s.count == 0)


def _void_reference(params, config) -> dict[str, float]:
    return {"exact": math.exp(-params["u"] * box_capacity(1, config.d))}


def _one_arm(params, config, rng) -> float:
    R, u = params["R"], params["u"]
    measure = box_measure(Box.ball(R, config.d))
    s = sample_process(measure.base, u, _walk_cfg(config), rng, measure=measure)
    return float(arm_event(vacant_field(s, u), R))


def _exist(params, config, rng) -> float:
    spec = EventSpec("exist", L=params["L"], u=params["u"], d=config.d)
    return float(event_trial(spec, rng, _walk_cfg(config)).verdict)


def _two_arms(params, config, rng) -> float:
    spec = EventSpec("two_arms", u=params["u"], d=config.d,
                     annulus=AnnulusSpec("euclidean-double", params["N"]))
    return float(event_trial(spec, rng, _walk_cfg(config)).verdict)


def _capacity(params, config, rng) -> float:
    K = SiteSet.from_box(Box((0,) * config.d, (params["L"],) * config.d))
    return capacity(K, mode="mc", rng=rng, n=config.escape_trials, cfg=_walk_cfg(config))


def _capacity_reference(params, config) -> dict[str, float]:
    return {"exact": box_capacity(params["L"], config.d)}


@lru_cache(maxsize=8)
def _tail_weight(n: int, K: int, L: int, d: int) -> HarmonicWeight:
    return weight_V(line_coarsening(n, K, L, d))


def _u_plus(params, config) -> float:
    return config.u_plus if config.u_plus is not None else 2 * params["u"] * (1 + config.eps)


def _tail(params, config, rng) -> float:
    W = _tail_weight(params["n"], config.K, config.L, config.d)
    h = sample_h(W, params["u"], _walk_cfg(config), rng).values[0]
    return float(h >= _u_plus(params, config) * W.cap)


def _tail_grid(config: ExperimentConfig) -> list[dict[str, Any]]:
    return [{"n": r, "u": u} for r in config.radii for u in config.levels]


def _tail_reference(params, config) -> dict[str, float]:
    W = _tail_weight(params["n"], config.K, config.L, config.d)
    u_plus = _u_plus(params, config)
    return {"u_plus": u_plus, "bound": upper_tail_bound(params["u"], u_plus, config.eps, W.cap),
            "cap": W.cap}


REGISTRY: dict[str, Experiment] = {
    "void": Experiment("void", "rate", _levels, _void, _kill_note, _void_reference),
    "one_arm": Experiment("one_arm", "rate", _radii_levels("R"), _one_arm, _kill_note),
    "exist": Experiment("exist", "rate", _radii_levels("L"), _exist, _kill_note),
    "two_arms": Experiment("two_arms", "rate", _radii_levels("N"), _two_arms, _kill_note),
    "capacity": Experiment(
        "capacity", "mean", lambda config: [{"L": r} for r in config.radii], _capacity,
        _kill_note, _capacity_reference),
    "tail": Experiment("tail", "rate", _tail_grid, _tail, _kill_note, _tail_reference),
}


# running -----------------------------------------------------------------------------------


def _run_trial(task: tuple[str, dict[str, Any], dict[str, Any], int, int]):
    """Run one trial; returns (value, error) so that failures travel back."""
    name, config_dict, params, point_seed, index = task
    config = ExperimentConfig(**config_dict)
    rng = trial_rng(point_seed, index)
    try:
        return REGISTRY[name].trial(params, config, rng), None
    except (RilabError, ValueError, ArithmeticError) as e:
        return None, f"{type(e).__name__}: {e}"


def run_experiment(config: ExperimentConfig, start: int = 0,
                   workers: int | None = None) -> list[EstimateRecord]:
    """Run ``config.trials`` trials per parameter point.

    Args:
        config: Validated configuration
        start: Index of the first trial (split runs use disjoint ranges)
        workers: Pool size (RILAB_THREADS or the CPU count when None)

    Raises:
        TrialFailureError: If more than 1% of the trials raised
    """
    if config.trials == 0:
        return []
    exp = REGISTRY[config.experiment]
    points = exp.grid(config)
    config_dict = config.to_dict()
    tasks = [
        (exp.name, config_dict, params, trial_seed(config.seed, p), t)
        for p, params in enumerate(points)
        for t in range(start, start + config.trials)
    ]
    workers = workers or threads_from_env()
    began = time.perf_counter()
    if workers > 1 and len(tasks) > 1:
        with Pool(processes=min(workers, len(tasks))) as pool:
            results = pool.map(_run_trial, tasks, chunksize=max(1, len(tasks) // (4 * workers)))
    else:
        results = [_run_trial(t) for t in tasks]
    elapsed = time.perf_counter() - began

    errors = [err for _, err in results if err is not None]
    if len(errors) > MAX_FAILURE_RATE * len(tasks):
        raise TrialFailureError(len(errors), len(tasks), errors[0])
    for err in errors[:5]:
        logger.warning("trial failed: %s", err)

    notes = exp.notes(config)
    records = []
    per_point = config.trials
    for p, params in enumerate(points):
        chunk = results[p * per_point:(p + 1) * per_point]
        values = [v for v, err in chunk if err is None]
        records.append(EstimateRecord(
            exp.name, params, exp.kind, trials=len(values), total=math.fsum(values),
            total_sq=math.fsum(v * v for v in values), seed=config.seed,
            failures=per_point - len(values), wall_time=elapsed / len(points),
            notes=list(notes), extra=exp.reference(params, config),
        ))
    logger.info("%s: %d points x %d trials in %.1fs", exp.name, len(points), per_point, elapsed)
    return records


# persistence -------------------------------------------------------------------------------


def dumps_jsonl(records: Iterable[EstimateRecord], timing: bool = False) -> str:
    return "".join(json.dumps(r.to_dict(timing), sort_keys=True) + "\n" for r in records)


def write_jsonl(records: Iterable[EstimateRecord], path: Path | str, timing: bool = False,
                append: bool = False) -> None:
    """Write records one JSON object per line; wall times only with ``timing``."""
    with open(path, "a" if append else "w") as f:
        f.write(dumps_jsonl(records, timing))


def read_jsonl(path: Path | str) -> list[EstimateRecord]:
    with open(path) as f:
        return [EstimateRecord.from_dict(json.loads(line)) for line in f if line.strip()]


def _plot_row(r: EstimateRecord, kind: str) -> dict[str, Any]:
    lo, hi = r.interval
    if kind == "decay":
        scale = next((r.params[k] for k in ("N", "R", "L") if k in r.params), "")
        return {"N": scale, "u": r.params.get("u", ""), "p_hat": r.estimate, "lo": lo,
                "hi": hi, "trials": r.trials}
    if kind == "capacity":
        return {"L": r.params.get("L", ""), "cap": r.estimate, "lo": lo, "hi": hi,
                "trials": r.trials, "exact": r.extra.get("exact", "")}
    return {"u": r.params.get("u", ""), "u_plus": r.extra.get("u_plus", ""),
            "rate": r.estimate, "lo": lo, "hi": hi, "bound": r.extra.get("bound", ""),
            "trials": r.trials}


def emit_plotdata(records: Sequence[EstimateRecord], kind: str,
                  out: TextIO | None = None) -> str:
    """Tidy CSV, one row per parameter point; header only for no records.

    Raises:
        ParameterError: If ``kind`` is not decay, capacity or tail
    """
    if kind not in PLOT_COLUMNS:
        raise ParameterError(f"unknown plot kind {kind!r}")
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=PLOT_COLUMNS[kind], lineterminator="\n")
    writer.writeheader()
    for r in records:
        writer.writerow(_plot_row(r, kind))
    text = buf.getvalue()
    if out is not None:
        out.write(text)
    return text


def read_plotdata(text: str) -> list[dict[str, float]]:
    """Parse CSV written by ``emit_plotdata`` back into numbers."""
    rows = []
    for row in csv.DictReader(io.StringIO(text)):
        rows.append({k: float(v) if v != "" else math.nan for k, v in row.items()})
    return rows


def verify_suite(level: str = "fast", only: Sequence[int] | None = None,
                 fixtures_path: Path | str | None = None, workers: int | None = None):
    """Run the acceptance criteria (see ``rilab.checks``)."""
    from rilab.checks import run_suite

    return run_suite(level, only=only, fixtures_path=fixtures_path, workers=workers)

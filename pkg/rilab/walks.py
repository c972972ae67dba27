"""Vectorized simple random walk on Z^d.

Live walkers advance together in chunks: a block of unit steps is drawn for
every walker, accumulated with ``np.cumsum`` and scanned for the first
stopping event. Finished walkers are dropped from the batch between chunks.

The continuous-time unit-rate walk is its discrete skeleton plus i.i.d.
Exp(1) holding times, which are only drawn where a caller needs occupation
time.
"""
from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from rilab.errors import ParameterError
from rilab.lattice import Box, SiteSet, unit_vectors

logger = logging.getLogger(__name__)

# Maps exit points (m, d) to (returned mask (m,), re-entry sites (m, d)).
Reentry = Callable[[np.ndarray, np.random.Generator], tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class WalkConfig:
    """Truncation policy for walks that should run to infinity.

    Attributes:
        kappa: A walk counts as escaped once its ℓ∞ distance from the target
            exceeds ``kappa * max(diam, 1)``
        max_steps: Hard cap on the number of steps of a single walk
        chunk: Steps drawn per vectorized block
        batch: Walkers advanced together
        reentry: Let escaped forward walks come back through the
            target's hitting probability instead of killing them
        return_correction: Remove later returns from MC escape estimates
    """

    kappa: float = 8.0
    max_steps: int = 10_000_000
    chunk: int = 64
    batch: int = 16_384
    reentry: bool = True
    return_correction: bool = True

    def __post_init__(self):
        if self.kappa < 2:
            raise ParameterError(f"kill radius factor must be at least 2, got {self.kappa}")
        if self.max_steps < 1 or self.chunk < 1 or self.batch < 1:
            raise ParameterError("max_steps, chunk and batch must be positive")

    def radius(self, target: Box) -> int:
        diam = max(target.side - 1, 1)
        return int(math.ceil(self.kappa * diam))

    def escape_box(self, target: Box) -> Box:
        return target.expand(self.radius(target))

    def bias_bound(self, d: int) -> float:
        """Order of the escape-probability bias from killing, (1/κ)^{d-2}."""
        return float(self.kappa ** (2 - d))


def step_block(positions: np.ndarray, length: int, rng: np.random.Generator) -> np.ndarray:
    """Positions after 1..length further steps, shape ``(n, length, d)``."""
    n, d = positions.shape
    choices = rng.integers(0, 2 * d, size=(n, length))
    steps = unit_vectors(d)[choices]
    return positions[:, None, :] + np.cumsum(steps, axis=1)


def first_true(flags: np.ndarray) -> np.ndarray:
    """Index of the first True per row, -1 when the row has none."""
    idx = flags.argmax(axis=1)
    idx[~flags.any(axis=1)] = -1
    return idx


@dataclass
class HitResult:
    """Outcome of walks run until they hit a target or escape.

    Attributes:
        hit: Walker entered the target before escaping
        points: Hit site, or the first site outside the escape box
        steps: Number of steps taken
        truncated: Walker reached ``max_steps`` first (counted as escaped)
    """

    hit: np.ndarray
    points: np.ndarray
    steps: np.ndarray
    truncated: np.ndarray


def first_hits(
    starts: np.ndarray,
    target: SiteSet,
    escape_box: Box,
    cfg: WalkConfig,
    rng: np.random.Generator,
) -> HitResult:
    """Run walks from ``starts`` until they enter ``target`` or leave ``escape_box``.

    Only positions after at least one step count, so a walk started inside
    the target measures the return time H̃.
    """
    starts = np.asarray(starts, dtype=np.int64).reshape(-1, target.d)
    n = len(starts)
    hit = np.zeros(n, dtype=bool)
    points = starts.copy()
    steps = np.zeros(n, dtype=np.int64)
    truncated = np.zeros(n, dtype=bool)

    for lo in range(0, n, cfg.batch):
        ids = np.arange(lo, min(n, lo + cfg.batch))
        pos = starts[ids]
        taken = 0
        while len(ids):
            block = step_block(pos, cfg.chunk, rng)
            entered = target.contains_array(block)
            left = ~escape_box.contains_array(block)
            idx = first_true(entered | left)
            done = idx >= 0
            rows = np.nonzero(done)[0]
            at = block[rows, idx[rows]]
            hit[ids[rows]] = entered[rows, idx[rows]]
            points[ids[rows]] = at
            steps[ids[rows]] = taken + idx[rows] + 1
            taken += cfg.chunk
            ids, pos = ids[~done], block[~done, -1]
            if taken >= cfg.max_steps and len(ids):
                truncated[ids] = True
                points[ids] = pos
                steps[ids] = taken
                logger.warning("%d walks truncated at %d steps", len(ids), taken)
                break
    return HitResult(hit=hit, points=points, steps=steps, truncated=truncated)


def paths_until_exit(
    starts: np.ndarray, domain: Box, cfg: WalkConfig, rng: np.random.Generator
) -> tuple[list[np.ndarray], np.ndarray]:
    """Full paths from each start up to and including the first site outside ``domain``.

    Returns the paths and a mask of those cut at ``cfg.max_steps`` while still
    inside ``domain``.
    """
    starts = np.asarray(starts, dtype=np.int64).reshape(-1, len(domain.lo))
    pieces: list[list[np.ndarray]] = [[s[None, :]] for s in starts]
    truncated = np.zeros(len(starts), dtype=bool)
    for lo in range(0, len(starts), cfg.batch):
        ids = np.arange(lo, min(len(starts), lo + cfg.batch))
        ids = ids[domain.contains_array(starts[ids])]
        pos = starts[ids]
        taken = 0
        while len(ids):
            block = step_block(pos, cfg.chunk, rng)
            idx = first_true(~domain.contains_array(block))
            for row, walker in enumerate(ids):
                stop = idx[row]
                pieces[walker].append(block[row] if stop < 0 else block[row, : stop + 1])
            keep = idx < 0
            ids, pos = ids[keep], block[keep, -1]
            taken += cfg.chunk
            if taken >= cfg.max_steps and len(ids):
                truncated[ids] = True
                logger.warning("%d excursions truncated at %d steps", len(ids), taken)
                break
    return [np.concatenate(p, axis=0) for p in pieces], truncated


@dataclass
class ForwardRecord:
    """Visits of forward walks to a coverage box.

    Attributes:
        walker: Walker id per recorded visit
        clock: Global step index per visit (re-entries jump the clock by 2)
        sites: Visited site per visit, shape ``(m, d)``
        truncated: Per-walker truncation flag
        reentries: Per-walker number of re-entries
    """

    walker: np.ndarray
    clock: np.ndarray
    sites: np.ndarray
    truncated: np.ndarray
    reentries: np.ndarray

    def split(self, n: int) -> list[tuple[np.ndarray, np.ndarray]]:
        """Per-walker ``(clock, sites)`` arrays in time order."""
        order = np.lexsort((self.clock, self.walker))
        walker, clock, sites = self.walker[order], self.clock[order], self.sites[order]
        bounds = np.searchsorted(walker, np.arange(n + 1))
        return [
            (clock[bounds[i]: bounds[i + 1]], sites[bounds[i]: bounds[i + 1]]) for i in range(n)
        ]


def forward_walks(
    starts: np.ndarray,
    coverage: Box,
    escape_box: Box,
    cfg: WalkConfig,
    rng: np.random.Generator,
    reentry: Reentry | None = None,
) -> ForwardRecord:
    """Forward walks from ``starts`` recording every visit inside ``coverage``.

    A walk stops when it leaves ``escape_box``; with a ``reentry`` callback it
    may instead restart inside the target, which skips only a stretch of the
    path lying outside ``coverage``.
    """
    starts = np.asarray(starts, dtype=np.int64).reshape(-1, len(coverage.lo))
    n, d = starts.shape
    truncated = np.zeros(n, dtype=bool)
    reentries = np.zeros(n, dtype=np.int64)
    walkers, clocks, sites = [], [], []

    def record(ids, clock, pts, mask):
        r, c = np.nonzero(mask)
        if len(r):
            walkers.append(ids[r])
            clocks.append(clock[r] + c)
            sites.append(pts[r, c])

    inside0 = coverage.contains_array(starts)
    record(np.arange(n), np.zeros(n, dtype=np.int64), starts[:, None, :], inside0[:, None])

    for lo in range(0, n, cfg.batch):
        ids = np.arange(lo, min(n, lo + cfg.batch))
        pos = starts[ids]
        clock = np.ones(len(ids), dtype=np.int64)
        taken = np.zeros(len(ids), dtype=np.int64)
        while len(ids):
            block = step_block(pos, cfg.chunk, rng)
            idx = first_true(~escape_box.contains_array(block))
            limit = np.where(idx < 0, cfg.chunk, idx)
            within = np.arange(cfg.chunk)[None, :] < limit[:, None]
            record(ids, clock, block, within & coverage.contains_array(block))
            clock += cfg.chunk
            taken += cfg.chunk
            alive = idx < 0
            pos = block[:, -1].copy()
            escaped = np.nonzero(~alive)[0]
            if len(escaped) and reentry is not None and cfg.reentry:
                back, new_sites = reentry(block[escaped, idx[escaped]], rng)
                rows = escaped[back]
                if len(rows):
                    pos[rows] = new_sites[back]
                    clock[rows] = clock[rows] - cfg.chunk + idx[rows] + 2
                    reentries[ids[rows]] += 1
                    record(ids[rows], clock[rows], new_sites[back][:, None, :],
                           coverage.contains_array(new_sites[back])[:, None])
                    clock[rows] += 1
                    alive[rows] = True
            over = alive & (taken >= cfg.max_steps)
            if over.any():
                truncated[ids[over]] = True
                alive &= ~over
            ids, pos, clock, taken = ids[alive], pos[alive], clock[alive], taken[alive]
    if truncated.any():
        logger.warning("%d forward walks truncated at %d steps", int(truncated.sum()),
                       cfg.max_steps)
    if walkers:
        return ForwardRecord(
            walker=np.concatenate(walkers), clock=np.concatenate(clocks),
            sites=np.concatenate(sites), truncated=truncated, reentries=reentries,
        )
    return ForwardRecord(
        walker=np.zeros(0, dtype=np.int64), clock=np.zeros(0, dtype=np.int64),
        sites=np.zeros((0, d), dtype=np.int64), truncated=truncated, reentries=reentries,
    )


def additive_functional(
    starts: np.ndarray,
    weight: np.ndarray,
    window: Box,
    escape_box: Box,
    cfg: WalkConfig,
    rng: np.random.Generator,
    reentry: Reentry | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """∫₀^∞ w(X_s) ds per walker, as Σ over visits of w(site)·Exp(1).

    ``weight`` is laid out over ``window``; sites outside it weigh zero.

    Returns:
        Tuple of per-walker totals and per-walker truncation flags
    """
    starts = np.asarray(starts, dtype=np.int64).reshape(-1, len(window.lo))
    n = len(starts)
    totals = np.zeros(n)
    truncated = np.zeros(n, dtype=bool)
    lo_corner = np.asarray(window.lo)

    def weigh(pts: np.ndarray) -> np.ndarray:
        out = np.zeros(pts.shape[:-1])
        inside = window.contains_array(pts)
        if inside.any():
            out[inside] = weight[tuple((pts[inside] - lo_corner).T)]
        return out

    def accrue(ids: np.ndarray, w: np.ndarray):
        hot = w > 0
        if hot.any():
            draws = np.zeros_like(w)
            draws[hot] = w[hot] * rng.exponential(size=int(hot.sum()))
            np.add.at(totals, ids, draws.reshape(len(ids), -1).sum(axis=1))

    accrue(np.arange(n), weigh(starts)[:, None])
    for lo in range(0, n, cfg.batch):
        ids = np.arange(lo, min(n, lo + cfg.batch))
        pos = starts[ids]
        taken = np.zeros(len(ids), dtype=np.int64)
        while len(ids):
            block = step_block(pos, cfg.chunk, rng)
            idx = first_true(~escape_box.contains_array(block))
            limit = np.where(idx < 0, cfg.chunk, idx)
            w = weigh(block)
            w[np.arange(cfg.chunk)[None, :] >= limit[:, None]] = 0.0
            accrue(ids, w)
            taken += cfg.chunk
            alive = idx < 0
            pos = block[:, -1].copy()
            escaped = np.nonzero(~alive)[0]
            if len(escaped) and reentry is not None and cfg.reentry:
                back, new_sites = reentry(block[escaped, idx[escaped]], rng)
                rows = escaped[back]
                if len(rows):
                    pos[rows] = new_sites[back]
                    accrue(ids[rows], weigh(new_sites[back])[:, None])
                    alive[rows] = True
            over = alive & (taken >= cfg.max_steps)
            if over.any():
                truncated[ids[over]] = True
                alive &= ~over
            ids, pos, taken = ids[alive], pos[alive], taken[alive]
    return totals, truncated

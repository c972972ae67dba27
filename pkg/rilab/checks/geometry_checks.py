"""Interfaces, coarse-graining, exploration and gluing: criteria 12 to 15."""
from __future__ import annotations

import numpy as np

from rilab.checks.base import SuiteContext, criterion
from rilab.coarse import (
    build_shells,
    check_coarsening,
    extract_coarsening,
    family_stats,
    random_crossing,
)
from rilab.events import box_measure, gluing_check
from rilab.explore import (
    ExploreGeometry,
    GoodPointContext,
    encounter_times,
    many_encounters,
    replay_check,
    run_exploration,
)
from rilab.interfaces import blocking_interfaces, verify_interface_properties
from rilab.interlacements import VacantField, sample_process, vacant_field
from rilab.lattice import Box, SiteSet
from rilab.walks import WalkConfig

QUICK_WALKS = WalkConfig(kappa=2)


def _shell(r: int, window: Box) -> np.ndarray:
    """∂B_r as a mask over ``window``."""
    return Box.ball(r, window.d).mask_in(window) & ~Box.ball(r - 1, window.d).mask_in(window)


def _random_sigma(V: Box, rng: np.random.Generator) -> SiteSet:
    mask = np.zeros(V.shape, dtype=bool)
    for r in range(2, V.side // 2):
        if rng.random() < 0.4:
            mask |= _shell(r, V) & (rng.random(V.shape) >= rng.uniform(0.0, 0.3))
    mask |= rng.random(V.shape) < rng.uniform(0.0, 0.25)
    mask[Box.ball(0, V.d).mask_in(V)] = False
    return SiteSet(V, mask)


def _hand_instances() -> list[tuple[str, Box, SiteSet, int]]:
    """(name, V, Σ, expected number of layers)."""
    V = Box.ball(10, 3)
    touching = SiteSet(V, _shell(1, V) | _shell(2, V))
    gapped = SiteSet(V, _shell(1, V) | _shell(7, V))
    return [("touching shells", V, touching, 1), ("gapped shells", V, gapped, 2)]


@criterion(12, "blocking interfaces")
def check_interfaces(ctx: SuiteContext):
    rng = ctx.rng(12)
    n = ctx.size(50, 200)
    V = Box.ball(8, 3)
    U = SiteSet.from_points([(0, 0, 0)], window=V)
    passed = 0
    for _ in range(n):
        sigma = _random_sigma(V, rng)
        passed += verify_interface_properties(blocking_interfaces(U, V, sigma), U, V,
                                              sigma).passed
    hand = {}
    for name, HV, sigma, layers in _hand_instances():
        HU = SiteSet.from_points([(0, 0, 0)], window=HV)
        result = blocking_interfaces(HU, HV, sigma)
        hand[name] = (verify_interface_properties(result, HU, HV, sigma).passed
                      and len(result) == layers)
    ok = passed == n and all(hand.values())
    return ok, f"{passed}/{n} random instances", {"random": passed, "hand": hand}


@criterion(13, "coarse-graining")
def check_coarse(ctx: SuiteContext):
    rng = ctx.rng(13)
    n = ctx.size(20, 100)
    shells = build_shells(26_000, 100, 5)
    a = ctx.fixture("admissible_a")
    stats = family_stats(shells, ctx.fixture("gamma_c"))
    passed = wide = 0
    for _ in range(n):
        gamma = random_crossing(shells.N, rng)
        report = check_coarsening(extract_coarsening(gamma, shells), shells, gamma, a=a)
        passed += report.passed and report.n == 9
        wide += report.separation_10kl
    ok = passed == n and stats.within_gamma
    metrics = {"passed": passed, "separation_10kl": wide, "log_family": stats.log_family,
               "gamma": stats.gamma}
    return ok, f"{passed}/{n} coarsenings admissible", metrics


def _start_site(V: VacantField, geometry: ExploreGeometry,
                rng: np.random.Generator) -> tuple[int, ...] | None:
    Ct = geometry.boxes.C_tilde
    face = Ct.mask_in(V.window) & ~Ct.expand(-1).mask_in(V.window)
    candidates = np.argwhere(face & V.occupancy)
    if not len(candidates):
        return None
    pick = candidates[rng.integers(len(candidates))] + np.asarray(V.window.lo)
    return tuple(int(c) for c in pick)


@criterion(14, "exploration invariants")
def check_exploration(ctx: SuiteContext):
    rng = ctx.rng(14)
    n = ctx.size(10, 50)
    geometry = ExploreGeometry(z=(0, 0, 0), N=7, L=1, L0=2, y=(6, 6, 6))
    cells = geometry.cells()
    measure = box_measure(geometry.window)
    runs = invariants = encounters = replays = many = 0
    while runs < n:
        s = sample_process(measure.base, 2.0, QUICK_WALKS, rng, measure=measure)
        V = vacant_field(s, 2.0)
        x = _start_site(V, geometry, rng)
        if x is None:
            continue
        runs += 1
        good = GoodPointContext.planted(geometry, [y for y in cells if rng.random() < 0.5])
        state = run_exploration(x, V, geometry, good)
        invariants += state.invariants_ok
        encounters += encounter_times(state, good).passed
        replays += replay_check(state, rng).unchanged
        many += many_encounters(state, 1.0, len(cells), c73=ctx.fixture("c73"))
    ok = invariants == n and encounters == n and replays == n
    metrics = {"runs": n, "invariants": invariants, "encounters": encounters,
               "replays": replays, "many_encounters": many}
    detail = f"{invariants}/{n} invariants, {encounters}/{n} encounters, {replays}/{n} replays"
    return ok, detail, metrics


@criterion(15, "gluing inclusion")
def check_gluing(ctx: SuiteContext):
    rng = ctx.rng(15)
    wanted = ctx.size(20, 100)
    L, u = 10, 0.01
    measure = box_measure(Box.ball(2 * L + 4, 3))
    conditioned = glued = attempts = slu_free = 0
    while conditioned < wanted and attempts < 10 * wanted:
        attempts += 1
        s = sample_process(measure.base, u, QUICK_WALKS, rng, measure=measure)
        result = gluing_check(s, L, u)
        if result.verdict:
            conditioned += 1
            glued += result.diagnostics["slu"]
        else:
            slu_free += result.diagnostics["slu"]
    ok = conditioned == wanted and glued == conditioned
    metrics = {"attempts": attempts, "conditioned": conditioned, "slu": glued,
               "slu_unconditioned": slu_free}
    return ok, f"SLU on {glued}/{conditioned} configurations with all anchor events", metrics

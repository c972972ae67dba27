"""Fixture constants and potential theory: criteria 0 to 3."""
from __future__ import annotations

import math

from rilab.checks.base import SuiteContext, criterion
from rilab.coarse import build_shells, family_stats, h_scale
from rilab.lattice import Box, SiteSet
from rilab.potential import (
    box_capacity,
    box_capacity_bounds,
    capacity,
    green_function,
    sweeping_identity,
)
from rilab.walks import WalkConfig

FIXTURE_RTOL = 1e-5
SWEEP_RTOL = 1e-8


@criterion(0, "fixtures")
def check_fixtures(ctx: SuiteContext):
    derived = {
        "green_origin": green_function((0, 0, 0)),
        "cap_origin": box_capacity(1, 3),
        "c73": 1 / (2 * 70**3),
    }
    bad = [name for name, value in derived.items()
           if not math.isclose(ctx.fixture(name), value, rel_tol=FIXTURE_RTOL)]

    shells = build_shells(26_000, 100, 5)
    if not family_stats(shells, ctx.fixture("gamma_c")).within_gamma:
        bad.append("gamma_c")
    a = ctx.fixture("admissible_a")
    scale = shells.N / h_scale(shells.K * shells.L, shells.d)
    if not (0 < a <= 1 and a * scale <= shells.n <= scale):
        bad.append("admissible_a")
    metrics = {name: value for name, value in derived.items()}
    if bad:
        return False, f"fixture drifted: {', '.join(bad)}", metrics
    return True, "", metrics


@criterion(1, "sweeping identity")
def check_sweeping(ctx: SuiteContext):
    r = ctx.size(20, 40)
    U = SiteSet.from_box(Box.ball(r, 3))
    pairs = [(0, 1), (1, 3)]
    errors = {}
    for inner, outer in pairs:
        K = SiteSet.from_box(Box.ball(inner, 3), U.window)
        K_prime = SiteSet.from_box(Box.ball(outer, 3), U.window)
        errors[f"B{inner}_in_B{outer}"] = sweeping_identity(K, K_prime, U).relative_error
    worst = max(errors.values())
    return worst < SWEEP_RTOL, f"largest relative error {worst:.2e}", errors


@criterion(2, "capacity of a point")
def check_point_capacity(ctx: SuiteContext):
    n = ctx.size(200_000, 1_000_000)
    oracle = ctx.fixture("cap_origin")
    K = SiteSet.from_points([(0, 0, 0)])
    estimate = capacity(K, mode="mc", rng=ctx.rng(2), n=n, cfg=WalkConfig(kappa=8))
    rel = abs(estimate - oracle) / oracle
    return rel < 0.01, f"mc {estimate:.5f} against {oracle:.5f}", {"estimate": estimate,
                                                                   "relative_error": rel}


@criterion(3, "capacity scaling")
def check_capacity_scaling(ctx: SuiteContext):
    sides = range(1, ctx.size(8, 16) + 1)
    caps = [box_capacity(side, 3) for side in sides]
    lo, hi = box_capacity_bounds(1, 3)
    ratios = [c / side for c, side in zip(caps, sides, strict=True)]
    in_band = all(lo <= r <= hi for r in ratios)
    monotone = all(b >= a for a, b in zip(caps, caps[1:]))
    detail = "" if in_band and monotone else (
        "ratio out of band" if not in_band else "capacity decreased")
    return in_band and monotone, detail, {"cap_over_L": ratios}

"""Soft-local-time coupling: criterion 11."""
from __future__ import annotations

from rilab.checks.base import SuiteContext, criterion
from rilab.coupling import counter_event, entrance_kernel_for, entrance_mixing_stat, slt_couple
from rilab.lattice import Box, SiteSet

COUNTER_FAILURE_MAX = 0.05


@criterion(11, "coupling")
def check_coupling(ctx: SuiteContext):
    rng = ctx.rng(11)
    trials = ctx.size(100, 500)
    kernel = entrance_kernel_for(3, 10, 3, k_min=10)
    conditioned = included = dominated = 0
    for _ in range(trials):
        record = slt_couple(3, 10, m=100, rng=rng, eps=0.3, m0=20, kernel=kernel)
        dominated += record.domination_ok
        if record.counter:
            conditioned += 1
            included += record.incl
    incl_ok = included == conditioned

    counters = ctx.size(400, 2_000)
    failures = sum(not counter_event(0.2, 200, 2_000, rng) for _ in range(counters))
    rate = failures / counters

    A = SiteSet.from_box(Box.ball(1, 3))
    devs = [entrance_mixing_stat(A, A, K, 1, (K + 1, 0, 0)).max_dev for K in (10, 20, 40)]
    mixing_ok = all(b < a for a, b in zip(devs, devs[1:]))

    metrics = {"conditioned": conditioned, "included": included, "dominated": dominated,
               "counter_failure_rate": rate, "mixing_max_dev": devs}
    ok = incl_ok and rate < COUNTER_FAILURE_MAX and mixing_ok
    detail = (f"Incl on {included}/{conditioned} counter events, counter failures {rate:.3f}, "
              f"mixing {', '.join(f'{d:.2e}' for d in devs)}")
    return ok, detail, metrics

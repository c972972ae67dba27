"""Harmonic observables: criteria 6, 7 and 8."""
from __future__ import annotations

from rilab.checks.base import SuiteContext, criterion
from rilab.coarse import line_coarsening
from rilab.lattice import Box, SiteSet
from rilab.observables import kac_test, laplace_check, tail_check, weight_V

PVALUE_MIN = 0.01


@criterion(6, "kac identity")
def check_kac(ctx: SuiteContext):
    n = ctx.size(2_000, 10_000)
    rng = ctx.rng(6)
    metrics = {}
    for name, K in (("point", SiteSet.from_points([(0, 0, 0)])),
                    ("B3", SiteSet.from_box(Box.ball(3, 3)))):
        report = kac_test(K, n, rng)
        metrics[name] = {"pvalue": report.pvalue, "mean": report.mean,
                         "truncated": report.truncated}
    ok = all(m["pvalue"] > PVALUE_MIN for m in metrics.values())
    return ok, "", metrics


@criterion(7, "laplace transform")
def check_laplace(ctx: SuiteContext):
    n = ctx.size(20_000, 100_000)
    report = laplace_check(SiteSet.from_box(Box.ball(2, 3)), 1.0, 0.3, n, ctx.rng(7))
    return abs(report.z) < 3, f"z = {report.z:.2f}", {
        "empirical": report.empirical, "closed_form": report.closed_form, "z": report.z}


@criterion(8, "deviation bounds")
def check_tails(ctx: SuiteContext):
    n = ctx.size(2_000, 10_000)
    W = weight_V(line_coarsening(2, K=10, L=2))
    report = tail_check(W, u=1.0, u_plus=2.6, u_minus=0.35, eps=0.3, n=n, rng=ctx.rng(8))
    metrics = {"upper_rate": report.upper_rate, "upper_bound": report.upper_bound,
               "lower_rate": report.lower_rate, "lower_bound": report.lower_bound,
               "deviation": report.deviation, "cap": W.cap}
    return report.passed, "", metrics

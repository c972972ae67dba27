"""The Poisson cloud, excursions and monotonicity: criteria 4, 5, 9 and 10."""
from __future__ import annotations

import math
from collections import Counter

import numpy as np
from scipy import stats

from rilab.checks.base import SuiteContext, criterion
from rilab.config import ExperimentConfig
from rilab.events import EventSpec, box_measure, eval_boosted
from rilab.excursions import Packet, PacketFamily, decompose, flatten_packet, ordered_excursions
from rilab.harness import run_experiment
from rilab.interlacements import noise_apply, noise_field, sample_process, vacant_field
from rilab.lattice import Box
from rilab.walks import WalkConfig

PVALUE_MIN = 0.01
QUICK_WALKS = WalkConfig(kappa=2)


def _poisson_chi2(counts: np.ndarray, lam: float) -> float:
    """χ² p-value of counts against Poisson(lam), merging bins under 5 expected."""
    n = len(counts)
    top = int(counts.max())
    expected = stats.poisson.pmf(np.arange(top + 1), lam) * n
    expected[-1] += stats.poisson.sf(top, lam) * n
    observed = np.bincount(counts, minlength=top + 1).astype(float)
    bins_o, bins_e, acc_o, acc_e = [], [], 0.0, 0.0
    for o, e in zip(observed, expected, strict=True):
        acc_o, acc_e = acc_o + o, acc_e + e
        if acc_e >= 5:
            bins_o.append(acc_o)
            bins_e.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e and bins_e:
        bins_o[-1] += acc_o
        bins_e[-1] += acc_e
    if len(bins_e) < 2:
        return 1.0
    return float(stats.chisquare(bins_o, bins_e).pvalue)


@criterion(4, "poisson structure")
def check_poisson(ctx: SuiteContext):
    n = ctx.size(1_000, 10_000)
    rng = ctx.rng(4)
    measure = box_measure(Box.ball(5, 3))
    lam = measure.total
    counts = np.empty(n, dtype=np.int64)
    labels = []
    for i in range(n):
        s = sample_process(measure.base, 1.0, QUICK_WALKS, rng, measure=measure)
        counts[i] = s.count
        labels.append(s.labels)
    mean = float(counts.mean())
    stderr = float(counts.std(ddof=1) / math.sqrt(n))
    chi2 = _poisson_chi2(counts, lam)
    ks = float(stats.kstest(np.concatenate(labels), "uniform").pvalue)
    ok = abs(mean - lam) <= 3 * stderr and chi2 > PVALUE_MIN and ks > PVALUE_MIN
    metrics = {"mean": mean, "cap": lam, "stderr": stderr, "chi2_p": chi2, "labels_ks_p": ks}
    return ok, f"mean {mean:.3f} vs cap {lam:.3f}, chi2 p={chi2:.3f}, KS p={ks:.3f}", metrics


@criterion(5, "void probability")
def check_void(ctx: SuiteContext):
    config = ExperimentConfig(experiment="void", trials=ctx.size(10_000, 100_000),
                              levels=(0.5, 1.0, 2.0), kappa=2.0, seed=5)
    records = run_experiment(config, workers=ctx.workers)
    metrics, ok = {}, True
    for r in records:
        exact = r.extra["exact"]
        stderr = math.sqrt(exact * (1 - exact) / r.trials)
        metrics[f"u={r.params['u']:g}"] = {"estimate": r.estimate, "exact": exact}
        ok &= abs(r.estimate - exact) <= 3 * stderr
    return ok, "", metrics


@criterion(9, "excursion identities")
def check_excursions(ctx: SuiteContext):
    wanted = ctx.size(200, 1_000)
    rng = ctx.rng(9)
    D, U = Box.ball(2, 3), Box.ball(8, 3)
    D_fine, U_fine = Box.ball(1, 3), Box.ball(5, 3)
    measure = box_measure(D)
    coverage = U.expand(2)
    seen = ranges_ok = nested_ok = 0
    while seen < wanted:
        s = sample_process(measure.base, 1.0, QUICK_WALKS, rng, measure=measure,
                           coverage=coverage)
        for i, t in enumerate(s.trajectories):
            seen += 1
            coarse = decompose(t, D, U, parent=i)
            visited = {tuple(p) for p in t.sites[D.contains_array(t.sites)].tolist()}
            covered = {tuple(p) for e in coarse
                       for p in e.path[D.contains_array(e.path)].tolist()}
            ranges_ok += visited == covered
            flat = flatten_packet(Packet(tuple(coarse), tuple(range(1, len(coarse) + 1))),
                                  D_fine, U_fine)
            direct = decompose(t, D_fine, U_fine, parent=i)
            nested_ok += flat.multiset == Counter(e.key for e in direct)
    ok = ranges_ok == seen and nested_ok == seen
    return ok, f"{ranges_ok}/{seen} ranges, {nested_ok}/{seen} flattenings", {
        "trajectories": seen, "ranges": ranges_ok, "nested": nested_ok}


def _boosted_pair(spec: EventSpec, base: Packet, nu: float) -> tuple[bool, bool]:
    small = eval_boosted(spec, base, PacketFamily(len(base), "near_interval", nu))
    large = eval_boosted(spec, base, PacketFamily(len(base), "near_interval", nu + 2))
    return small.verdict, large.verdict


@criterion(10, "pathwise monotonicity")
def check_monotonicity(ctx: SuiteContext):
    n = ctx.size(100, 1_000)
    rng = ctx.rng(10)
    window = Box.ball(4, 3)
    measure = box_measure(window)
    nested = noised = boosted = 0
    spec = EventSpec("lu", z=(0, 0, 0), L0=1)
    packet_measure = box_measure(Box.ball(3, 3))
    for _ in range(n):
        s = sample_process(measure.base, 2.0, QUICK_WALKS, rng, measure=measure)
        high, low = vacant_field(s, 2.0), vacant_field(s, 1.0)
        nested += high.vacant.issubset(low.vacant)

        noise = noise_field(window, rng)
        delta = float(rng.uniform(0.0, 0.5))
        noised += (noise_apply(high, delta, noise).vacant.issubset(noise_apply(low, delta,
                                                                                noise).vacant)
                   and noise_apply(low, delta, noise).vacant.issubset(low.vacant))

        p = sample_process(packet_measure.base, 0.5, QUICK_WALKS, rng, measure=packet_measure,
                           coverage=Box.ball(14, 3))
        base = ordered_excursions(p, (0, 0, 0), 1, 10, 0.5, k_min=10).prefix(8)
        small, large = _boosted_pair(spec, base, float(rng.integers(0, 3)))
        boosted += small or not large
    ok = nested == n and noised == n and boosted == n
    return ok, f"{nested}/{n} nested, {noised}/{n} noised, {boosted}/{n} boosted", {
        "instances": n, "nested": nested, "noised": noised, "boosted": boosted}

"""The observable h^u(𝒞) and its exponential identities.

h^u = ⟨μ_{Σ,u}, ∫₀^∞ V(X_s) ds⟩ is sampled in batches: the number of
trajectories entering Σ is Poisson(u·cap(Σ)) per trial, all entrance
points are drawn from ē_Σ at once and the additive functional of every
walk is accumulated with Exp(1) holding times by the walk engine.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import stats

from rilab import walks
from rilab.coarse import Coarsening
from rilab.errors import ParameterError
from rilab.events import box_measure
from rilab.lattice import Box, SiteSet
from rilab.potential import EquilibriumMeasure, equilibrium_measure
from rilab.walks import WalkConfig

logger = logging.getLogger(__name__)

LAPLACE_A_MAX = 0.4

Weight = Literal["V", "e"]


@dataclass(frozen=True, eq=False)
class HarmonicWeight:
    """V(x) = Σ_{D ∈ 𝒞} e_Σ(D)·ē_D(x) next to e_Σ, both over Σ's window.

    Attributes:
        sigma: Σ(𝒞)
        measure: e_Σ
        values: V laid out over ``sigma.window``
        e_sigma: e_Σ laid out over ``sigma.window``
        boxes: The boxes D making up Σ
    """

    sigma: SiteSet
    measure: EquilibriumMeasure
    values: np.ndarray
    e_sigma: np.ndarray
    boxes: tuple[Box, ...]

    @property
    def window(self) -> Box:
        return self.sigma.window

    @property
    def cap(self) -> float:
        return self.measure.total

    @property
    def deviation(self) -> float:
        """max |V/e_Σ − 1| over the support of e_Σ."""
        support = self.e_sigma > 0
        if not support.any():
            return 0.0
        return float(np.abs(self.values[support] / self.e_sigma[support] - 1).max())

    def same_support(self) -> bool:
        return bool(np.array_equal(self.values > 0, self.e_sigma > 0))

    def sandwiched(self, eps: float) -> bool:
        """(1 − ε)e_Σ ≤ V ≤ (1 + ε)e_Σ sitewise."""
        return bool(((1 - eps) * self.e_sigma <= self.values).all()
                    and (self.values <= (1 + eps) * self.e_sigma).all())

    def table(self, weight: Weight) -> np.ndarray:
        if weight == "V":
            return self.values
        if weight == "e":
            return self.e_sigma
        raise ParameterError(f"unknown weight {weight!r}")

    def value_at(self, x) -> float:
        if not self.window.contains(x):
            return 0.0
        idx = tuple(int(c) - l for c, l in zip(x, self.window.lo, strict=True))
        return float(self.values[idx])


def _normalized_box(box: Box) -> tuple[np.ndarray, np.ndarray]:
    """Sites of a box with ē_box, translated from the box at the origin."""
    origin = Box((0,) * box.d, box.shape)
    m = box_measure(origin)
    return m.base.coords + np.asarray(box.lo), m.normalized


def weight_V(C: Coarsening, mode: str = "exact", rng: np.random.Generator | None = None,
             n: int = 1000) -> HarmonicWeight:
    """Build V for a coarsening.

    Args:
        C: The coarsening whose boxes D_z make up Σ
        mode: How e_Σ is computed ("exact" or "mc")
        rng: Generator for mc mode
        n: Escape trials per boundary site in mc mode
    """
    sigma = C.sigma(margin=1)
    measure = equilibrium_measure(sigma, mode=mode, rng=rng, n=n)
    window = sigma.window
    e_arr = measure.as_array(window)
    values = np.zeros(window.shape)
    boxes = tuple(C.boxes())
    lo = np.asarray(window.lo)
    for D in boxes:
        sites, ebar = _normalized_box(D)
        values[tuple((sites - lo).T)] += measure.mass_in(D) * ebar
    W = HarmonicWeight(sigma, measure, values, e_arr, boxes)
    logger.debug("V over %d boxes: cap(Σ)=%.4f, max deviation %.3e", len(boxes), W.cap,
                 W.deviation)
    return W


def _integrals(measure: EquilibriumMeasure, table: np.ndarray, window: Box, count: int,
               cfg: WalkConfig, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    """∫₀^∞ w(X_s) ds for ``count`` walks started from ē."""
    if count == 0:
        return np.zeros(0), 0
    starts = measure.sample(rng, size=count)
    escape = cfg.escape_box(measure.base.bounding_box())
    totals, truncated = walks.additive_functional(starts, table, window, escape, cfg, rng,
                                                  reentry=measure.reentry)
    if truncated.any():
        logger.warning("%d of %d additive functionals truncated", int(truncated.sum()), count)
    return totals, int(truncated.sum())


def _poisson_functional(measure: EquilibriumMeasure, table: np.ndarray, window: Box, u: float,
                        trials: int, cfg: WalkConfig,
                        rng: np.random.Generator) -> tuple[np.ndarray, int]:
    """⟨μ_{K,u}, ∫ w(X_s) ds⟩ for ``trials`` independent clouds."""
    counts = rng.poisson(u * measure.total, size=trials)
    values, truncated = _integrals(measure, table, window, int(counts.sum()), cfg, rng)
    owner = np.repeat(np.arange(trials), counts)
    return np.bincount(owner, weights=values, minlength=trials), truncated


@dataclass
class HSample:
    """Draws of h^u (one per trial)."""

    u: float
    values: np.ndarray
    truncated: int = 0

    @property
    def mean(self) -> float:
        return float(self.values.mean()) if len(self.values) else math.nan

    @property
    def stderr(self) -> float:
        n = len(self.values)
        return float(self.values.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan


def sample_h(W: HarmonicWeight, u: float, cfg: WalkConfig | None = None,
             rng: np.random.Generator | None = None, trials: int = 1,
             weight: Weight = "V") -> HSample:
    """Sample h^u(𝒞) ``trials`` times (``weight="e"`` integrates e_Σ instead of V)."""
    if u < 0:
        raise ParameterError(f"level must be nonnegative, got {u}")
    if trials < 1:
        raise ParameterError(f"need at least one trial, got {trials}")
    if u == 0:
        return HSample(u, np.zeros(trials))
    cfg = cfg or WalkConfig()
    rng = rng if rng is not None else np.random.default_rng()
    values, truncated = _poisson_functional(W.measure, W.table(weight), W.window, u, trials,
                                            cfg, rng)
    return HSample(u, values, truncated)


@dataclass
class KacReport:
    """∫₀^∞ e_K(X_s) ds under P_{ē_K} against Exp(1)."""

    statistic: float
    pvalue: float
    mean: float
    n: int
    truncated: int

    @property
    def mean_ok(self) -> bool:
        return abs(self.mean - 1) <= 3 / math.sqrt(self.n)


def kac_test(K: SiteSet, n: int, rng: np.random.Generator, cfg: WalkConfig | None = None,
             measure: EquilibriumMeasure | None = None) -> KacReport:
    """Kolmogorov-Smirnov distance of the e_K-integral to Exp(1)."""
    if n < 1:
        raise ParameterError(f"need at least one sample, got {n}")
    cfg = cfg or WalkConfig()
    measure = measure or equilibrium_measure(K)
    window = K.window
    samples, truncated = _integrals(measure, measure.as_array(window), window, n, cfg, rng)
    result = stats.kstest(samples, "expon")
    return KacReport(float(result.statistic), float(result.pvalue), float(samples.mean()), n,
                     truncated)


@dataclass
class LaplaceReport:
    """Empirical E[exp(a⟨μ_{Σ,u}, ∫e_Σ⟩)] next to exp(u·a·cap/(1 − a))."""

    a: float
    empirical: float
    closed_form: float
    stderr: float
    n: int

    @property
    def z(self) -> float:
        if self.stderr == 0:
            return 0.0
        return (self.empirical - self.closed_form) / self.stderr


def laplace_closed_form(u: float, a: float, cap: float) -> float:
    if a >= 1:
        raise ParameterError(f"the transform is finite only for a < 1, got {a}")
    return math.exp(u * a * cap / (1 - a))


def laplace_check(K: SiteSet, u: float, a: float, n: int, rng: np.random.Generator,
                  cfg: WalkConfig | None = None,
                  measure: EquilibriumMeasure | None = None) -> LaplaceReport:
    """Monte Carlo check of the closed-form Laplace transform.

    Raises:
        ParameterError: If a > 0.4 (the estimator's variance needs 2a < 1)
    """
    if a > LAPLACE_A_MAX:
        raise ParameterError(f"a must be at most {LAPLACE_A_MAX}, got {a}")
    if u <= 0 or n < 2:
        raise ParameterError("need u > 0 and at least two trials")
    cfg = cfg or WalkConfig()
    measure = measure or equilibrium_measure(K)
    closed = laplace_closed_form(u, a, measure.total)
    if a == 0:
        return LaplaceReport(a, 1.0, closed, 0.0, n)
    values, _ = _poisson_functional(measure, measure.as_array(K.window), K.window, u, n, cfg,
                                    rng)
    terms = np.exp(a * values)
    return LaplaceReport(a, float(terms.mean()), closed,
                         float(terms.std(ddof=1) / math.sqrt(n)), n)


def _check_window(u: float, u_plus: float | None, u_minus: float | None, eps: float) -> None:
    if not 0 < eps < 1:
        raise ParameterError(f"eps must lie in (0, 1), got {eps}")
    if u_plus is not None and not u < u_plus / (1 + eps):
        raise ParameterError(f"need u < u+/(1+eps), got u={u}, u+={u_plus}, eps={eps}")
    if u_minus is not None and not 0 < u_minus / (1 - eps) < u:
        raise ParameterError(f"need 0 < u-/(1-eps) < u, got u={u}, u-={u_minus}, eps={eps}")


def upper_tail_bound(u: float, u_plus: float, eps: float, cap: float) -> float:
    """Bound on P[h^u ≥ u₊·cap(Σ)]."""
    _check_window(u, u_plus, None, eps)
    return math.exp(-((math.sqrt(u_plus / (1 + eps)) - math.sqrt(u)) ** 2) * cap)


def lower_tail_bound(u: float, u_minus: float, eps: float, cap: float) -> float:
    """Bound on P[h^u ≤ u₋·cap(Σ)]."""
    _check_window(u, None, u_minus, eps)
    return math.exp(-((math.sqrt(u) - math.sqrt(u_minus / (1 - eps))) ** 2) * cap)


@dataclass
class TailReport:
    upper_rate: float
    lower_rate: float
    upper_bound: float
    lower_bound: float
    slack: float
    n: int
    deviation: float

    @property
    def passed(self) -> bool:
        return (self.upper_rate <= self.slack * self.upper_bound
                and self.lower_rate <= self.slack * self.lower_bound)


def tail_check(W: HarmonicWeight, u: float, u_plus: float, u_minus: float, eps: float,
               n: int, rng: np.random.Generator, cfg: WalkConfig | None = None,
               slack: float = 3.0) -> TailReport:
    """Empirical deviation rates of h^u against the two exponential bounds."""
    _check_window(u, u_plus, u_minus, eps)
    h = sample_h(W, u, cfg, rng, trials=n)
    cap = W.cap
    report = TailReport(
        upper_rate=float((h.values >= u_plus * cap).mean()),
        lower_rate=float((h.values <= u_minus * cap).mean()),
        upper_bound=upper_tail_bound(u, u_plus, eps, cap),
        lower_bound=lower_tail_bound(u, u_minus, eps, cap),
        slack=slack, n=n, deviation=W.deviation,
    )
    if W.deviation > eps:
        logger.warning("V deviates from e_Σ by %.3f > eps = %.3f", W.deviation, eps)
    return report


def additivity_pvalue(W: HarmonicWeight, u: float, n: int, rng: np.random.Generator,
                      cfg: WalkConfig | None = None) -> float:
    """Two-sample KS p-value of h^u against h^{u/2} + an independent copy."""
    whole = sample_h(W, u, cfg, rng, trials=n).values
    halves = sample_h(W, u / 2, cfg, rng, trials=2 * n).values
    return float(stats.ks_2samp(whole, halves[:n] + halves[n:]).pvalue)

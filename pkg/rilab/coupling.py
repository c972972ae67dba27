"""Soft-local-time coupling of true excursions with i.i.d. excursions.

One Poisson point process on ∂D × R₊ (unit intensity per site) drives both
sequences. The i.i.d. sequence Z̃ takes the points in increasing order of
v/ē_D(y); the true sequence Z is a Markov chain on entrance sites with kernel

    k(x, ·) = P_x[H_D < ∞, X_{H_D} = ·] + P_x[H_D = ∞]·ē_D(·)

from the exit point x of the previous excursion, realized by the soft local
time ledger G. Every point carries one excursion path, shared by both sides.
"""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg as la

from rilab import walks
from rilab.errors import CapabilityError, GeometryError, ParameterError
from rilab.excursions import Excursion, Packet
from rilab.lattice import Box, SiteSet, ball, box_family, inner_boundary
from rilab.potential import (
    DENSE_LIMIT,
    EquilibriumMeasure,
    entrance_kernel,
    equilibrium_measure,
    green_matrix,
)
from rilab.walks import WalkConfig

logger = logging.getLogger(__name__)

DEFAULT_EPS = 0.3
DEFAULT_M0 = 20
DEFAULT_HORIZON = 100


def sample_iid(D: Box, U: Box, n: int, rng: np.random.Generator,
               measure: EquilibriumMeasure | None = None,
               cfg: WalkConfig | None = None) -> Packet:
    """n independent walks from ē_D stopped on leaving U."""
    if n < 0:
        raise ParameterError(f"number of excursions must be nonnegative, got {n}")
    if n == 0:
        return Packet((), ())
    measure = measure or equilibrium_measure(SiteSet.from_box(D))
    cfg = cfg or WalkConfig()
    starts = measure.sample(rng, size=n)
    paths, truncated = walks.paths_until_exit(starts, U, cfg, rng)
    return Packet(tuple(Excursion(p, (k, 0), truncated=bool(cut))
                        for k, (p, cut) in enumerate(zip(paths, truncated, strict=True))),
                  tuple(range(1, n + 1)))


# Poisson counter ---------------------------------------------------------------------


def counter_holds(times: np.ndarray, eps: float, m0: int, horizon: int) -> bool:
    """𝒰^{ε,m₀} for integer m in [m₀, horizon], given sorted event times."""
    times = np.sort(np.asarray(times, dtype=float))
    m = np.arange(m0, horizon + 1, dtype=float)
    if not len(m):
        return True
    upto_m = np.searchsorted(times, m, side="right")
    upto_hi = np.searchsorted(times, (1 + eps) * m, side="right")
    ok = (upto_hi - upto_m < 2 * eps * m) & ((1 - eps) * m < upto_m) & (upto_m < (1 + eps) * m)
    return bool(ok.all())


def counter_event(eps: float, m0: int, horizon: int, rng: np.random.Generator) -> bool:
    """Sample a unit-rate counter and evaluate 𝒰^{ε,m₀} up to ``horizon``.

    Raises:
        ParameterError: If ε ∉ (0, 1) or m₀ < 1
    """
    if not 0 < eps < 1:
        raise ParameterError(f"eps must lie in (0, 1), got {eps}")
    if m0 < 1:
        raise ParameterError(f"m0 must be at least 1, got {m0}")
    t_max = (1 + eps) * horizon
    times = np.cumsum(rng.exponential(size=int(t_max + 10 * np.sqrt(t_max) + 20)))
    while times[-1] <= t_max:
        times = np.concatenate([times, times[-1] + np.cumsum(rng.exponential(size=len(times)))])
    return counter_holds(times, eps, m0, horizon)


# entrance kernels -------------------------------------------------------------------


@dataclass(eq=False)
class EntranceKernel:
    """Exact entrance laws into a cube D, shared by all coupling trials.

    h(x, ·) is solved once per cube-symmetry class of exit points and mapped
    back with a cached index permutation.
    """

    D: Box
    U: Box
    measure: EquilibriumMeasure
    pts: np.ndarray
    ebar: np.ndarray
    factor: tuple
    _classes: dict[bytes, np.ndarray] = field(default_factory=dict, repr=False)
    _maps: dict[bytes, np.ndarray] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._c2 = np.asarray(self.D.lo) + np.asarray(self.D.hi) - 1
        self._index = np.full(self.D.shape, -1, dtype=np.int64)
        self._index[tuple((self.pts - np.asarray(self.D.lo)).T)] = np.arange(len(self.pts))
        self._doubled = 2 * self.pts - self._c2

    def _solve(self, x: np.ndarray) -> np.ndarray:
        rhs = green_matrix(x[None, :], self.pts).T
        return np.clip(la.lu_solve(self.factor, rhs).T[0], 0.0, None)

    def hitting(self, x) -> np.ndarray:
        """P_x[H_D < ∞, X_{H_D} = y] over the boundary sites."""
        x = np.asarray(x, dtype=np.int64)
        q = 2 * x - self._c2
        perm = np.argsort(np.abs(q), kind="stable")
        signs = np.where(q < 0, -1, 1)
        canon = np.abs(q)[perm]
        key = canon.tobytes()
        if key not in self._classes:
            self._classes[key] = self._solve((canon + self._c2) // 2)
        tkey = perm.tobytes() + signs.tobytes()
        if tkey not in self._maps:
            image = (self._doubled * signs)[:, perm]
            real = (image + self._c2) // 2
            self._maps[tkey] = self._index[tuple((real - np.asarray(self.D.lo)).T)]
        return self._classes[key][self._maps[tkey]]

    def step_law(self, x) -> np.ndarray:
        h = self.hitting(x)
        return h + max(0.0, 1.0 - h.sum()) * self.ebar


@lru_cache(maxsize=8)
def entrance_kernel_for(L: int, K: int, d: int = 3, k_min: int = 10,
                        dense_limit: int = DENSE_LIMIT) -> EntranceKernel:
    """Kernel tables for the box family at the origin.

    Raises:
        CapabilityError: If ∂D_0 has more sites than the dense limit
    """
    family = box_family((0,) * d, L, K, k_min=k_min)
    D = SiteSet.from_box(family.D)
    boundary = inner_boundary(D)
    if len(boundary) > dense_limit:
        raise CapabilityError(f"|∂D| = {len(boundary)} exceeds the dense limit {dense_limit}")
    measure = equilibrium_measure(D)
    pts = boundary.coords
    ebar = measure.normalized[boundary.contains_array(D.coords)]
    factor = la.lu_factor(green_matrix(pts))
    logger.info("entrance kernel for L=%d K=%d: %d boundary sites", L, K, len(pts))
    return EntranceKernel(family.D, family.U, measure, pts, ebar, factor)


# soft local times ----------------------------------------------------------------------


class _PointCloud:
    """Per-site Poisson points on R₊, extended lazily."""

    def __init__(self, n_sites: int, rng: np.random.Generator, depth: int = 8):
        self.rng = rng
        self.v = np.cumsum(rng.exponential(size=(n_sites, depth)), axis=1)

    def ensure(self, sites: np.ndarray, level: np.ndarray) -> None:
        """Extend until every listed site has a point above ``level``."""
        while True:
            short = self.v[sites, -1] <= level
            if not short.any():
                return
            depth = self.v.shape[1]
            more = self.v[:, -1:] + np.cumsum(self.rng.exponential(size=(len(self.v), depth)),
                                               axis=1)
            self.v = np.concatenate([self.v, more], axis=1)

    def upto(self, level: np.ndarray) -> np.ndarray:
        """Number of points at or below ``level`` per site."""
        return (self.v <= level[:, None]).sum(axis=1)


@dataclass
class CouplingRecord:
    """Both prefixes of one coupling trial plus the ledger audit.

    Attributes:
        true_points: (site index, rank) of Z_1, Z_2, ...
        iid_points: (site index, rank) of Z̃_1, Z̃_2, ...
        true_keys: Path keys of the Z prefix
        iid_keys: Path keys of the Z̃ prefix
        counter_times: Sorted v/ē of the process points
        ledger: Final soft local time G over ∂D
        xi: Ledger increments ξ_n
        domination_ok: At every step the points under G were exactly those selected
        truncated: Marks cut at the step cap before leaving U
        counter: 𝒰^{ε,m₀}
        incl: Incl^{ε,m₀}
    """

    eps: float
    m0: int
    horizon: int
    true_points: list[tuple[int, int]] = field(default_factory=list)
    iid_points: list[tuple[int, int]] = field(default_factory=list)
    true_keys: list[bytes] = field(default_factory=list)
    iid_keys: list[bytes] = field(default_factory=list)
    counter_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ledger: np.ndarray = field(default_factory=lambda: np.zeros(0))
    xi: list[float] = field(default_factory=list)
    domination_ok: bool = True
    counter: bool = True
    incl: bool = True
    truncated: int = 0
    iid_starts: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))


def _included(small: list[bytes], large: list[bytes]) -> bool:
    return not (Counter(small) - Counter(large))


def incl_verdict(true_keys: list[bytes], iid_keys: list[bytes], eps: float, m0: int,
                 horizon: int) -> bool:
    """Incl^{ε,m₀} checked for integer m in [m₀, horizon] as multiset inclusions."""
    for m in range(m0, horizon + 1):
        lo, hi = int(np.floor((1 - eps) * m)), int(np.floor((1 + 3 * eps) * m))
        if not _included(iid_keys[:lo], true_keys[:hi]):
            return False
        if not _included(true_keys[:lo], iid_keys[:hi]):
            return False
    return True


def slt_couple(
    L: int,
    K: int,
    m: int = DEFAULT_HORIZON,
    rng: np.random.Generator | None = None,
    eps: float = DEFAULT_EPS,
    m0: int = DEFAULT_M0,
    d: int = 3,
    k_min: int = 10,
    cfg: WalkConfig | None = None,
    kernel: EntranceKernel | None = None,
) -> CouplingRecord:
    """Couple Z and Z̃ between D_0 and U_0 up to horizon ``m``.

    Raises:
        ParameterError: If ε ∉ (0, 1), m₀ < 1 or m < 0
        CapabilityError: If the entrance kernel is out of exact reach
    """
    if not 0 < eps < 1:
        raise ParameterError(f"eps must lie in (0, 1), got {eps}")
    if m0 < 1 or m < 0:
        raise ParameterError("m0 must be at least 1 and the horizon nonnegative")
    record = CouplingRecord(eps=eps, m0=m0, horizon=m)
    if m == 0:
        return record
    rng = rng if rng is not None else np.random.default_rng()
    cfg = cfg or WalkConfig()
    kernel = kernel or entrance_kernel_for(L, K, d, k_min)
    n_sites = len(kernel.pts)
    need = int(np.floor((1 + 3 * eps) * m))

    cloud = _PointCloud(n_sites, np.random.default_rng(rng.integers(0, 2**63)))
    marks_rng = np.random.default_rng(rng.integers(0, 2**63))
    marks: dict[tuple[int, int], np.ndarray] = {}

    def mark(point: tuple[int, int]) -> np.ndarray:
        if point not in marks:
            start = kernel.pts[point[0]][None, :]
            (path,), cut = walks.paths_until_exit(start, kernel.U, cfg, marks_rng)
            marks[point] = path
            record.truncated += int(cut[0])
        return marks[point]

    # Z̃: points by increasing v/ē.
    ebar = kernel.ebar
    live = np.flatnonzero(ebar > 0)
    T = (1 + eps) * m + need + 10 * np.sqrt(need + 1) + 10
    while True:
        cloud.ensure(live, T * ebar[live])
        t = cloud.v[live] / ebar[live][:, None]
        if (t <= T).sum() >= need and T >= (1 + eps) * m:
            break
        T *= 2
    flat = t.ravel()
    inside = flat <= T
    order = np.flatnonzero(inside)[np.argsort(flat[inside], kind="stable")]
    rows, ranks = np.unravel_index(order, t.shape)
    record.counter_times = flat[order]
    record.iid_points = [(int(live[r]), int(j)) for r, j in zip(rows[:need], ranks[:need],
                                                                strict=True)]
    for p in record.iid_points:
        mark(p)
    record.iid_keys = [np.ascontiguousarray(marks[p]).tobytes() for p in record.iid_points]
    record.iid_starts = kernel.pts[[p[0] for p in record.iid_points]]

    # Z: the soft local time chain.
    G = np.zeros(n_sites)
    ptr = np.zeros(n_sites, dtype=np.int64)
    law = ebar
    serial = np.arange(n_sites)
    for _step in range(need):
        active = np.flatnonzero(law > 0)
        cloud.ensure(active, G[active])
        nxt = cloud.v[active, ptr[active]]
        ratio = np.maximum(nxt - G[active], 0.0) / law[active]
        best = np.lexsort((serial[active], ratio))[0]
        xi = float(ratio[best])
        site = int(active[best])
        G += xi * law
        G[site] = max(G[site], cloud.v[site, ptr[site]])
        point = (site, int(ptr[site]))
        ptr[site] += 1
        record.xi.append(xi)
        record.true_points.append(point)
        path = mark(point)
        record.true_keys.append(np.ascontiguousarray(path).tobytes())
        covered = cloud.upto(G)
        if int(covered.sum()) != len(record.true_points) or not (covered == ptr).all():
            record.domination_ok = False
        law = kernel.step_law(path[-1])
    record.ledger = G
    record.counter = counter_holds(record.counter_times, eps, m0, m)
    record.incl = incl_verdict(record.true_keys, record.iid_keys, eps, m0, m)
    if not record.domination_ok:
        logger.warning("soft local time ledger lost domination (floating-point ties)")
    return record


# entrance-law mixing --------------------------------------------------------------------


@dataclass
class MixingReport:
    """Conditional entrance frequencies into A over ē_A."""

    K: int
    L: int
    x_far: tuple[int, ...]
    ratios: np.ndarray
    max_dev: float
    mode: str
    hits: int = 0


def entrance_mixing_stat(
    A: SiteSet,
    B: SiteSet,
    K: int,
    L: int,
    x_far,
    n: int = 0,
    rng: np.random.Generator | None = None,
    mode: str = "exact",
    cfg: WalkConfig | None = None,
) -> MixingReport:
    """Compare P_x[X_{H_B} = · | X_{H_B} ∈ A] with ē_A.

    Raises:
        GeometryError: If A ⊄ B_{4L}, B ∩ B_{KL} ≠ A, or x lies in B ∪ B_{KL}
    """
    d = A.d
    x_far = tuple(int(c) for c in x_far)
    if not A.issubset(SiteSet.from_box(ball(4 * L, d))):
        raise GeometryError("A must lie inside B_{4L}")
    if B.clip(ball(K * L, d)) != A:
        raise GeometryError("B ∩ B_{KL} must equal A")
    if x_far in B or ball(K * L, d).contains(x_far):
        raise GeometryError("x must lie outside B ∪ B_{KL}")
    mA = equilibrium_measure(A)
    on_a = B.contains_array(A.coords)
    boundary_a = mA.masses > 0
    if mode == "exact":
        mB = mA if B == A else equilibrium_measure(B)
        h = entrance_kernel(np.asarray(x_far), mB)
        in_a = A.contains_array(B.coords)
        cond = np.zeros(len(A))
        cond[on_a] = h[in_a] if len(h) else 0.0
        hits = 0
    elif mode == "mc":
        if n < 1:
            raise ParameterError("mc mode needs at least one walk")
        rng = rng if rng is not None else np.random.default_rng()
        cfg = cfg or WalkConfig()
        box = Box.bounding(np.vstack([B.coords, np.asarray(x_far)[None, :]]))
        result = walks.first_hits(np.repeat(np.asarray(x_far)[None, :], n, axis=0), B,
                                  cfg.escape_box(box), cfg, rng)
        pts = result.points[result.hit]
        pts = pts[A.contains_array(pts)]
        hits = len(pts)
        counts = Counter(map(tuple, pts.tolist()))
        cond = np.array([counts.get(tuple(int(c) for c in row), 0) for row in A.coords],
                        dtype=float)
    else:
        raise ParameterError(f"unknown mode {mode!r}")
    total = cond.sum()
    if total <= 0:
        raise ParameterError("the walk never entered A")
    ratios = (cond[boundary_a] / total) / mA.normalized[boundary_a]
    return MixingReport(K, L, x_far, ratios, float(np.abs(ratios - 1).max()), mode, hits)

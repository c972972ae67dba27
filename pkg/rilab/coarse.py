"""Admissible coarsenings of crossings of B²_N and the good event 𝒢.

A crossing path is coarse-grained into one box per concentric shell: the
shells are Euclidean spheres of radius 3√d·K·L·i, i = 1..n, and a shell's
candidates are the L-boxes whose closed hull meets the sphere. Per-shell
counts are exact (integer arithmetic on squared radii), so the entropy
bound log|𝒜| ≤ Γ(N/L) can be checked without listing 10⁸ boxes.
"""
from __future__ import annotations

import itertools
import logging
import math
from collections.abc import Callable, Iterator, Sequence
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from scipy import linalg as la

from rilab import fixtures
from rilab.errors import ParameterError, PathError
from rilab.lattice import K_MIN, AnnulusSpec, Box, LatticePath, SiteSet
from rilab.potential import DENSE_LIMIT, box_capacity, capacity, green_asymptotic

logger = logging.getLogger(__name__)

SEGMENT_PIECE = 2_000


def h_scale(x: float, d: int) -> float:
    """h(x) = x(1 + (log x)² 1_{d≥4})."""
    return x * (1 + (math.log(x) ** 2 if d >= 4 else 0.0))


def gamma_entropy(x: float, K: int, d: int = 3, C: float | None = None) -> float:
    """Γ(x) = C K⁻¹ x log(ex) in d = 3, C x for d ≥ 4."""
    C = fixtures.get("gamma_c") if C is None else C
    if d == 3:
        return C / K * x * math.log(math.e * x)
    return C * x


# integer geometry of bands ------------------------------------------------------------


def _isqrt_floor(a: np.ndarray) -> np.ndarray:
    a = np.maximum(np.asarray(a, dtype=np.int64), 0)
    s = np.floor(np.sqrt(a.astype(np.float64))).astype(np.int64)
    s -= (s * s > a).astype(np.int64)
    s += ((s + 1) * (s + 1) <= a).astype(np.int64)
    return s


def _isqrt_ceil(a: np.ndarray) -> np.ndarray:
    a = np.maximum(np.asarray(a, dtype=np.int64), 0)
    s = _isqrt_floor(a)
    return s + (s * s < a).astype(np.int64)


def _folded(k: np.ndarray) -> np.ndarray:
    """j with min/max distance of the hull [Lk, L(k+1)] to 0 equal to Lj, L(j+1)."""
    return np.where(k >= 0, k, -k - 1)


def in_band(k: np.ndarray, r2: int, L: int) -> np.ndarray:
    """True where the closed hull of box L·k meets the sphere of squared radius r2."""
    j = _folded(np.asarray(k, dtype=np.int64))
    near = ((L * j) ** 2).sum(axis=-1)
    far = ((L * (j + 1)) ** 2).sum(axis=-1)
    return (near <= r2) & (r2 <= far)


def _band_rows(r2: int, L: int, d: int) -> Iterator[tuple[tuple[int, ...], np.ndarray,
                                                         np.ndarray, np.ndarray]]:
    """Folded prefixes with the range [lo, hi] of the last folded coordinate.

    Yields ``(prefix, j_next, lo, hi)`` where ``prefix`` fixes the first d − 2
    folded coordinates and ``j_next`` is a vector of the (d−1)-th.
    """
    J = int(_isqrt_floor(np.array(r2))) // L
    j_next = np.arange(J + 1, dtype=np.int64)
    for prefix in itertools.product(range(J + 1), repeat=d - 2):
        p = np.asarray(prefix, dtype=np.int64)
        near = int(((L * p) ** 2).sum()) + (L * j_next) ** 2
        far = int(((L * (p + 1)) ** 2).sum()) + (L * (j_next + 1)) ** 2
        room = r2 - near
        ok = room >= 0
        if not ok.any():
            continue
        hi = _isqrt_floor(room) // L
        t = -(-_isqrt_ceil(r2 - far) // L)
        lo = np.maximum(t - 1, 0)
        ok &= hi >= lo
        if ok.any():
            yield prefix, j_next[ok], lo[ok], hi[ok]


def band_count(r2: int, L: int, d: int) -> int:
    """Number of L-boxes whose closed hull meets the sphere of squared radius r2."""
    total = 0
    for _, _, lo, hi in _band_rows(r2, L, d):
        total += int((hi - lo + 1).sum())
    return total * 2**d


def band_sites(r2: int, L: int, d: int, limit: int | None = None) -> np.ndarray:
    """Corners L·k of the boxes counted by ``band_count``, shape ``(m, d)``."""
    folded = []
    for prefix, j_next, lo, hi in _band_rows(r2, L, d):
        for a, b, c in zip(j_next.tolist(), lo.tolist(), hi.tolist(), strict=True):
            for last in range(b, c + 1):
                folded.append((*prefix, a, last))
        if limit is not None and len(folded) * 2**d > limit:
            raise ParameterError(f"band holds more than {limit} boxes")
    if not folded:
        return np.zeros((0, d), dtype=np.int64)
    j = np.asarray(folded, dtype=np.int64)
    out = []
    for signs in itertools.product((False, True), repeat=d):
        flip = np.asarray(signs)
        out.append(np.where(flip, -j - 1, j))
    return L * np.concatenate(out)


# shells -----------------------------------------------------------------------------------


@dataclass(frozen=True)
class ShellSystem:
    """Concentric shells S_i of radius 3√d·KL·i, i = 1..n, inside B²_N."""

    N: int
    K: int
    L: int
    d: int = 3

    @property
    def unit(self) -> float:
        return 3 * math.sqrt(self.d) * self.K * self.L

    @property
    def n(self) -> int:
        return math.floor(self.N / self.unit) - 1

    @property
    def surrogate(self) -> bool:
        """d ≥ 4 reuses the d = 3 construction."""
        return self.d >= 4

    def radius(self, i: int) -> float:
        return self.unit * i

    def r2(self, i: int) -> int:
        """Squared radius, an integer: 9d(KLi)²."""
        return 9 * self.d * (self.K * self.L * i) ** 2

    @property
    def shell_gap(self) -> int:
        """ℓ∞ distance between consecutive spheres."""
        return 3 * self.K * self.L

    @property
    def guaranteed_separation(self) -> int:
        """Lower bound on the ℓ∞ gap of corners chosen from consecutive shells."""
        return 3 * self.K * self.L - 2 * self.L

    @cached_property
    def counts(self) -> tuple[int, ...]:
        return tuple(band_count(self.r2(i), self.L, self.d) for i in range(1, self.n + 1))

    def candidates(self, i: int, limit: int | None = None) -> np.ndarray:
        """Corners z ∈ LZ^d of shell i's boxes."""
        self._check_index(i)
        return band_sites(self.r2(i), self.L, self.d, limit)

    def contains(self, i: int, z: Sequence[int]) -> bool:
        self._check_index(i)
        z = np.asarray(z, dtype=np.int64)
        if (z % self.L).any():
            return False
        return bool(in_band(z // self.L, self.r2(i), self.L))

    def volume_bound(self, i: int) -> float:
        """Vol(B²_{4√dKLi} ∖ B²_{2√dKLi}) / L^d, a bound on shell i's count."""
        omega = math.pi ** (self.d / 2) / math.gamma(self.d / 2 + 1)
        r = math.sqrt(self.d) * self.K * self.L * i
        return omega * ((4 * r) ** self.d - (2 * r) ** self.d) / self.L**self.d

    def _check_index(self, i: int) -> None:
        if not 1 <= i <= self.n:
            raise ParameterError(f"shell index {i} outside 1..{self.n}")


def build_shells(N: int, K: int, L: int, d: int = 3, k_min: int = K_MIN) -> ShellSystem:
    """Shells for B²_N.

    Raises:
        ParameterError: If N < 2·3√d·KL (no shell fits) or K < k_min
    """
    if L < 1 or d < 3:
        raise ParameterError(f"need L ≥ 1 and d ≥ 3, got L={L}, d={d}")
    if K < k_min:
        raise ParameterError(f"factor K must be at least {k_min}, got {K}")
    shells = ShellSystem(N, K, L, d)
    if shells.n < 1:
        need = math.ceil(2 * shells.unit)
        raise ParameterError(f"N = {N} is too small for K={K}, L={L}: need N ≥ {need}")
    if shells.surrogate:
        logger.info("d = %d: using the d = 3 shell family as a surrogate", d)
    return shells


# coarsenings ------------------------------------------------------------------------------


def _d_box(z: Sequence[int], L: int) -> Box:
    return Box(tuple(int(c) - 3 * L for c in z), tuple(int(c) + 4 * L for c in z))


@dataclass(frozen=True, eq=False)
class Coarsening:
    """One L-box corner per shell; Σ(𝒞) is the union of the boxes D_z."""

    points: np.ndarray
    K: int
    L: int
    N: int
    exits: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.points)

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def boxes(self) -> list[Box]:
        return [_d_box(z, self.L) for z in self.points]

    def subset(self, idx: Sequence[int]) -> Coarsening:
        idx = list(idx)
        return Coarsening(self.points[idx], self.K, self.L, self.N)

    def separation(self) -> int:
        """Smallest pairwise ℓ∞ distance (0 for fewer than two points)."""
        if len(self) < 2:
            return 0
        diff = np.abs(self.points[:, None, :] - self.points[None, :, :]).max(axis=-1)
        np.fill_diagonal(diff, np.iinfo(np.int64).max)
        return int(diff.min())

    def sigma(self, margin: int = 1) -> SiteSet:
        """Σ(𝒞) as a site set; only for small geometries."""
        boxes = self.boxes()
        window = Box(tuple(min(b.lo[a] for b in boxes) - margin for a in range(self.d)),
                     tuple(max(b.hi[a] for b in boxes) + margin for a in range(self.d)))
        mask = np.zeros(window.shape, dtype=bool)
        for b in boxes:
            mask[b.slices(window)] = True
        return SiteSet(window, mask)


def line_coarsening(n: int, K: int, L: int, d: int = 3) -> Coarsening:
    """n corners on the first axis, consecutive ones a shell gap 3KL apart."""
    if n < 1 or K < 1 or L < 1:
        raise ParameterError("line coarsenings need n, K and L positive")
    points = np.zeros((n, d), dtype=np.int64)
    points[:, 0] = 3 * K * L * np.arange(n)
    return Coarsening(points, K, L, int(points[-1, 0]) + 4 * L)


def _on_sphere_boundary(v: np.ndarray, N: int) -> np.ndarray:
    """Sites of ∂B²_N: inside, with a neighbour outside."""
    r2 = (v**2).sum(axis=1)
    return (r2 <= N * N) & (r2 + 2 * np.abs(v).max(axis=1) + 1 > N * N)


def is_crossing(gamma: LatticePath, N: int, L: int) -> bool:
    """γ visits the origin's box C_{0,L} and ∂B²_N."""
    v = gamma.vertices
    origin_box = Box((0,) * gamma.d, (L,) * gamma.d)
    return bool(origin_box.contains_array(v).any() and _on_sphere_boundary(v, N).any())


def extract_coarsening(gamma: LatticePath, shells: ShellSystem) -> Coarsening:
    """z_i = box of γ's first exit from S_i + C_{0,L}, i = 1..n.

    Raises:
        PathError: If γ is not a crossing of B²_N or misses a shell
    """
    if gamma.d != shells.d:
        raise PathError(f"path is {gamma.d}-dimensional, shells are {shells.d}-dimensional")
    if not is_crossing(gamma, shells.N, shells.L):
        raise PathError("path does not join the origin's box to ∂B²_N")
    v = gamma.vertices
    k = v // shells.L
    points, exits = [], []
    for i in range(1, shells.n + 1):
        band = in_band(k, shells.r2(i), shells.L)
        leaving = np.nonzero(band[:-1] & ~band[1:])[0]
        if not len(leaving):
            raise PathError(f"path never leaves shell {i}")
        t = int(leaving[0])
        points.append(shells.L * k[t])
        exits.append(t)
    return Coarsening(np.asarray(points, dtype=np.int64), shells.K, shells.L, shells.N,
                      np.asarray(exits))


@dataclass
class CoarseningReport:
    """Mechanical checks of one coarsening."""

    n: int
    in_domain: bool
    cardinality: bool
    on_shells: bool
    separation: int
    separation_ok: bool
    separation_10kl: bool
    crosses: bool | None = None

    @property
    def passed(self) -> bool:
        ok = self.in_domain and self.cardinality and self.on_shells and self.separation_ok
        return ok and self.crosses is not False


def check_coarsening(C: Coarsening, shells: ShellSystem, gamma: LatticePath | None = None,
                     a: float | None = None, sigma: float = 0.0) -> CoarseningReport:
    """D_z ⊆ Λ_N, the cardinality window, shell membership, separation and,
    when the path is given, that γ crosses D̃_z ∖ C_z for every z."""
    a = fixtures.get("admissible_a") if a is None else a
    N, L, d = C.N, C.L, C.d
    in_domain = True
    for z in C.points:
        corners = np.array(list(itertools.product(*[(c - 3 * L, c + 4 * L - 1) for c in z])))
        if ((corners**2).sum(axis=1) > N * N).any():
            in_domain = False
            break
    scale = (1 - sigma) * N / h_scale(C.K * L, d)
    cardinality = a * scale <= len(C) <= scale
    on_shells = len(C) == shells.n and all(
        shells.contains(i + 1, z) for i, z in enumerate(C.points))
    sep = C.separation()
    crosses = None
    if gamma is not None:
        crosses = all(
            gamma.crosses(Box(tuple(z), tuple(z + L)), _d_box(z, L).expand(-L))
            for z in C.points
        )
    return CoarseningReport(
        n=len(C), in_domain=in_domain, cardinality=cardinality, on_shells=on_shells,
        separation=sep,
        separation_ok=len(C) < 2 or sep >= shells.guaranteed_separation,
        separation_10kl=len(C) < 2 or sep >= 10 * C.K * L,
        crosses=crosses,
    )


@dataclass
class FamilyStats:
    """Cardinality accounting of the shell family 𝒜."""

    n: int
    counts: tuple[int, ...]
    log_family: float
    gamma: float
    volume_bounds: tuple[float, ...]
    fitted_c: float

    @property
    def within_gamma(self) -> bool:
        return self.log_family <= self.gamma

    @property
    def within_volume(self) -> bool:
        return all(c <= b for c, b in zip(self.counts, self.volume_bounds, strict=True))


def family_stats(shells: ShellSystem, gamma_c: float | None = None) -> FamilyStats:
    """log|𝒜| = Σ_i log(count_i) against Γ(N/L)."""
    counts = shells.counts
    log_family = float(sum(math.log(c) for c in counts))
    x = shells.N / shells.L
    bounds = tuple(shells.volume_bound(i) for i in range(1, shells.n + 1))
    fitted = max(c / x ** (shells.d - 1) for c in counts)
    stats = FamilyStats(shells.n, counts, log_family,
                        gamma_entropy(x, shells.K, shells.d, gamma_c), bounds, fitted)
    logger.debug("shell family: n=%d log|A|=%.2f Gamma=%.2f", stats.n, log_family, stats.gamma)
    return stats


# capacities -------------------------------------------------------------------------------


def _block_capacity(caps: np.ndarray, centers: np.ndarray, d: int) -> float:
    """1ᵀM⁻¹1 with M = diag(1/cap_i) + g(c_i − c_j) off the diagonal."""
    if len(caps) == 1:
        return float(caps[0])
    r = np.sqrt(((centers[:, None, :] - centers[None, :, :]) ** 2).sum(axis=-1))
    np.fill_diagonal(r, 1.0)
    M = green_asymptotic(r, d)
    np.fill_diagonal(M, 1.0 / caps)
    return float(la.solve(M, np.ones(len(caps)), assume_a="pos").sum())


@lru_cache(maxsize=64)
def segment_capacity(M: int, d: int = 3, mode: str = "exact") -> tuple[float, bool]:
    """cap(T_M) for the segment {0..M} × {0}^{d−1}.

    Returns the capacity and whether it is a block approximation.
    """
    if M < 0:
        raise ParameterError(f"segment length must be nonnegative, got {M}")
    if mode == "exact" or M + 1 <= 2 * DENSE_LIMIT:
        pts = np.zeros((M + 1, d), dtype=np.int64)
        pts[:, 0] = np.arange(M + 1)
        return capacity(SiteSet.from_points(pts, margin=1)), False
    pieces = math.ceil((M + 1) / SEGMENT_PIECE)
    lengths = [SEGMENT_PIECE] * (pieces - 1) + [M + 1 - SEGMENT_PIECE * (pieces - 1)]
    caps = np.array([segment_capacity(n - 1, d, "exact")[0] for n in lengths])
    starts = np.cumsum([0, *lengths[:-1]])
    centers = np.zeros((pieces, d))
    centers[:, 0] = starts + (np.asarray(lengths) - 1) / 2
    return _block_capacity(caps, centers, d), True


def sigma_capacity(C: Coarsening, mode: str = "block") -> float:
    """cap(Σ(𝒞)): exact solve on small geometries, block approximation at scale."""
    if mode == "exact":
        return capacity(C.sigma())
    if mode != "block":
        raise ParameterError(f"unknown capacity mode {mode!r}")
    side = 7 * C.L
    caps = np.full(len(C), box_capacity(side, C.d))
    centers = C.points.astype(np.float64) + (C.L - 1) / 2
    return _block_capacity(caps, centers, C.d)


@dataclass
class CapacityRatio:
    """min over sampled sub-collections of cap(Σ(𝒞̃)) / cap(T_{(1−σ)N})."""

    ratio: float
    worst: tuple[int, ...]
    cap_segment: float
    subsets: int
    approximate: bool


def capacity_ratio(C: Coarsening, rho: float, mode: str = "block", samples: int = 64,
                   rng: np.random.Generator | None = None, sigma: float = 0.0) -> CapacityRatio:
    """Worst capacity ratio over sub-collections with |𝒞̃| ≥ (1 − ρ)|𝒞|.

    Capacity is monotone, so only sub-collections of the smallest admitted
    size are scanned: all of them when there are at most ``samples``, a
    random selection otherwise.
    """
    if not 0 <= rho < 1:
        raise ParameterError(f"rho must lie in [0, 1), got {rho}")
    n = len(C)
    m = max(1, math.ceil((1 - rho) * n))
    total = math.comb(n, m)
    if total <= samples:
        choices = list(itertools.combinations(range(n), m))
    else:
        rng = rng if rng is not None else np.random.default_rng()
        choices = [tuple(sorted(rng.choice(n, size=m, replace=False).tolist()))
                   for _ in range(samples)]
    seg_mode = "exact" if mode == "exact" else "block"
    cap_t, approx = segment_capacity(int((1 - sigma) * C.N), C.d, seg_mode)
    worst, ratio = choices[0], math.inf
    for idx in choices:
        value = sigma_capacity(C.subset(idx), mode) / cap_t
        if value < ratio:
            worst, ratio = idx, value
    return CapacityRatio(ratio, worst, cap_t, len(choices),
                         approximate=approx or mode == "block" or total > samples)


# the good event ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GoodEventSpec:
    """𝒢(Λ_N, 𝒢, 𝓕; ρ) with the per-box indicator of 𝒢_z ∩ 𝓕_z."""

    annulus: AnnulusSpec
    rho: float
    indicator: Callable[[tuple[int, ...]], bool]

    def __post_init__(self):
        if not 0 < self.rho <= 1:
            raise ParameterError(f"rho must lie in (0, 1], got {self.rho}")

    @classmethod
    def from_bad(cls, annulus: AnnulusSpec, rho: float, bad) -> GoodEventSpec:
        """Indicator that is false exactly on the given corners."""
        bad = frozenset(tuple(int(c) for c in z) for z in bad)
        return cls(annulus, rho, lambda z: tuple(int(c) for c in z) not in bad)


@dataclass
class GoodEventReport:
    verdict: bool
    good_shells: int
    n: int
    certificate: np.ndarray | None = None
    approximate: bool = False
    bad_found: list[tuple[int, ...] | None] = field(default_factory=list)


def good_event_check(spec: GoodEventSpec, shells: ShellSystem, cap: int = 10**6,
                     rng: np.random.Generator | None = None) -> GoodEventReport:
    """Decide 𝒢: every coarsening in 𝒜 meets at least ρ|𝒞| good boxes.

    Any per-shell selection of candidates is realized by a crossing, so the
    worst coarsening takes a bad box in every shell that has one. Shells
    with more than ``cap`` candidates are sampled at ``cap`` random sphere
    points and the pass verdict is flagged approximate.
    """
    if spec.annulus.kind != "euclidean-ball" or spec.annulus.N != shells.N:
        raise ParameterError("shells are built for the Euclidean ball B²_N of the same N")
    rng = rng if rng is not None else np.random.default_rng()
    bad_found: list[tuple[int, ...] | None] = []
    first: list[np.ndarray] = []
    approximate = False
    for i in range(1, shells.n + 1):
        if shells.counts[i - 1] <= cap:
            cand = shells.candidates(i)
        else:
            approximate = True
            cand = _sample_candidates(shells, i, cap, rng)
        first.append(cand[0])
        keys = (tuple(int(c) for c in z) for z in cand)
        bad = next((z for z in keys if not spec.indicator(z)), None)
        bad_found.append(bad)
    good_shells = sum(b is None for b in bad_found)
    verdict = good_shells >= spec.rho * shells.n
    certificate = None
    if not verdict:
        certificate = np.asarray([b if b is not None else f
                                  for b, f in zip(bad_found, first, strict=True)])
        approximate = False
    return GoodEventReport(verdict, good_shells, shells.n, certificate, approximate, bad_found)


def _sample_candidates(
    shells: ShellSystem, i: int, size: int, rng: np.random.Generator
) -> np.ndarray:
    """Boxes under ``size`` random points of sphere i."""
    g = rng.standard_normal((size, shells.d))
    p = g / np.linalg.norm(g, axis=1, keepdims=True) * shells.radius(i)
    return shells.L * np.floor(p / shells.L).astype(np.int64)


def good_event_bruteforce(spec: GoodEventSpec, shells: ShellSystem,
                          limit: int = 10**6) -> tuple[bool, np.ndarray | None]:
    """𝒢 by enumerating every per-shell combination (small systems only)."""
    lists = [shells.candidates(i) for i in range(1, shells.n + 1)]
    total = math.prod(len(c) for c in lists)
    if total > limit:
        raise ParameterError(f"{total} coarsenings exceed the enumeration limit {limit}")
    flags = [np.array([spec.indicator(tuple(z)) for z in c]) for c in lists]
    need = spec.rho * shells.n
    for combo in itertools.product(*(range(len(c)) for c in lists)):
        good = sum(bool(flags[s][j]) for s, j in enumerate(combo))
        if good < need:
            return False, np.asarray([lists[s][j] for s, j in enumerate(combo)])
    return True, None


# random crossings -------------------------------------------------------------------------


def random_crossing(N: int, rng: np.random.Generator, d: int = 3, bias: float = 0.25,
                    chunk: int = 65_536) -> LatticePath:
    """Nearest-neighbour walk from 0 drifting toward a random orthant until ∂B²_N.

    Each step picks an axis uniformly and moves toward the orthant with
    probability (1 + bias)/2.
    """
    if not 0 < bias <= 1:
        raise ParameterError(f"bias must lie in (0, 1], got {bias}")
    toward = rng.choice(np.array([-1, 1]), size=d)
    pos = np.zeros(d, dtype=np.int64)
    pieces = [pos[None, :]]
    while True:
        axes = rng.integers(d, size=chunk)
        forward = rng.random(chunk) < (1 + bias) / 2
        steps = np.zeros((chunk, d), dtype=np.int64)
        steps[np.arange(chunk), axes] = np.where(forward, toward[axes], -toward[axes])
        walk = pos + np.cumsum(steps, axis=0)
        hit = np.nonzero(_on_sphere_boundary(walk, N))[0]
        if len(hit):
            pieces.append(walk[: hit[0] + 1])
            break
        pieces.append(walk)
        pos = walk[-1]
    return LatticePath(np.concatenate(pieces))

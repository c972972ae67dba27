"""Excursions between nested boxes, packets and packet families.

An excursion between D ⊂ U is a stretch of a trajectory from its entrance
into D up to and including the first site outside U. A packet is a finite
ordered sequence of excursions; packet families are sets of index subsets
J ⊆ {1..n} of a base packet.
"""
from __future__ import annotations

import itertools
import logging
import math
from collections import Counter
from collections.abc import Iterator
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Literal

import numpy as np

from rilab.errors import FamilySizeError, GeometryError, ParameterError
from rilab.interlacements import InterlacementSample, LabeledTrajectory
from rilab.lattice import K_MIN, Box, LatticePath, SiteSet, box_family
from rilab.potential import box_capacity

logger = logging.getLogger(__name__)

FAMILY_CAP = 2**20


@dataclass(frozen=True, eq=False)
class Excursion:
    """One excursion; ``path`` ends at the first site outside U.

    Attributes:
        path: Vertices, shape ``(m, d)``
        parent: (trajectory index, index within the trajectory)
        label: Label of the parent trajectory
        truncated: The trajectory record ended before leaving U
    """

    path: np.ndarray
    parent: tuple[int, int] = (0, 0)
    label: float = 0.0
    truncated: bool = False

    @cached_property
    def key(self) -> bytes:
        return np.ascontiguousarray(self.path, dtype=np.int64).tobytes()

    def as_path(self) -> LatticePath:
        return LatticePath(self.path)

    def __len__(self) -> int:
        return len(self.path)


def _scan(vertices: np.ndarray, in_d: np.ndarray, in_u: np.ndarray) -> list[tuple[int, int | None]]:
    """(start, stop) index pairs of excursions; stop None when the path ends inside U."""
    spans = []
    d_hits = np.flatnonzero(in_d)
    u_exits = np.flatnonzero(~in_u)
    pos = 0
    while True:
        k = np.searchsorted(d_hits, pos)
        if k == len(d_hits):
            break
        start = int(d_hits[k])
        e = np.searchsorted(u_exits, start)
        if e == len(u_exits):
            spans.append((start, None))
            break
        stop = int(u_exits[e])
        spans.append((start, stop))
        pos = stop + 1
    return spans


def decompose_path(
    vertices: np.ndarray, D: Box | SiteSet, U: Box | SiteSet, parent: int = 0,
    label: float = 0.0, open_end_truncated: bool = True,
) -> list[Excursion]:
    """Excursions of one contiguous path."""
    vertices = np.asarray(vertices, dtype=np.int64)
    if not len(vertices):
        return []
    out = []
    for k, (start, stop) in enumerate(_scan(vertices, D.contains_array(vertices),
                                            U.contains_array(vertices))):
        end = len(vertices) if stop is None else stop + 1
        out.append(Excursion(vertices[start:end], (parent, k), label,
                             truncated=stop is None and open_end_truncated))
    return out


def decompose(t: LabeledTrajectory, D: Box | SiteSet, U: Box | SiteSet,
              parent: int = 0) -> list[Excursion]:
    """Split a trajectory into its excursions between D and U.

    Each recorded piece is scanned separately; an excursion still inside U
    when the record stops is kept and flagged ``truncated``.
    """
    out: list[Excursion] = []
    for piece in t.pieces():
        for exc in decompose_path(piece, D, U, parent, t.label):
            out.append(Excursion(exc.path, (parent, len(out)), t.label, exc.truncated))
    if any(e.truncated for e in out):
        logger.warning("trajectory %d has %d excursions cut short", parent,
                       sum(e.truncated for e in out))
    return out


# packets -------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Packet:
    """Ordered excursions; ``index_set`` locates them in a base packet (1-based)."""

    excursions: tuple[Excursion, ...] = ()
    index_set: tuple[int, ...] | None = None

    def __len__(self) -> int:
        return len(self.excursions)

    def __iter__(self) -> Iterator[Excursion]:
        return iter(self.excursions)

    def subpacket(self, J) -> Packet:
        J = tuple(sorted(int(j) for j in J))
        if J and (J[0] < 1 or J[-1] > len(self)):
            raise ParameterError(f"index set {J} outside 1..{len(self)}")
        return Packet(tuple(self.excursions[j - 1] for j in J), J)

    def prefix(self, k: int) -> Packet:
        return self.subpacket(range(1, min(k, len(self)) + 1))

    @cached_property
    def multiset(self) -> Counter:
        return Counter(e.key for e in self.excursions)

    def contains_multiset(self, other: Packet) -> bool:
        """Multiset inclusion other ⊆ self."""
        mine = self.multiset
        return all(mine[k] >= c for k, c in other.multiset.items())

    @cached_property
    def _stacked(self) -> np.ndarray:
        if not self.excursions:
            return np.zeros((0, 0), dtype=np.int64)
        return np.concatenate([e.path for e in self.excursions])

    def occupation(self, window: Box) -> np.ndarray:
        """ℓ_x(Z): visits per site over ``window``."""
        pts = self._stacked
        ell = np.zeros(window.size, dtype=np.int64)
        if len(pts):
            pts = pts[window.contains_array(pts)]
            flat = np.ravel_multi_index(tuple((pts - np.asarray(window.lo)).T), window.shape)
            ell = np.bincount(flat, minlength=window.size)
        return ell.reshape(window.shape)

    def interlacement(self, window: Box) -> SiteSet:
        """𝓘(Z) ∩ window."""
        return SiteSet(window, self.occupation(window) > 0)

    def vacant(self, window: Box) -> SiteSet:
        """𝓥(Z) ∩ window."""
        return SiteSet(window, self.occupation(window) == 0)


FamilyKind = Literal["plus", "minus", "near_interval"]


@dataclass(frozen=True)
class PacketFamily:
    """Z_+(ν), Z_−(ν) or Z(ν) over a base packet of size ``n``."""

    n: int
    kind: FamilyKind
    nu: float = 0.0

    def __post_init__(self):
        if self.kind not in ("plus", "minus", "near_interval"):
            raise ParameterError(f"unknown family kind {self.kind!r}")
        if self.nu < 0 or math.isnan(self.nu):
            raise ParameterError(f"nu must be nonnegative, got {self.nu}")
        if self.n < 0:
            raise ParameterError(f"base size must be nonnegative, got {self.n}")

    @property
    def m(self) -> int:
        """⌊ν⌋ ∧ n."""
        return self.n if math.isinf(self.nu) else min(int(math.floor(self.nu)), self.n)

    def _reach(self, p: int) -> int:
        return self.n if math.isinf(self.nu) else min(p + int(math.floor(self.nu)), self.n)

    def count(self) -> int:
        if self.kind == "plus":
            return 2 ** (self.n - self.m)
        if self.kind == "minus":
            return 2 ** self.m
        return 1 + sum(2 ** max(0, self._reach(p) - p - 1) for p in range(self.n))

    def contains(self, J) -> bool:
        J = frozenset(int(j) for j in J)
        if any(j < 1 or j > self.n for j in J):
            return False
        head = frozenset(range(1, self.m + 1))
        if self.kind == "plus":
            return head <= J
        if self.kind == "minus":
            return J <= head
        p = 0
        while p + 1 in J:
            p += 1
        return max(J, default=0) <= self._reach(p)

    def __iter__(self) -> Iterator[tuple[int, ...]]:
        if self.kind == "plus":
            head = tuple(range(1, self.m + 1))
            rest = range(self.m + 1, self.n + 1)
            for r in range(len(rest) + 1):
                for extra in itertools.combinations(rest, r):
                    yield head + extra
        elif self.kind == "minus":
            head = range(1, self.m + 1)
            for r in range(self.m + 1):
                yield from itertools.combinations(head, r)
        else:
            for p in range(self.n):
                free = range(p + 2, self._reach(p) + 1)
                for r in range(len(free) + 1):
                    for extra in itertools.combinations(free, r):
                        yield tuple(range(1, p + 1)) + extra
            yield tuple(range(1, self.n + 1))


def enumerate_family(f: PacketFamily, cap: int = FAMILY_CAP) -> list[tuple[int, ...]]:
    """All index sets of the family.

    Raises:
        FamilySizeError: If the family has more than ``cap`` members
    """
    count = f.count()
    if count > cap:
        raise FamilySizeError(count, cap)
    return list(f)


# scale-dependent sequences ----------------------------------------------------------


def _geometry(z, L: int, K: int, k_min: int, s: InterlacementSample) -> tuple[Box, Box]:
    family = box_family(z, L, K, k_min=k_min)
    if not family.U.expand(1).inside(s.coverage):
        raise GeometryError(f"U_z plus its outer boundary leaves the coverage {s.coverage}")
    if not s.base.contains_array(family.D.sites()).all():
        raise GeometryError("the sampled set K must contain D_z")
    return family.D, family.U


def ordered_excursions(
    s: InterlacementSample, z, L: int, K: int, u: float, k_min: int = K_MIN
) -> Packet:
    """Z̄_z^u: excursions between D_z and U_z ordered by label, then by time."""
    if u > s.u_max:
        raise ParameterError(f"level {u} exceeds the sampled u_max {s.u_max}")
    D, U = _geometry(z, L, K, k_min, s)
    out: list[Excursion] = []
    for i, t in enumerate(s.trajectories):
        if t.label > u:
            break
        out.extend(decompose(t, D, U, parent=i))
    return Packet(tuple(out), tuple(range(1, len(out) + 1)))


def induced_excursions(e: Excursion, D_fine: Box, U_fine: Box,
                       D: Box | None = None, U: Box | None = None) -> list[Excursion]:
    """Sub-excursions of ``e`` between D′ ⊆ D and U′ ⊆ U.

    Raises:
        GeometryError: If the fine boxes are not nested in the coarse ones
    """
    if D is not None and not D_fine.inside(D):
        raise GeometryError("fine D must lie inside coarse D")
    if U is not None and not U_fine.inside(U):
        raise GeometryError("fine U must lie inside coarse U")
    found = decompose_path(e.path, D_fine, U_fine, e.parent[0], e.label,
                           open_end_truncated=e.truncated)
    return [Excursion(x.path, e.parent, e.label, x.truncated) for x in found]


def flatten_packet(p: Packet, D_fine: Box, U_fine: Box) -> Packet:
    """Concatenate the induced excursions of every member, in order."""
    out = [x for e in p for x in induced_excursions(e, D_fine, U_fine)]
    return Packet(tuple(out), tuple(range(1, len(out) + 1)))


# count events ------------------------------------------------------------------------


@dataclass(frozen=True)
class CountEvent:
    """𝓕_z^{u,v}: N_z^u ≤ v·cap(D_z) when u ≤ v, N_z^u ≥ v·cap(D_z) otherwise."""

    z: tuple[int, ...]
    L: int
    u: float
    v: float
    observed: int
    threshold: float
    holds: bool


def count_event(z, L: int, u: float, v: float, sample: InterlacementSample,
                K: int = K_MIN, k_min: int = K_MIN,
                cap_D: float | None = None) -> CountEvent:
    """Evaluate 𝓕_z^{u,v} against the unfloored threshold v·cap(D_z)."""
    if u < 0 or v < 0:
        raise ParameterError("levels must be nonnegative")
    z = tuple(int(c) for c in z)
    d = len(z)
    cap_D = box_capacity(7 * L, d) if cap_D is None else cap_D
    threshold = v * cap_D
    observed = 0 if u == 0 else len(ordered_excursions(sample, z, L, K, u, k_min=k_min))
    holds = observed <= threshold if u <= v else observed >= threshold
    return CountEvent(z, L, u, v, observed, threshold, bool(holds))


def count_tail_bound(lam: float, eps: float, upper: bool = True) -> float:
    """Chernoff bound for a Poisson(λ) count.

    P[N ≥ (1+ε)λ] ≤ exp(−λ((1+ε)log(1+ε) − ε)) and
    P[N ≤ (1−ε)λ] ≤ exp(−λ((1−ε)log(1−ε) + ε)).
    """
    if lam < 0 or eps < 0:
        raise ParameterError("rate and deviation must be nonnegative")
    if upper:
        h = (1 + eps) * math.log1p(eps) - eps
    else:
        if eps >= 1:
            return math.exp(-lam)
        h = (1 - eps) * math.log1p(-eps) + eps
    return math.exp(-lam * h)


# packet files ---------------------------------------------------------------------------


def write_packet(path: Path | str, p: Packet, d: int) -> None:
    """``packet d=<int> n=<count>`` header, then per excursion an ``excursion`` line and its sites."""
    lines = [f"packet d={d} n={len(p)}"]
    if p.index_set is not None:
        lines.append("index " + " ".join(str(j) for j in p.index_set))
    for e in p:
        lines.append(f"excursion {len(e)}")
        lines.extend(" ".join(str(int(c)) for c in row) for row in e.path)
    Path(path).write_text("\n".join(lines) + "\n")


def read_packet(path: Path | str) -> Packet:
    lines = [line for line in Path(path).read_text().splitlines() if line.strip()]
    if not lines or not lines[0].startswith("packet"):
        raise GeometryError(f"{path}: expected a 'packet' header")
    header = dict(part.split("=", 1) for part in lines[0].split()[1:])
    d, n = int(header["d"]), int(header.get("n", -1))
    pos, index_set = 1, None
    if pos < len(lines) and lines[pos].startswith("index"):
        index_set = tuple(int(j) for j in lines[pos].split()[1:])
        pos += 1
    excursions = []
    while pos < len(lines):
        tag, size = lines[pos].split()
        if tag != "excursion":
            raise GeometryError(f"{path}: expected an excursion line, got {lines[pos]!r}")
        rows = [[int(c) for c in line.split()] for line in lines[pos + 1: pos + 1 + int(size)]]
        if any(len(r) != d for r in rows):
            raise GeometryError(f"{path}: excursion {len(excursions)} has a malformed site")
        excursions.append(Excursion(np.asarray(rows, dtype=np.int64).reshape(-1, d),
                                    (0, len(excursions))))
        pos += 1 + int(size)
    if n >= 0 and n != len(excursions):
        raise GeometryError(f"{path}: header announces {n} excursions, found {len(excursions)}")
    return Packet(tuple(excursions), index_set)

"""Vertex-by-vertex exploration of the cluster of x in 𝓥(Z_J) ∩ D_z.

The exploration reveals the smallest unexplored site on the outer boundary
of the explored part of the cluster, for a fixed site order (lexicographic
by default). Alongside it two triplets of masks, black/white/grey and their
tilde versions, record what has been revealed. When the exploration steps
onto a vacant site of ∂D_{y′,L₀} for a good fine cell y′, the boundary
clusters of that cell are revealed at once and the cell is either kept
grey (Case I) or revealed entirely (Case II); Case II encounters with grey
left in the cell are the good encounter times τ_k.
"""
from __future__ import annotations

import heapq
import itertools
import logging
import math
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np
from scipy import ndimage

from rilab import fixtures
from rilab.errors import GeometryError, ParameterError
from rilab.events import LocalBoxes, Source, local_boxes, lu_tilde, o_occ, script_c, v_z
from rilab.excursions import Packet
from rilab.interfaces import InterfaceResult, blocking_interfaces
from rilab.interlacements import NoiseField, VacantField
from rilab.lattice import Adjacency, Box, Site, SiteSet, label, structure, unit_vectors

logger = logging.getLogger(__name__)

Order = Callable[[Site], Any]


@dataclass(frozen=True)
class ExploreGeometry:
    """Boxes of scale N around z, the Σ scale L and the fine scale L₀.

    Fine cells are D_{y′,L₀} for y′ ∈ y + 7L₀Z^d; they tile Z^d. A cell is
    eligible when it lies in D_z and misses C̃_z.
    """

    z: Site
    N: int
    L: int
    L0: int
    y: Site

    def __post_init__(self):
        if min(self.N, self.L, self.L0) < 1:
            raise ParameterError("scales N, L and L0 must be positive")
        if len(self.y) != len(self.z):
            raise ParameterError("z and y must share the dimension")
        if any(c % self.L0 for c in self.y) or not local_boxes(
                (0,) * self.d, self.L0).D.contains(self.y):
            raise ParameterError(f"reference point {self.y} must lie in L0·Z^d ∩ D_(0,L0)")

    @property
    def d(self) -> int:
        return len(self.z)

    @property
    def boxes(self) -> LocalBoxes:
        return local_boxes(self.z, self.N)

    @property
    def window(self) -> Box:
        return self.boxes.D

    def cell(self, w: Sequence[int]) -> Site:
        """The y′ with w ∈ D_{y′,L₀}."""
        p = 7 * self.L0
        return tuple(int(yc + p * ((int(c) - yc + 3 * self.L0) // p))
                     for c, yc in zip(w, self.y, strict=True))

    def fine(self, y_prime: Sequence[int]) -> LocalBoxes:
        return local_boxes(y_prime, self.L0)

    def on_cell_face(self, w: Sequence[int]) -> bool:
        p = 7 * self.L0
        return any((int(c) - yc + 3 * self.L0) % p in (0, p - 1)
                   for c, yc in zip(w, self.y, strict=True))

    def eligible(self, y_prime: Sequence[int]) -> bool:
        D = self.fine(y_prime).D
        return D.inside(self.window) and D.intersect(self.boxes.C_tilde).is_empty()

    def cells(self) -> list[Site]:
        """Eligible fine cells, in lexicographic order."""
        p = 7 * self.L0
        W = self.window
        ranges = [range((lo - yc) // p - 1, (hi - yc) // p + 2)
                  for lo, hi, yc in zip(W.lo, W.hi, self.y, strict=True)]
        out = []
        for m in itertools.product(*ranges):
            y_prime = tuple(yc + p * k for yc, k in zip(self.y, m, strict=True))
            if self.eligible(y_prime):
                out.append(y_prime)
        return out

    def on_start_face(self, x: Sequence[int]) -> bool:
        """x ∈ ∂C̃_z."""
        Ct = self.boxes.C_tilde
        if not Ct.contains(x):
            return False
        return any(int(c) in (lo, hi - 1) for c, lo, hi in zip(x, Ct.lo, Ct.hi, strict=True))


def vacancy(source: Source, window: Box) -> np.ndarray:
    """𝓥 of a field or a packet over ``window``."""
    if isinstance(source, VacantField):
        if not window.inside(source.window):
            raise GeometryError(f"{window} leaves the field window {source.window}")
        return source.occupancy[window.slices(source.window)].copy()
    if isinstance(source, Packet):
        return source.occupation(window) == 0
    raise ParameterError(f"unsupported configuration {type(source).__name__}")


# good points -------------------------------------------------------------------------------


@dataclass
class GoodPointContext:
    """Σ on the L-lattice, its blocking layers and the good fine cells.

    Attributes:
        geometry: The exploration geometry
        sigma: Corners z′ ∈ LZ^d of Σ, shape ``(m, d)``
        layers: Blocking interfaces on the L-lattice (None when planted)
        script: Union of 𝒞_{z′,L} over the layers, over ``geometry.window``
        flags: Good flag per eligible fine cell
    """

    geometry: ExploreGeometry
    sigma: np.ndarray
    layers: InterfaceResult | None
    script: np.ndarray
    flags: dict[Site, bool]

    @property
    def good(self) -> frozenset[Site]:
        return frozenset(y for y, ok in self.flags.items() if ok)

    @classmethod
    def planted(cls, geometry: ExploreGeometry, good: Iterable[Sequence[int]]) -> GoodPointContext:
        """A context whose good cells are given directly."""
        good = {tuple(int(c) for c in y) for y in good}
        bad = [y for y in good if not geometry.eligible(y)]
        if bad:
            raise ParameterError(f"cell {bad[0]} is not eligible")
        flags = {y: y in good for y in geometry.cells()}
        return cls(geometry, np.zeros((0, geometry.d), dtype=np.int64), None,
                   np.zeros(geometry.window.shape, dtype=bool), flags)

    def same_as(self, other: GoodPointContext) -> bool:
        return (np.array_equal(self.sigma, other.sigma) and self.flags == other.flags
                and np.array_equal(self.script, other.script))


def _coarse_box(box: Box, L: int) -> Box:
    """Indices k with C_{kL,L} ∩ box ≠ ∅."""
    return Box(tuple(lo // L for lo in box.lo), tuple((hi - 1) // L + 1 for hi in box.hi))


def sigma_good_points(
    field_source: Source | Sequence[Source],
    packet: Source,
    occupation: Source,
    geometry: ExploreGeometry,
    delta: float = 0.0,
    noise: NoiseField | None = None,
    adjacency: Adjacency = "nn",
) -> GoodPointContext:
    """Build Σ, its blocking layers and the good fine cells.

    Args:
        field_source: Configuration (or triple) for the V_{z′,L} events and 𝒞_{z′,L}
        packet: Z_J, for L̃U_{y′,L₀}
        occupation: Z̄^u, for O_{y′,L₀}
        geometry: Exploration geometry
        delta: Noise level of the field events
        noise: Uniforms for delta > 0
        adjacency: Connectivity of the field events
    """
    g = geometry
    L, d = g.L, g.d
    Dt, Ct = g.boxes.D_tilde, g.boxes.C_tilde
    V_k = _coarse_box(Dt, L)
    U_k = _coarse_box(Ct, L)
    corners = []
    for k in itertools.product(*(range(lo, hi) for lo, hi in zip(V_k.lo, V_k.hi, strict=True))):
        zp = tuple(L * c for c in k)
        D = local_boxes(zp, L).D
        if D.inside(Dt) and D.intersect(Ct).is_empty():
            if v_z(field_source, zp, L, delta, noise, adjacency).verdict:
                corners.append(zp)
    sigma = np.asarray(corners, dtype=np.int64).reshape(-1, d)

    U = SiteSet.from_box(U_k, V_k)
    S = SiteSet.from_points(sigma // L, window=V_k, d=d)
    layers = blocking_interfaces(U, V_k, S)

    window = g.window
    script = np.zeros(window.shape, dtype=bool)
    if len(layers):
        for k in layers.union.coords:
            C = script_c(field_source, tuple(int(c) * L for c in k), L, delta, noise, adjacency)
            script |= C.reframe(window).mask

    flags = {}
    for yp in g.cells():
        fine = g.fine(yp)
        meets = bool(script[fine.C.slices(window)].any())
        flags[yp] = meets and lu_tilde(packet, yp, g.L0).verdict and o_occ(
            occupation, yp, g.L0).verdict
    logger.debug("Σ holds %d boxes, %d layers, %d of %d cells good", len(sigma), len(layers),
                 sum(flags.values()), len(flags))
    return GoodPointContext(g, sigma, layers, script, flags)


# exploration -------------------------------------------------------------------------------


@dataclass(frozen=True)
class Encounter:
    """One time τ̃ at which the exploration stepped onto ∂D_{y′,L₀} ∩ 𝓥 of a good cell."""

    n: int
    site: Site
    cell: Site
    first: bool
    grey_before: bool
    case: Literal["I", "II", "skip"]
    cell_vacant: bool

    @property
    def is_tau(self) -> bool:
        return self.case == "II" and self.grey_before


@dataclass
class ExplorationState:
    """Revelation sequence, both triplets and the encounter record.

    Masks are laid out over ``geometry.window``; outside it every site stays
    grey.
    """

    geometry: ExploreGeometry
    x: Site
    vacant: np.ndarray
    good: frozenset[Site]
    walk: list[Site] = field(default_factory=list)
    B: np.ndarray | None = None
    W: np.ndarray | None = None
    G: np.ndarray | None = None
    Bt: np.ndarray | None = None
    Wt: np.ndarray | None = None
    Gt: np.ndarray | None = None
    read: np.ndarray | None = None
    explored: np.ndarray | None = None
    encounters: list[Encounter] = field(default_factory=list)
    violations: list[str] = field(default_factory=list)
    order: Order | None = None

    @property
    def window(self) -> Box:
        return self.geometry.window

    @property
    def cluster(self) -> np.ndarray:
        """𝒞_J(x) as a mask."""
        return self.explored & self.vacant

    @property
    def taus(self) -> list[tuple[int, Site]]:
        return [(e.n, e.cell) for e in self.encounters if e.is_tau]

    @property
    def invariants_ok(self) -> bool:
        return not self.violations

    def snapshot(self) -> dict[str, Any]:
        return {
            "x": list(self.x),
            "steps": len(self.walk),
            "cluster_size": int(self.cluster.sum()),
            "encounters": [
                {"n": e.n, "site": list(e.site), "cell": list(e.cell), "case": e.case,
                 "first": e.first, "grey_before": e.grey_before}
                for e in self.encounters
            ],
            "taus": [[n, list(y)] for n, y in self.taus],
            "violations": list(self.violations),
        }


def _boundary_reveal(vac: np.ndarray, fine: LocalBoxes) -> np.ndarray:
    """∂D ∪ 𝒞_{∂D} ∪ its outer boundary in D ∖ C, over D."""
    nn = structure(vac.ndim, "nn")
    D = fine.D
    inside = np.ones(D.shape, dtype=bool)
    face = inside & ~ndimage.binary_erosion(inside, structure=nn, border_value=0)
    c_mask = fine.C.mask_in(D)
    occupied = ~vac & ~c_mask
    ids, _ = label(occupied, "nn")
    touching = np.unique(ids[face & occupied])
    clusters = np.isin(ids, touching[touching > 0])
    outer = ndimage.binary_dilation(clusters, structure=nn) & ~clusters & ~c_mask
    return face | clusters | outer


def _component_of(mask: np.ndarray, seed: np.ndarray) -> np.ndarray:
    ids, _ = label(mask, "nn")
    hit = np.unique(ids[seed & mask])
    return np.isin(ids, hit[hit > 0])


class _Explorer:
    """Runs one exploration; the state is filled in place."""

    def __init__(self, state: ExplorationState, check: bool):
        self.s = state
        self.check = check
        self.g = state.geometry
        self.lo = np.asarray(self.g.window.lo)
        shape = self.g.window.shape
        s = state
        s.B, s.W = np.zeros(shape, dtype=bool), np.zeros(shape, dtype=bool)
        s.G = np.ones(shape, dtype=bool)
        s.Bt, s.Wt = np.zeros(shape, dtype=bool), np.zeros(shape, dtype=bool)
        s.Gt = np.ones(shape, dtype=bool)
        s.read = np.zeros(shape, dtype=bool)
        s.explored = np.zeros(shape, dtype=bool)
        self.seen: set[Site] = set()

    def idx(self, w: Site) -> tuple[int, ...]:
        return tuple(int(c) - int(l) for c, l in zip(w, self.lo, strict=True))

    def flag(self, msg: str) -> None:
        if len(self.s.violations) < 100:
            self.s.violations.append(msg)

    def run(self) -> None:
        s, g = self.s, self.g
        key = s.order or (lambda site: site)
        steps = unit_vectors(g.d)
        heap = [(key(s.x), s.x)]
        queued = {s.x}
        n = 0
        while heap:
            _, w = heapq.heappop(heap)
            n += 1
            i = self.idx(w)
            s.walk.append(w)
            s.explored[i] = True
            s.read[i] = True
            vac = bool(s.vacant[i])
            y_prime = g.cell(w) if vac and g.on_cell_face(w) else None
            if y_prime is not None and y_prime in s.good:
                self.encounter(n, w, y_prime)
            else:
                self.generic(w, i)
            if vac:
                for step in steps:
                    v = tuple(int(a + b) for a, b in zip(w, step, strict=True))
                    if v not in queued and g.window.contains(v):
                        queued.add(v)
                        heapq.heappush(heap, (key(v), v))
        if self.check:
            self.check_partition(None, tilde=False)
            self.check_partition(None, tilde=True)

    def generic(self, w: Site, i: tuple[int, ...]) -> None:
        s = self.s
        if not s.G[i]:
            return
        cell = self.g.cell(w)
        grey_before = None
        if cell in self.seen:
            sl = self.g.fine(cell).D.slices(self.g.window)
            grey_before = bool(s.G[sl].any())
        s.G[i] = False
        (s.W if s.vacant[i] else s.B)[i] = True
        if self.check and grey_before is not None:
            still = bool(s.G[sl].any())
            if still:
                self.flag(f"revealed {w} in frozen cell {cell}")
            elif grey_before:
                self.flag(f"generic step emptied the grey part of cell {cell}")

    def encounter(self, n: int, w: Site, y_prime: Site) -> None:
        s, g = self.s, self.g
        fine = g.fine(y_prime)
        sl = fine.D.slices(g.window)
        vac = s.vacant[sl]
        c_mask = fine.C.mask_in(fine.D)
        grey_before = bool(s.G[sl].any())
        first = y_prime not in self.seen
        cell_vacant = bool(vac[c_mask].all())
        if first:
            self.seen.add(y_prime)
            R = _boundary_reveal(vac, fine)
            s.read[sl] |= R
            grey = s.G[sl] & ~R
            Bt = ~grey & ~vac
            Gt = _component_of(grey, c_mask)
            Wt = (~grey & vac) | (grey & ~Gt)
        elif grey_before:
            Bt, Wt, Gt = s.B[sl].copy(), s.W[sl].copy(), s.G[sl].copy()
        else:
            s.encounters.append(Encounter(n, w, y_prime, first, grey_before, "skip", cell_vacant))
            return
        s.Bt[sl], s.Wt[sl], s.Gt[sl] = Bt, Wt, Gt
        x_local = np.zeros(fine.D.shape, dtype=bool)
        x_local[tuple(int(c) - l for c, l in zip(w, fine.D.lo, strict=True))] = True
        linked = bool((_component_of(Gt | Wt, x_local) & c_mask).any())
        if self.check and grey_before and cell_vacant and (Gt & ~vac).any():
            self.flag(f"grey part of vacant cell {y_prime} holds occupied sites at step {n}")
        if linked:
            s.read[sl] |= Gt
            s.B[sl] = Bt | (Gt & ~vac)
            s.W[sl] = Wt | (Gt & vac)
            s.G[sl] = False
        else:
            s.B[sl], s.W[sl], s.G[sl] = Bt, Wt, Gt
        s.encounters.append(Encounter(n, w, y_prime, first, grey_before,
                                      "II" if linked else "I", cell_vacant))
        if self.check:
            self.check_partition(sl, tilde=False)
            self.check_partition(sl, tilde=True)

    def check_partition(self, sl, tilde: bool) -> None:
        s = self.s
        B, W, G = (s.Bt, s.Wt, s.Gt) if tilde else (s.B, s.W, s.G)
        if sl is not None:
            B, W, G, vac = B[sl], W[sl], G[sl], s.vacant[sl]
        else:
            vac = s.vacant
        name = "tilde triplet" if tilde else "triplet"
        total = B.astype(np.int8) + W + G
        if (total != 1).any():
            self.flag(f"{name} is not a partition")
        if (B & vac).any() or (W & ~vac).any():
            self.flag(f"{name} disagrees with the configuration")


def _explore(x: Site, vacant: np.ndarray, geometry: ExploreGeometry, good: frozenset[Site],
             order: Order | None, check: bool) -> ExplorationState:
    state = ExplorationState(geometry, x, vacant, good, order=order)
    _Explorer(state, check).run()
    return state


def _good_set(geometry: ExploreGeometry, good) -> frozenset[Site]:
    if good is None:
        return frozenset()
    if isinstance(good, GoodPointContext):
        return good.good
    cells = frozenset(tuple(int(c) for c in y) for y in good)
    bad = [y for y in cells if not geometry.eligible(y)]
    if bad:
        raise ParameterError(f"cell {bad[0]} is not eligible")
    return cells


def run_exploration(
    x: Sequence[int],
    source: Source,
    geometry: ExploreGeometry,
    good: GoodPointContext | Iterable[Sequence[int]] | None = None,
    order: Order | None = None,
    check: bool = True,
) -> ExplorationState:
    """Explore 𝒞_J(x) ∪ ∂^out 𝒞_J(x) inside D_z.

    Args:
        x: Start site on ∂C̃_z
        source: Z_J (a packet) or a vacant field covering D_z
        geometry: Boxes and scales
        good: Good fine cells (a context, an iterable of cells, or none)
        order: Sort key for sites (lexicographic when None)
        check: Verify the triplet invariants along the way

    Raises:
        ParameterError: If x is not on ∂C̃_z or a cell is not eligible
    """
    x = tuple(int(c) for c in x)
    if len(x) != geometry.d or not geometry.on_start_face(x):
        raise ParameterError(f"start {x} must lie on the inner boundary of C̃_z")
    vac = vacancy(source, geometry.window)
    state = _explore(x, vac, geometry, _good_set(geometry, good), order, check)
    logger.debug("exploration from %s: %d steps, %d encounters, %d good times", x,
                 len(state.walk), len(state.encounters), len(state.taus))
    return state


@dataclass
class EncounterReport:
    """(τ_k, Y_k) with the two instance checks of the encounter properties."""

    times: list[tuple[int, Site]]
    located: bool
    complete: bool
    connected: bool
    missing: list[Site] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.located and self.complete and self.connected


def encounter_times(state: ExplorationState,
                    ctx: GoodPointContext | None = None) -> EncounterReport:
    """Good encounter times of a finished exploration.

    Checks that every w_{τ_k} sits on ∂D_{Y_k} of a good cell, that every good
    cell whose C_{y′,L₀} meets the cluster is some Y_k, and that w_{τ_k} is
    joined to C_{Y_k} inside D_{Y_k} ∩ 𝓥 whenever C_{Y_k} is vacant.
    """
    g = state.geometry
    good = ctx.good if ctx is not None else state.good
    times = state.taus
    located = all(
        y in good and g.on_cell_face(state.walk[n - 1]) and g.cell(state.walk[n - 1]) == y
        for n, y in times
    )
    found = {y for _, y in times}
    cluster = state.cluster
    missing = [y for y in sorted(good)
               if cluster[g.fine(y).C.slices(g.window)].any() and y not in found]
    connected = True
    for n, y in times:
        fine = g.fine(y)
        sl = fine.D.slices(g.window)
        vac = state.vacant[sl]
        c_mask = fine.C.mask_in(fine.D)
        if not vac[c_mask].all():
            continue
        seed = np.zeros(fine.D.shape, dtype=bool)
        seed[tuple(int(c) - l for c, l in zip(state.walk[n - 1], fine.D.lo, strict=True))] = True
        if not (_component_of(vac, seed) & c_mask).any():
            connected = False
    return EncounterReport(times, located, not missing, connected, missing)


def encounter_threshold(a: float, m: int, c73: float | None = None) -> int:
    """⌈c·a·m⌉ with c = (2·70^d)⁻¹ in d = 3 unless overridden."""
    c73 = fixtures.get("c73") if c73 is None else c73
    return math.ceil(c73 * a * m)


def many_encounters(state: ExplorationState, a: float, m: int, c73: float | None = None) -> bool:
    """A_{J,y}(x): the ⌈c·a·m⌉-th good encounter time is finite."""
    return len(state.taus) >= encounter_threshold(a, m, c73)


# replay ------------------------------------------------------------------------------------


@dataclass
class ReplayReport:
    unchanged: bool
    checks: int
    mismatches: list[int] = field(default_factory=list)


def _resample_region(state: ExplorationState,
                     y_prime: Site) -> tuple[tuple[slice, ...], np.ndarray]:
    """Grey component of C_{y′} once the boundary clusters of D_{y′} are known."""
    g = state.geometry
    fine = g.fine(y_prime)
    sl = fine.D.slices(g.window)
    R = _boundary_reveal(state.vacant[sl], fine)
    return sl, _component_of(~R, fine.C.mask_in(fine.D))


def replay_check(state: ExplorationState, rng: np.random.Generator, rerandomize: bool = True,
                 perturb: bool = False, density: float | None = None) -> ReplayReport:
    """Rerun the exploration after changing data it must not depend on.

    For each good time τ_{k+1} with C_{Y_j} not vacant for j ≤ k, the sites of
    D_{Y_{k+1}} beyond its boundary clusters are redrawn and the first k + 1
    pairs (τ_j, Y_j) must come out the same. With ``perturb`` a revealed
    site (w at the first good time) is flipped instead, which should change
    the sequence.
    """
    taus = state.taus
    if not taus:
        return ReplayReport(True, 0)
    rerun = {"order": state.order, "check": False, "good": state.good,
             "geometry": state.geometry}
    if perturb:
        vac = state.vacant.copy()
        n, _ = taus[0]
        i = tuple(int(c) - l for c, l in zip(state.walk[n - 1], state.window.lo, strict=True))
        vac[i] = not vac[i]
        new = _explore(state.x, vac, **rerun).taus
        return ReplayReport(new == taus, 1, [] if new == taus else [0])
    if not rerandomize:
        new = _explore(state.x, state.vacant.copy(), **rerun).taus
        return ReplayReport(new == taus, 1, [] if new == taus else [0])
    p_vacant = float(state.vacant.mean()) if density is None else 1 - density
    vacant_cells = {e.cell for e in state.encounters if e.is_tau and e.cell_vacant}
    mismatches, checks = [], 0
    for k, (_, y_prime) in enumerate(taus):
        if any(y in vacant_cells for _, y in taus[:k]):
            break
        sl, region = _resample_region(state, y_prime)
        vac = state.vacant.copy()
        local = vac[sl]
        local[region] = rng.random(int(region.sum())) < p_vacant
        vac[sl] = local
        new = _explore(state.x, vac, **rerun).taus
        checks += 1
        if new[: k + 1] != taus[: k + 1]:
            mismatches.append(k)
    if mismatches:
        logger.warning("replay changed the good times at %s", mismatches)
    return ReplayReport(not mismatches, checks, mismatches)

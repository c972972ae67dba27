"""Percolation events read off vacant fields and excursion packets.

Three families:

* global events on V^u around the origin (Exist, Unique, SLU, LocUniq,
  2-arms, the truncated two-point indicator);
* box-local events of scale L attached to an anchor z (Dis_z, V_z, 𝒞_z);
* fine events of scale L₀ (LU, L̃U, O, FE, W⁻ and the set 𝒪₀⁻).

A configuration is either a ``VacantField`` (the actual V^u) or a ``Packet``
of excursions, whose vacant set 𝓥(Z) plays the same role. Boosted events
take the conjunction over a family of subpackets.
"""
from __future__ import annotations

import itertools
import logging
import math
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Any

import numpy as np
from scipy import ndimage

from rilab.errors import FamilySizeError, GeometryError, ParameterError
from rilab.excursions import FAMILY_CAP, Packet, PacketFamily
from rilab.interlacements import (
    FlipReport,
    InterlacementSample,
    NoiseField,
    VacantField,
    finite_cluster_indicator,
    noise_field,
    sample_process,
    vacant_field,
)
from rilab.lattice import Adjacency, AnnulusSpec, Box, SiteSet, inner_boundary, label, structure
from rilab.potential import EquilibriumMeasure, equilibrium_measure
from rilab.walks import WalkConfig

logger = logging.getLogger(__name__)

GLOBAL_EVENTS = frozenset({"exist", "unique", "slu", "locuniq", "two_arms", "tau_tr"})
BOX_LOCAL_EVENTS = frozenset({"dis", "v_z", "script_c"})
FINE_EVENTS = frozenset({"fe", "lu", "lu_tilde", "o_occ", "w_minus", "o_minus_set"})
ALL_EVENTS = GLOBAL_EVENTS | BOX_LOCAL_EVENTS | FINE_EVENTS

FRAME_SIDE_MIN = 6

Source = VacantField | Packet


def _index(x: Sequence[int], window: Box) -> tuple[int, ...]:
    return tuple(int(c) - l for c, l in zip(x, window.lo, strict=True))


# cluster labelings -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ClusterLabeling:
    """Component ids over a window; 0 marks sites outside the labeled set."""

    window: Box
    ids: np.ndarray
    count: int

    def id_at(self, x: Sequence[int]) -> int:
        if not self.window.contains(x):
            raise GeometryError(f"site {tuple(x)} lies outside {self.window}")
        return int(self.ids[_index(x, self.window)])

    def cluster(self, k: int) -> SiteSet:
        return SiteSet(self.window, self.ids == k)

    def ids_on(self, mask: np.ndarray) -> np.ndarray:
        """Distinct nonzero ids met by ``mask``."""
        found = np.unique(self.ids[mask])
        return found[found > 0]

    @cached_property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.ids.ravel(), minlength=self.count + 1)[1:]

    @cached_property
    def diameters(self) -> np.ndarray:
        """ℓ∞ diameter of cluster k at position k − 1."""
        out = np.zeros(self.count, dtype=np.int64)
        for k, sl in enumerate(ndimage.find_objects(self.ids)):
            if sl is not None:
                out[k] = max(s.stop - s.start for s in sl) - 1
        return out

    def large(self, min_diameter: float) -> np.ndarray:
        """Ids of clusters with diameter at least ``min_diameter``."""
        return np.nonzero(self.diameters >= min_diameter)[0] + 1


@lru_cache(maxsize=64)
def _label_field(f: VacantField, region: Box | None, adjacency: Adjacency,
                 occupied: bool) -> ClusterLabeling:
    mask = ~f.occupancy if occupied else f.occupancy
    window = f.window
    if region is not None:
        mask = mask[region.slices(window)]
        window = region
    ids, count = label(mask, adjacency)
    return ClusterLabeling(window, ids, int(count))


def label_clusters(
    field: VacantField | SiteSet,
    region: Box | SiteSet | None = None,
    adjacency: Adjacency = "nn",
    occupied: bool = False,
) -> ClusterLabeling:
    """Components of the vacant (or occupied) sites of ``field`` inside ``region``.

    A box region also becomes the window of the result; a site-set region
    only masks the field's window.

    Args:
        field: Vacant field, or a site set standing for its vacant sites
        region: Box or set to restrict to (the whole window when None)
        adjacency: "nn" or "star"
        occupied: Label the complement instead

    Raises:
        GeometryError: If the region leaves the field's window
    """
    if isinstance(region, Box) and not region.inside(field.window):
        raise GeometryError(f"region {region} leaves the window {field.window}")
    if isinstance(field, VacantField) and not isinstance(region, SiteSet):
        return _label_field(field, region, adjacency, occupied)
    if isinstance(field, VacantField):
        window, mask = field.window, field.occupancy
    elif isinstance(field, SiteSet):
        window, mask = field.window, field.mask
    else:
        raise ParameterError(f"cannot label a {type(field).__name__}")
    if occupied:
        mask = ~mask
    if isinstance(region, Box):
        mask = mask[region.slices(window)]
        window = region
    elif isinstance(region, SiteSet):
        mask = mask & region.reframe(window).mask
    ids, count = label(mask, adjacency)
    return ClusterLabeling(window, ids, int(count))


def _face(box: Box, window: Box) -> np.ndarray:
    """Inner boundary ∂box as a mask over ``window``."""
    inside = box.mask_in(window)
    if min(box.shape) <= 2:
        return inside
    return inside & ~box.expand(-1).mask_in(window)


def _crossings(mask: np.ndarray, region: np.ndarray, start: np.ndarray, target: np.ndarray,
               adjacency: Adjacency = "nn") -> tuple[np.ndarray, np.ndarray]:
    """Components of ``mask ∩ region`` meeting both ``start`` and ``target``.

    Returns the id array and the ids of the crossing components.
    """
    ids, _ = label(mask & region, adjacency)
    a = np.unique(ids[start])
    b = np.unique(ids[target])
    both = np.intersect1d(a, b)
    return ids, both[both > 0]


def _annulus_crossings(mask: np.ndarray, window: Box, inner: Box, outer: Box,
                       adjacency: Adjacency = "nn") -> tuple[np.ndarray, np.ndarray]:
    """Crossings of ``outer ∖ inner``: from ∂^out inner to ∂outer inside the annulus."""
    inner_mask = inner.mask_in(window)
    region = outer.mask_in(window) & ~inner_mask
    start = ndimage.binary_dilation(inner_mask, structure=structure(window.d, "nn")) & region
    return _crossings(mask, region, start, _face(outer, window) & region, adjacency)


def _single_component(values: np.ndarray) -> bool:
    """True iff ``values`` (component ids, 0 = missing) name at most one component."""
    values = np.unique(values)
    return len(values) == 0 or (len(values) == 1 and values[0] > 0)


# specs and results ------------------------------------------------------------------------


@dataclass(frozen=True)
class EventSpec:
    """Name and parameters of one event.

    Attributes:
        name: One of ``ALL_EVENTS``
        L: Scale of global and box-local events
        u: Level of the cluster configuration
        v: Level of the connecting configuration (defaults to u)
        delta: Noise level δ
        z: Anchor of box-local and fine events
        L0: Fine scale of LU, L̃U, O and FE
        L0_minus: Fine scale of W⁻ and 𝒪₀⁻ (at least 6)
        annulus: Region of LocUniq and 2-arms
        points: The pair (x, y) of the two-point indicator
        region: Anchor range of 𝒪₀⁻
        levels: (u₁, u₂, u₃) for V_z and 𝒞_z when the three configurations differ
        d: Dimension
        adjacency: Connectivity of clusters
    """

    name: str
    L: int = 0
    u: float = 0.0
    v: float | None = None
    delta: float = 0.0
    z: tuple[int, ...] | None = None
    L0: int = 0
    L0_minus: int = 0
    annulus: AnnulusSpec | None = None
    points: tuple[tuple[int, ...], tuple[int, ...]] | None = None
    region: Box | None = None
    levels: tuple[float, ...] = ()
    d: int = 3
    adjacency: Adjacency = "nn"

    def __post_init__(self):
        if self.name not in ALL_EVENTS:
            raise ParameterError(f"unknown event {self.name!r}")
        if self.u < 0 or (self.v is not None and self.v < 0):
            raise ParameterError("levels must be nonnegative")
        if not 0 <= self.delta < 0.5:
            raise ParameterError(f"noise level must lie in [0, 1/2), got {self.delta}")
        if self.z is not None:
            object.__setattr__(self, "z", tuple(int(c) for c in self.z))
            if len(self.z) != self.d:
                raise ParameterError(f"anchor {self.z} is not {self.d}-dimensional")
        needs_L = {"exist", "unique", "slu"} | BOX_LOCAL_EVENTS
        if self.name in needs_L and self.L < 1:
            raise ParameterError(f"{self.name} needs a scale L ≥ 1")
        if self.name in BOX_LOCAL_EVENTS | {"fe", "lu", "lu_tilde", "o_occ", "w_minus"} \
                and self.z is None:
            raise ParameterError(f"{self.name} needs an anchor z")
        if self.name in {"fe", "lu", "lu_tilde", "o_occ"} and self.L0 < 1:
            raise ParameterError(f"{self.name} needs a fine scale L0 ≥ 1")
        if self.name in {"w_minus", "o_minus_set"} and self.L0_minus < FRAME_SIDE_MIN:
            raise ParameterError(
                f"{self.name} needs L0_minus ≥ {FRAME_SIDE_MIN}, got {self.L0_minus}")
        if self.name == "o_minus_set" and self.region is None:
            raise ParameterError("o_minus_set needs an anchor region")
        if self.name in {"locuniq", "two_arms"} and self.annulus is None:
            raise ParameterError(f"{self.name} needs an annulus")
        if self.name == "tau_tr" and self.points is None:
            raise ParameterError("tau_tr needs the pair of points")
        if self.levels and len(self.levels) != 3:
            raise ParameterError("levels must be the triple (u1, u2, u3)")

    @property
    def v_level(self) -> float:
        return self.u if self.v is None else self.v

    def params(self) -> dict[str, Any]:
        """JSON-friendly parameters, skipping unset ones."""
        out: dict[str, Any] = {"d": self.d}
        for key in ("L", "u", "v", "delta", "L0", "L0_minus"):
            value = getattr(self, key)
            if value:
                out[key] = value
        if self.z is not None:
            out["z"] = list(self.z)
        if self.annulus is not None:
            out["annulus"] = {"kind": self.annulus.kind, "N": self.annulus.N,
                              "sigma": self.annulus.sigma}
        if self.points is not None:
            out["points"] = [list(p) for p in self.points]
        if self.levels:
            out["levels"] = list(self.levels)
        return out


@dataclass
class EventResult:
    """Verdict of one event, with certificates for auditing."""

    event: str
    verdict: bool
    witnesses: dict[str, Any] = field(default_factory=dict)
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.verdict


@dataclass(frozen=True, eq=False)
class Fields:
    """Configurations a global event is read from.

    Attributes:
        u_field: V^u
        v_field: V^v for Unique (defaults to ``u_field``)
        sample: The trajectories behind the fields, needed by SLU
    """

    u_field: VacantField | None = None
    v_field: VacantField | None = None
    sample: InterlacementSample | None = None

    @classmethod
    def from_sample(cls, s: InterlacementSample, u: float, v: float | None = None,
                    window: Box | None = None) -> Fields:
        u_field = vacant_field(s, u, window)
        v_field = u_field if v is None or v == u else vacant_field(s, v, window)
        return cls(u_field, v_field, s)


# global events ----------------------------------------------------------------------------


def _require(f: VacantField | None, box: Box, what: str) -> VacantField:
    if f is None:
        raise GeometryError(f"{what} needs a vacant field")
    if not box.inside(f.window):
        raise GeometryError(f"{what} needs {box}, the field covers {f.window}")
    return f


def exist(V: VacantField, L: int, adjacency: Adjacency = "nn") -> EventResult:
    """Exist(L, u): V^u ∩ B_L has a cluster of diameter at least L/5."""
    B = Box.ball(L, V.window.d)
    _require(V, B, "Exist")
    lab = label_clusters(V, B, adjacency)
    big = lab.large(L / 5)
    witnesses = {}
    if len(big):
        k = int(big[np.argmax(lab.diameters[big - 1])])
        witnesses = {"cluster": k, "diameter": int(lab.diameters[k - 1])}
    return EventResult("exist", bool(len(big)), witnesses,
                       {"clusters": lab.count, "large": len(big)})


def unique(V_u: VacantField, V_v: VacantField, L: int, adjacency: Adjacency = "nn") -> EventResult:
    """Unique(L, u, v): clusters of V^u ∩ B_L with diameter ≥ L/10 meet in V^v ∩ B_{2L}."""
    d = V_u.window.d
    B, B2 = Box.ball(L, d), Box.ball(2 * L, d)
    _require(V_u, B, "Unique")
    _require(V_v, B2, "Unique")
    lab_u = label_clusters(V_u, B, adjacency)
    lab_v = label_clusters(V_v, B2, adjacency)
    big = lab_u.large(L / 10)
    outer_ids = lab_v.ids[B.slices(B2)]
    values = outer_ids[np.isin(lab_u.ids, big)]
    verdict = _single_component(values)
    witnesses = {}
    if not verdict:
        # two large clusters landing in different components (or in none)
        seen: dict[int, int] = {}
        for k in big.tolist():
            targets = np.unique(outer_ids[lab_u.ids == k])
            for t in targets.tolist():
                seen.setdefault(t, k)
            if len(seen) > 1:
                break
        witnesses = {"clusters": sorted(set(seen.values())), "components": sorted(seen)}
    return EventResult("unique", verdict, witnesses, {"large": len(big)})


def _levels_touching(s: InterlacementSample, box: Box, u: float) -> list[float]:
    """0 and the labels ≤ u of trajectories with a recorded visit in ``box``."""
    levels = [0.0]
    for t in s.trajectories:
        if t.label <= u and len(t.sites) and box.contains_array(t.sites).any():
            levels.append(t.label)
    return sorted(set(levels))


def slu(s: InterlacementSample, L: int, u: float, adjacency: Adjacency = "nn") -> EventResult:
    """SLU_L(u): Unique(L, v, v) for every v ∈ [0, u].

    V^v ∩ B_{2L} only changes at labels of trajectories visiting B_{2L}, so
    checking those finitely many levels decides the event exactly.
    """
    if u > s.u_max:
        raise ParameterError(f"level {u} exceeds the sample's u_max {s.u_max}")
    B2 = Box.ball(2 * L, s.base.d)
    if not B2.inside(s.coverage):
        raise GeometryError(f"SLU needs {B2}, the sample covers {s.coverage}")
    levels = _levels_touching(s, B2, u)
    for i, v in enumerate(levels):
        V = vacant_field(s, v, B2)
        res = unique(V, V, L, adjacency)
        if not res.verdict:
            return EventResult("slu", False, {"level": v, **res.witnesses},
                               {"levels": len(levels), "checked": i + 1})
    return EventResult("slu", True, {}, {"levels": len(levels), "checked": len(levels)})


def slu_on_grid(s: InterlacementSample, L: int, u: float, points: int = 200,
                adjacency: Adjacency = "nn") -> bool:
    """SLU checked on an even grid of ``points`` levels in [0, u]."""
    B2 = Box.ball(2 * L, s.base.d)
    for v in np.linspace(0.0, u, points):
        V = vacant_field(s, float(v), B2)
        if not unique(V, V, L, adjacency).verdict:
            return False
    return True


def _anchors_meeting(occupied: np.ndarray, window: Box, region: Box, L: int) -> np.ndarray:
    """Anchors z ∈ region whose D_z = [z − 3L, z + 4L) holds an occupied site."""
    side = 7 * L
    hit = np.lib.stride_tricks.sliding_window_view(occupied, (side,) * window.d)
    hit = hit.any(axis=tuple(range(window.d, 2 * window.d)))
    anchors = np.argwhere(hit) + np.asarray(window.lo) + 3 * L
    return anchors[region.contains_array(anchors)]


def gluing_check(s: InterlacementSample, L: int, u: float, L_fine: int | None = None,
                 adjacency: Adjacency = "nn") -> EventResult:
    """V_{z,L′} on every prefix configuration for all z ∈ B_{2L}, beside SLU_L(u).

    The prefixes that matter are V^v at the levels where V^v changes, so the
    anchor events are read off those fields. An anchor whose D_z is entirely
    vacant satisfies V_z trivially and is skipped. The verdict is the
    conjunction over anchors; ``diagnostics["slu"]`` carries SLU_L(u).

    Raises:
        GeometryError: If the sample does not cover B_{2L} with its D boxes
    """
    L_fine = L_fine or max(1, L // 50)
    d = s.base.d
    region = Box.ball(2 * L, d)
    window = region.expand(4 * L_fine)
    if not window.inside(s.coverage):
        raise GeometryError(f"gluing needs {window}, the sample covers {s.coverage}")
    levels = _levels_touching(s, window, u)[1:] or [u]
    evaluated = 0
    failed = None
    for v in levels:
        V = vacant_field(s, v, window)
        occupied = ~V.occupancy
        for z in _anchors_meeting(occupied, window, region, L_fine):
            evaluated += 1
            C = Box(tuple(z), tuple(z + L_fine))
            if occupied[C.slices(window)].all() or not v_z(V, z, L_fine,
                                                             adjacency=adjacency).verdict:
                failed = {"anchor": tuple(int(c) for c in z), "level": v}
                break
        if failed:
            break
    result = slu(s, L, u, adjacency)
    logger.debug("gluing at L=%d, L'=%d: %d anchor events over %d levels", L, L_fine,
                 evaluated, len(levels))
    return EventResult("gluing", failed is None, failed or {},
                       {"slu": result.verdict, "evaluated": evaluated, "levels": len(levels),
                        "L_fine": L_fine})


def annulus_crossings(V: VacantField, annulus: AnnulusSpec,
                      adjacency: Adjacency = "nn") -> tuple[np.ndarray, np.ndarray]:
    """Clusters of V ∩ Λ_N joining the inner set to the outer boundary."""
    d = V.window.d
    outer = annulus.outer(d)
    if len(outer) and not outer.bounding_box().inside(V.window):
        raise GeometryError(f"annulus {annulus.kind} N={annulus.N} leaves {V.window}")
    outer_mask = outer.reframe(V.window).mask
    inner_mask = annulus.inner(d).reframe(V.window).mask
    region = annulus.region(d).reframe(V.window).mask
    target = inner_boundary(SiteSet(V.window, outer_mask)).mask & region
    if annulus.kind == "euclidean-ball":
        start = inner_mask
    else:
        start = ndimage.binary_dilation(inner_mask, structure=structure(d, "nn")) & region
    return _crossings(V.occupancy, region, start, target, adjacency)


def locuniq(V: VacantField, annulus: AnnulusSpec, adjacency: Adjacency = "nn") -> EventResult:
    """LocUniq: exactly one cluster of V^u ∩ Λ_N crosses Λ_N."""
    _, crossing = annulus_crossings(V, annulus, adjacency)
    return EventResult("locuniq", len(crossing) == 1, {"crossing": crossing.tolist()},
                       {"crossings": len(crossing)})


def two_arms(V: VacantField, annulus: AnnulusSpec, adjacency: Adjacency = "nn") -> EventResult:
    """2-arms: two crossings of Λ_N not connected inside V^u ∩ Λ_N."""
    _, crossing = annulus_crossings(V, annulus, adjacency)
    return EventResult("two_arms", len(crossing) >= 2, {"crossing": crossing.tolist()},
                       {"crossings": len(crossing)})


def connected(V: VacantField, x: Sequence[int], y: Sequence[int],
              adjacency: Adjacency = "nn") -> bool:
    """x ↔ y inside the vacant sites of the field's window."""
    lab = label_clusters(V, None, adjacency)
    a, b = lab.id_at(x), lab.id_at(y)
    return a > 0 and a == b


def tau_tr(V: VacantField, x: Sequence[int], y: Sequence[int],
           adjacency: Adjacency = "nn") -> EventResult:
    """x ↔ y in V^v while the cluster of x stays finite (window-face proxy)."""
    linked = connected(V, x, y, adjacency)
    finite = finite_cluster_indicator(V, x)
    return EventResult("tau_tr", linked and finite, {}, {"connected": linked, "finite": finite})


def eval_global(spec: EventSpec, fields: Fields) -> EventResult:
    """Evaluate a global event.

    Raises:
        GeometryError: If the fields do not cover the event's boxes
        ParameterError: If the event is not global
    """
    name = spec.name
    if name not in GLOBAL_EVENTS:
        raise ParameterError(f"{name} is not a global event")
    if name == "slu":
        if fields.sample is None:
            raise GeometryError("SLU needs the trajectories behind the field")
        return slu(fields.sample, spec.L, spec.u, spec.adjacency)
    V = fields.u_field
    if V is None:
        raise GeometryError(f"{name} needs a vacant field")
    if name == "exist":
        return exist(V, spec.L, spec.adjacency)
    if name == "unique":
        return unique(V, fields.v_field or V, spec.L, spec.adjacency)
    if name == "locuniq":
        return locuniq(V, spec.annulus, spec.adjacency)
    if name == "two_arms":
        return two_arms(V, spec.annulus, spec.adjacency)
    x, y = spec.points
    return tau_tr(fields.v_field or V, x, y, spec.adjacency)


# configurations -----------------------------------------------------------------------------


def _occupation(source: Source, window: Box) -> np.ndarray:
    if isinstance(source, Packet):
        return source.occupation(window)
    if isinstance(source, VacantField):
        if not window.inside(source.window):
            raise GeometryError(f"{window} leaves the field window {source.window}")
        return source.occupation[window.slices(source.window)]
    raise ParameterError(f"unsupported configuration {type(source).__name__}")


def _vacant(source: Source, window: Box, delta: float = 0.0,
            noise: NoiseField | None = None) -> np.ndarray:
    """(𝓥(Z))_δ ∩ window as a mask."""
    if isinstance(source, VacantField):
        if not window.inside(source.window):
            raise GeometryError(f"{window} leaves the field window {source.window}")
        mask = source.occupancy[window.slices(source.window)]
    else:
        mask = _occupation(source, window) == 0
    if delta > 0:
        if noise is None:
            raise ParameterError("a positive noise level needs a noise field")
        if not delta < 1:
            raise ParameterError(f"noise level {delta} must stay below 1")
        mask = mask & (noise.uniforms[window.slices(noise.window)] >= delta)
    return mask


@dataclass(frozen=True)
class LocalBoxes:
    """C ⊂ C̃ ⊂ D̃ ⊂ D of one scale around an anchor."""

    C: Box
    C_tilde: Box
    D_tilde: Box
    D: Box


def local_boxes(z: Sequence[int], L: int) -> LocalBoxes:
    if L < 1:
        raise ParameterError(f"scale must be at least 1, got {L}")

    def cube(a: int, b: int) -> Box:
        return Box(tuple(int(c) + a for c in z), tuple(int(c) + b for c in z))

    return LocalBoxes(cube(0, L), cube(-L, 2 * L), cube(-2 * L, 3 * L), cube(-3 * L, 4 * L))


def _triple(source: Source | Sequence[Source]) -> tuple[Source, Source, Source]:
    if isinstance(source, VacantField | Packet):
        return source, source, source
    parts = tuple(source)
    if len(parts) != 3:
        raise ParameterError("box-local events take one configuration or a triple")
    return parts


# box-local events -----------------------------------------------------------------------------


def dis(source: Source, z: Sequence[int], L: int, delta: float = 0.0,
        noise: NoiseField | None = None, adjacency: Adjacency = "nn") -> EventResult:
    """Dis_z: C̃_z is not connected to ∂D̃_z in the configuration."""
    b = local_boxes(z, L)
    window = b.D_tilde
    mask = _vacant(source, window, delta, noise)
    ids, linked = _crossings(mask, np.ones(window.shape, dtype=bool), b.C_tilde.mask_in(window),
                             _face(window, window), adjacency)
    witnesses = {}
    if len(linked):
        site = np.argwhere(ids == linked[0])[0] + np.asarray(window.lo)
        witnesses = {"crossing_site": tuple(int(c) for c in site)}
    return EventResult("dis", not len(linked), witnesses, {"crossings": len(linked)})


def v_z(source: Source | Sequence[Source], z: Sequence[int], L: int, delta: float = 0.0,
        noise: NoiseField | None = None, adjacency: Adjacency = "nn") -> EventResult:
    """V_z(Z, Z′, Z″, δ).

    C_z ↔ ∂D_z in (𝓥(Z″))_{2δ}, and all clusters of D_z ∩ (𝓥(Z′))_{2δ}
    crossing D̃_z ∖ C̃_z are connected inside D_z ∩ (𝓥(Z))_δ.
    """
    Z, Z1, Z2 = _triple(source)
    b = local_boxes(z, L)
    window = b.D
    X = _vacant(Z, window, delta, noise)
    X1 = _vacant(Z1, window, 2 * delta, noise)
    X2 = _vacant(Z2, window, 2 * delta, noise)
    everywhere = np.ones(window.shape, dtype=bool)

    _, reach = _crossings(X2, everywhere, b.C.mask_in(window), _face(window, window), adjacency)
    reaches = bool(len(reach))

    ids1, _ = label(X1, adjacency)
    path_ids, crossing = _annulus_crossings(X1, window, b.C_tilde, b.D_tilde, adjacency)
    carriers = np.unique(ids1[np.isin(path_ids, crossing)])
    members = np.isin(ids1, carriers[carriers > 0])
    ids, _ = label(X, adjacency)
    glued = _single_component(ids[members])
    return EventResult(
        "v_z", reaches and glued,
        {"crossing_clusters": len(carriers[carriers > 0])},
        {"reaches": reaches, "glued": glued},
    )


def script_c(source: Source | Sequence[Source], z: Sequence[int], L: int, delta: float = 0.0,
             noise: NoiseField | None = None, adjacency: Adjacency = "nn") -> SiteSet:
    """𝒞_z(Z, Z′, δ): clusters of D_z ∩ (𝓥(Z))_δ holding a crossing in (𝓥(Z′))_{2δ}."""
    Z, Z1, _ = _triple(source)
    b = local_boxes(z, L)
    window = b.D
    X = _vacant(Z, window, delta, noise)
    X1 = _vacant(Z1, window, 2 * delta, noise)
    ids, _ = label(X, adjacency)
    path_ids, crossing = _annulus_crossings(X & X1, window, b.C_tilde, b.D_tilde, adjacency)
    carriers = np.unique(ids[np.isin(path_ids, crossing)])
    return SiteSet(window, np.isin(ids, carriers[carriers > 0]))


def eval_box_local(spec: EventSpec, source: Source | Sequence[Source],
                   noise: NoiseField | None = None) -> EventResult:
    """Evaluate Dis_z, V_z or 𝒞_z on a field, a packet or a triple of them.

    Raises:
        GeometryError: If a field does not cover D_z
        ParameterError: If the event is not box-local
    """
    if spec.name == "dis":
        single = source if isinstance(source, VacantField | Packet) else _triple(source)[0]
        return dis(single, spec.z, spec.L, spec.delta, noise, spec.adjacency)
    if spec.name == "v_z":
        return v_z(source, spec.z, spec.L, spec.delta, noise, spec.adjacency)
    if spec.name == "script_c":
        C = script_c(source, spec.z, spec.L, spec.delta, noise, spec.adjacency)
        return EventResult("script_c", bool(len(C)), {"set": C}, {"size": len(C)})
    raise ParameterError(f"{spec.name} is not a box-local event")


# fine events ------------------------------------------------------------------------------


def lu(source: Source, y: Sequence[int], L0: int, adjacency: Adjacency = "nn") -> EventResult:
    """LU_y(Z): 𝓘(Z) sites of D̃_y ∖ C̃_y connected in 𝓘(Z) ∩ (D_y ∖ (∂D_y ∪ C_y))."""
    b = local_boxes(y, L0)
    window = b.D
    occupied = _occupation(source, window) > 0
    region = occupied & ~_face(window, window) & ~b.C.mask_in(window)
    ids, _ = label(region, adjacency)
    annulus = b.D_tilde.mask_in(window) & ~b.C_tilde.mask_in(window) & occupied
    verdict = _single_component(ids[annulus])
    return EventResult("lu", verdict, {}, {"components": len(np.unique(ids[annulus]))})


def o_occ(source: Source, y: Sequence[int], L0: int) -> EventResult:
    """O_y(Z): ℓ_x(Z) ≤ L₀ on ∂D_y."""
    window = local_boxes(y, L0).D
    ell = _occupation(source, window)[_face(window, window)]
    peak = int(ell.max()) if ell.size else 0
    return EventResult("o_occ", peak <= L0, {}, {"max_occupation": peak})


def fe(source: Source, y: Sequence[int], L0: int, adjacency: Adjacency = "nn") -> EventResult:
    """FE_y = LU_y ∩ O_y."""
    a = lu(source, y, L0, adjacency)
    b = o_occ(source, y, L0)
    return EventResult("fe", a.verdict and b.verdict, {},
                       {"lu": a.verdict, "o_occ": b.verdict, **b.diagnostics})


def boundary_clusters(source: Source, y: Sequence[int], L0: int,
                      adjacency: Adjacency = "nn") -> SiteSet:
    """𝒞_{∂D_y}(Z): components of 𝓘(Z) ∩ (D_y ∖ C_y) through ∂D_y."""
    b = local_boxes(y, L0)
    window = b.D
    occupied = (_occupation(source, window) > 0) & ~b.C.mask_in(window)
    ids, _ = label(occupied, adjacency)
    face = _face(window, window)
    touching = np.unique(ids[face & occupied])
    return SiteSet(window, np.isin(ids, touching[touching > 0]))


def lu_tilde(source: Source, y: Sequence[int], L0: int,
             adjacency: Adjacency = "nn") -> EventResult:
    """L̃U_y(Z): 𝒞_{∂D_y}(Z) ∖ ∂D_y has at most one component meeting D̃_y ∖ C̃_y."""
    b = local_boxes(y, L0)
    window = b.D
    S = boundary_clusters(source, y, L0, adjacency)
    ids, _ = label(S.mask & ~_face(window, window), adjacency)
    annulus = b.D_tilde.mask_in(window) & ~b.C_tilde.mask_in(window)
    found = np.unique(ids[annulus])
    found = found[found > 0]
    return EventResult("lu_tilde", len(found) <= 1, {}, {"components": len(found)})


@lru_cache(maxsize=16)
def _frame(side: int, d: int) -> np.ndarray:
    """□(0, side): sites of the cube with at least two coordinates near a face."""
    if side < FRAME_SIDE_MIN:
        raise ParameterError(f"frames need a side of at least {FRAME_SIDE_MIN}, got {side}")
    near = np.zeros(side, dtype=np.int64)
    near[[0, 1, 2, side - 3, side - 2, side - 1]] = 1
    grids = np.meshgrid(*([near] * d), indexing="ij")
    return sum(grids) >= 2


def o_minus_set(source: Source, L0_minus: int, region: Box) -> SiteSet:
    """𝒪₀⁻(Z) ∩ region: anchors y ∈ L₀⁻Z^d where W⁻_y(Z) holds.

    A cube C_z is good when its frame □(z, L₀⁻) is vacant and the occupation
    summed over ∂C_z is at most (L₀⁻)^{d−1}; W⁻_y asks this of the 3^d
    cubes with |z − y|∞ ≤ L₀⁻.
    """
    Lm = L0_minus
    d = region.d
    frame = _frame(Lm, d)
    cube = Box((0,) * d, (Lm,) * d)
    face = _face(cube, cube)
    lo = [math.ceil(l / Lm) - 1 for l in region.lo]
    hi = [(h - 1) // Lm + 1 for h in region.hi]
    counts = [max(b - a + 1, 0) for a, b in zip(lo, hi, strict=True)]
    if min(counts) < 3:
        return SiteSet.empty(region)
    window = Box(tuple(a * Lm for a in lo), tuple((b + 1) * Lm for b in hi))
    ell = _occupation(source, window)
    vacant = ell == 0
    good = np.zeros(counts, dtype=bool)
    budget = Lm ** (d - 1)
    for k in itertools.product(*(range(c) for c in counts)):
        sl = tuple(slice(i * Lm, (i + 1) * Lm) for i in k)
        good[k] = bool(vacant[sl][frame].all()) and int(ell[sl][face].sum()) <= budget
    around = ndimage.minimum_filter(good.astype(np.uint8), size=3, mode="constant", cval=0)
    anchors = []
    for k in zip(*np.nonzero(around), strict=True):
        y = tuple((a + int(i)) * Lm for a, i in zip(lo, k, strict=True))
        if region.contains(y):
            anchors.append(y)
    return SiteSet.from_points(anchors, window=region, d=d)


def w_minus(source: Source, y: Sequence[int], L0_minus: int) -> EventResult:
    """W⁻_y(Z) at an anchor y ∈ L₀⁻Z^d."""
    y = tuple(int(c) for c in y)
    if any(c % L0_minus for c in y):
        raise ParameterError(f"anchor {y} is not on the lattice {L0_minus}Z^d")
    here = Box(y, tuple(c + 1 for c in y))
    return EventResult("w_minus", y in o_minus_set(source, L0_minus, here))


def eval_fine(spec: EventSpec, source: Source) -> EventResult:
    """Evaluate a fine event on a packet or a field.

    Raises:
        GeometryError: If a field does not cover the event's boxes
        ParameterError: If the event is not a fine event
    """
    name = spec.name
    if name == "lu":
        return lu(source, spec.z, spec.L0, spec.adjacency)
    if name == "o_occ":
        return o_occ(source, spec.z, spec.L0)
    if name == "fe":
        return fe(source, spec.z, spec.L0, spec.adjacency)
    if name == "lu_tilde":
        return lu_tilde(source, spec.z, spec.L0, spec.adjacency)
    if name == "w_minus":
        return w_minus(source, spec.z, spec.L0_minus)
    if name == "o_minus_set":
        found = o_minus_set(source, spec.L0_minus, spec.region)
        lo = [math.ceil(l / spec.L0_minus) for l in spec.region.lo]
        hi = [(h - 1) // spec.L0_minus for h in spec.region.hi]
        candidates = math.prod(max(b - a + 1, 0) for a, b in zip(lo, hi, strict=True))
        return EventResult("o_minus_set", len(found) == candidates, {"set": found},
                           {"size": len(found), "candidates": candidates})
    raise ParameterError(f"{name} is not a fine event")


# boosted events -----------------------------------------------------------------------------


Evaluator = Callable[[EventSpec, Packet], EventResult]


def _default_evaluator(noise: NoiseField | None) -> Evaluator:
    def evaluate(spec: EventSpec, packet: Packet) -> EventResult:
        if spec.name in BOX_LOCAL_EVENTS:
            return eval_box_local(spec, packet, noise)
        if spec.name in FINE_EVENTS:
            return eval_fine(spec, packet)
        raise ParameterError(f"{spec.name} cannot be boosted over packets")
    return evaluate


def eval_boosted(
    spec: EventSpec,
    base: Packet,
    family: PacketFamily | Iterable[Sequence[int]],
    evaluate: Evaluator | None = None,
    noise: NoiseField | None = None,
    cap: int = FAMILY_CAP,
) -> EventResult:
    """E(ζ): the event holds for every subpacket of ``base`` indexed by the family.

    Stops at the first failing member and returns its index set as witness.

    Raises:
        FamilySizeError: If the family has more than ``cap`` members
        ParameterError: If the family was built for another base size
    """
    if isinstance(family, PacketFamily):
        if family.n != len(base):
            raise ParameterError(f"family over {family.n} excursions, packet has {len(base)}")
        size = family.count()
        if size > cap:
            raise FamilySizeError(size, cap)
        members: Iterable[Sequence[int]] = family
    else:
        members = list(family)
        size = len(members)
        if size > cap:
            raise FamilySizeError(size, cap)
    evaluate = evaluate or _default_evaluator(noise)
    checked = 0
    for J in members:
        checked += 1
        result = evaluate(spec, base.subpacket(J))
        if not result.verdict:
            return EventResult(spec.name, False, {"index_set": tuple(J), "failure": result},
                               {"checked": checked, "family_size": size})
    return EventResult(spec.name, True, {}, {"checked": checked, "family_size": size})


# experiments ----------------------------------------------------------------------------------


def event_window(spec: EventSpec) -> Box:
    """Smallest box the event reads when evaluated on V^u."""
    d = spec.d
    name = spec.name
    if name == "exist":
        return Box.ball(spec.L, d)
    if name in ("unique", "slu"):
        return Box.ball(2 * spec.L, d)
    if name in ("locuniq", "two_arms"):
        return spec.annulus.outer(d, margin=1).window
    if name == "tau_tr":
        return Box.bounding(np.asarray(spec.points)).expand(max(spec.L, 1))
    if name in BOX_LOCAL_EVENTS:
        return local_boxes(spec.z, spec.L).D
    if name in ("lu", "o_occ", "fe", "lu_tilde"):
        return local_boxes(spec.z, spec.L0).D
    Lm = spec.L0_minus
    if name == "w_minus":
        return Box(tuple(c - Lm for c in spec.z), tuple(c + 2 * Lm for c in spec.z))
    lo = [(math.ceil(l / Lm) - 1) * Lm for l in spec.region.lo]
    hi = [((h - 1) // Lm + 2) * Lm for h in spec.region.hi]
    return Box(tuple(lo), tuple(hi))


@lru_cache(maxsize=32)
def box_measure(box: Box) -> EquilibriumMeasure:
    """Exact e_B of a box, shared by all trials on that box."""
    return equilibrium_measure(SiteSet.from_box(box))


def event_trial(spec: EventSpec, rng: np.random.Generator, cfg: WalkConfig | None = None,
                measure: EquilibriumMeasure | None = None) -> EventResult:
    """Sample V on the event's window and evaluate the event once."""
    window = event_window(spec)
    measure = measure or box_measure(window)
    levels = [spec.u, spec.v_level, *spec.levels]
    u_max = max(max(levels), 1e-12)
    noise_rng, walk_rng = rng.spawn(2)
    s = sample_process(measure.base, u_max, cfg, walk_rng, measure=measure)
    name = spec.name
    if name in GLOBAL_EVENTS:
        return eval_global(spec, Fields.from_sample(s, spec.u, spec.v))
    if name in BOX_LOCAL_EVENTS:
        noise = noise_field(window, noise_rng) if spec.delta > 0 else None
        if spec.levels:
            source = tuple(vacant_field(s, w) for w in spec.levels)
        else:
            source = vacant_field(s, spec.u)
        return eval_box_local(spec, source, noise)
    return eval_fine(spec, vacant_field(s, spec.u))


@dataclass
class ArmReport:
    """Frequency of 0 ↔ ∂B_R in V^u."""

    R: int
    u: float
    trials: int = 0
    hits: int = 0

    @property
    def estimate(self) -> float:
        return self.hits / self.trials if self.trials else 0.0

    @property
    def stderr(self) -> float:
        p = self.estimate
        return math.sqrt(p * (1 - p) / self.trials) if self.trials else 0.0


def arm_event(V: VacantField, R: int, adjacency: Adjacency = "nn") -> bool:
    """0 ↔ ∂B_R inside V ∩ B_R."""
    B = Box.ball(R, V.window.d)
    _require(V, B, "the one-arm event")
    mask = V.occupancy[B.slices(V.window)]
    start = np.zeros(B.shape, dtype=bool)
    start[_index((0,) * B.d, B)] = True
    _, linked = _crossings(mask, np.ones(B.shape, dtype=bool), start, _face(B, B), adjacency)
    return bool(len(linked))


def one_arm(R: int, u: float, trials: int, rng: np.random.Generator, d: int = 3,
            cfg: WalkConfig | None = None) -> ArmReport:
    """Estimate P[0 ↔ ∂B_R in V^u]."""
    if R < 1 or trials < 0:
        raise ParameterError("one-arm needs R ≥ 1 and a nonnegative trial count")
    box = Box.ball(R, d)
    measure = box_measure(box)
    report = ArmReport(R, u)
    for _ in range(trials):
        s = sample_process(measure.base, u, cfg, rng, measure=measure)
        report.trials += 1
        report.hits += int(arm_event(vacant_field(s, u), R))
    logger.debug("one-arm R=%d u=%g: %d/%d", R, u, report.hits, report.trials)
    return report


@dataclass
class TwoPointReport:
    """τ^tr_u(x, y) with the finite-cluster proxy read on two nested windows."""

    x: tuple[int, ...]
    y: tuple[int, ...]
    u: float
    trials: int = 0
    hits: int = 0
    flips: FlipReport | None = None

    @property
    def estimate(self) -> float:
        return self.hits / self.trials if self.trials else 0.0

    @property
    def stderr(self) -> float:
        p = self.estimate
        return math.sqrt(p * (1 - p) / self.trials) if self.trials else 0.0


def two_point(x: Sequence[int], y: Sequence[int], u: float, trials: int,
              rng: np.random.Generator, margin: int = 8,
              cfg: WalkConfig | None = None) -> TwoPointReport:
    """Estimate τ^tr_u(x, y).

    The proxy "x's cluster avoids the window faces" is read on the box
    around x and y expanded by ``margin`` and on a second box expanded by
    another ``margin``; the flip rate between the two bounds the proxy error.
    """
    x = tuple(int(c) for c in x)
    y = tuple(int(c) for c in y)
    if margin < 1 or trials < 0:
        raise ParameterError("two-point needs a positive margin and a nonnegative trial count")
    inner = Box.bounding(np.asarray([x, y])).expand(margin)
    outer = inner.expand(margin)
    measure = box_measure(outer)
    report = TwoPointReport(x, y, u, flips=FlipReport(inner, outer))
    for _ in range(trials):
        s = sample_process(measure.base, u, cfg, rng, measure=measure)
        V_out = vacant_field(s, u)
        V_in = V_out.restrict(inner)
        small = finite_cluster_indicator(V_in, x)
        report.flips.add(small, finite_cluster_indicator(V_out, x))
        report.trials += 1
        report.hits += int(small and connected(V_in, x, y))
    return report

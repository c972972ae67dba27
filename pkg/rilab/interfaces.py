"""Blocking interfaces O_1 ⪯ … ⪯ O_ℓ inside Σ.

Starting from U, each round floods the component of the current set in
V ∖ Σ_k, takes the *-component of Σ_k containing its exterior boundary as
the next layer and removes it from Σ_k. Rounds stop once the flood reaches
∂V. Everything runs on a boolean array over V widened by a margin.
"""
from __future__ import annotations

import itertools
import logging
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from rilab.errors import ParameterError
from rilab.lattice import Box, SiteSet, is_connected, label, structure, surrounds, unit_vectors

logger = logging.getLogger(__name__)

MARGIN = 2


@dataclass
class InterfaceResult:
    """Layers O_1..O_ℓ with the flood 𝒞_{U_{k−1}} and its exterior boundary per round."""

    window: Box
    layers: list[SiteSet]
    trace: list[tuple[SiteSet, SiteSet]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.layers)

    @property
    def union(self) -> SiteSet:
        mask = np.zeros(self.window.shape, dtype=bool)
        for O in self.layers:
            mask |= O.mask
        return SiteSet(self.window, mask)


def _face(V: Box, window: Box) -> np.ndarray:
    """∂V, the sites of V with a neighbour outside V."""
    inside = V.mask_in(window)
    return inside & ~ndimage.binary_erosion(inside, structure=structure(V.d, "nn"))


def _inputs(U: SiteSet, V: Box, sigma: SiteSet,
            check_u: bool = True) -> tuple[Box, np.ndarray, np.ndarray, np.ndarray]:
    if U.d != V.d or sigma.d != V.d:
        raise ParameterError("U, V and Σ must share the dimension")
    window = V.expand(MARGIN)
    inside = V.mask_in(window)
    if not len(U):
        raise ParameterError("U must be nonempty")
    if not V.contains_array(U.coords).all():
        raise ParameterError("U must lie inside V")
    if check_u and not is_connected(U, "star"):
        raise ParameterError("U must be *-connected")
    u = U.reframe(window).mask
    s = sigma.reframe(window).mask if len(sigma) else np.zeros(window.shape, dtype=bool)
    if (s & ~inside).any() or (s & u).any():
        raise ParameterError("Σ must lie in V ∖ U")
    return window, inside, u, s


def _flood(seed: np.ndarray, free: np.ndarray) -> np.ndarray:
    """Sites nn-connected to ``seed`` through ``free`` (``seed`` included)."""
    labels, _ = label(free | seed, "nn")
    ids = np.unique(labels[seed])
    return np.isin(labels, ids[ids > 0])


def blocking_interfaces(U: SiteSet, V: Box, sigma: SiteSet) -> InterfaceResult:
    """Layers of Σ that every path from U to ∂V has to cross.

    Raises:
        ParameterError: If U is empty, not *-connected or not in V, or Σ ⊄ V ∖ U
    """
    window, inside, u, s = _inputs(U, V, sigma)
    face = _face(V, window)
    nn = structure(V.d, "nn")
    layers, trace = [], []
    current, remaining = u, s.copy()
    while True:
        comp = _flood(current, inside & ~remaining)
        if (comp & face).any():
            break
        filled = ndimage.binary_fill_holes(comp, structure=nn)
        ext = ndimage.binary_dilation(filled, structure=nn) & ~filled
        labels, _ = label(remaining, "star")
        ids = np.unique(labels[ext])
        ids = ids[ids > 0]
        if len(ids) != 1:
            logger.debug("exterior boundary meets %d *-components of Σ", len(ids))
        layer = np.isin(labels, ids) & remaining
        layers.append(SiteSet(window, layer))
        trace.append((SiteSet(window, comp), SiteSet(window, ext)))
        remaining &= ~layer
        current = comp | layer
    logger.debug("blocking interfaces: %d layers", len(layers))
    return InterfaceResult(window, layers, trace)


def min_crossing_count(U: SiteSet, V: Box, sigma: SiteSet) -> int:
    """min over paths γ from U to ∂V of |γ ∩ Σ|.

    Grows the set reachable with at most k crossings: a flood through V ∖ Σ,
    then one more layer of adjacent Σ sites, until ∂V is reached.
    """
    window, inside, u, s = _inputs(U, V, sigma, check_u=False)
    face = _face(V, window)
    nn = structure(V.d, "nn")
    free = inside & ~s
    reach = _flood(u, free)
    k = 0
    while not (reach & face).any():
        grown = ndimage.binary_dilation(reach, structure=nn) & s & ~reach
        if not grown.any():
            raise ParameterError("∂V is unreachable from U")
        reach = _flood(reach | grown, free)
        k += 1
    return k


# property checks -------------------------------------------------------------------------


@dataclass
class InterfaceReport:
    """Outcome of the three layer properties for one instance."""

    surrounding: bool
    crossing: bool
    maximal: bool
    k_sigma: int
    k_layers: int
    violations: list[tuple[tuple[int, ...], tuple[int, ...] | None]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.surrounding and self.crossing and self.maximal


def _closure(O: np.ndarray, inside: np.ndarray) -> np.ndarray:
    return (ndimage.binary_dilation(O, structure=structure(O.ndim, "nn")) | O) & inside


def _touching(points: np.ndarray, labels: np.ndarray) -> list[frozenset[int]]:
    """Labels at each point and its nearest neighbours."""
    steps = np.vstack([np.zeros((1, points.shape[1]), dtype=np.int64),
                       unit_vectors(points.shape[1])])
    around = points[:, None, :] + steps[None, :, :]
    vals = labels[tuple(np.moveaxis(around, -1, 0))]
    return [frozenset(int(v) for v in row if v) for row in vals]


def _adjacent(x: np.ndarray, y: np.ndarray) -> bool:
    return int(np.abs(x - y).sum()) <= 1


def _maximality(A: np.ndarray, B: np.ndarray, lab_o: np.ndarray, lab_s: np.ndarray,
                limit: int) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    """Pairs x ∈ A, y ∈ B joined in V ∖ O but not in V ∖ Σ.

    Points are grouped by the V ∖ Σ components they touch; only groups whose
    component sets are disjoint can hold a violating pair.
    """
    pa, pb = np.argwhere(A), np.argwhere(B)
    so_a, so_b = _touching(pa, lab_o), _touching(pb, lab_o)
    ss_a, ss_b = _touching(pa, lab_s), _touching(pb, lab_s)
    found = []
    for comp in set().union(*so_a, *so_b):
        ga: dict[frozenset[int], list[int]] = {}
        gb: dict[frozenset[int], list[int]] = {}
        for i, c in enumerate(so_a):
            if comp in c:
                ga.setdefault(ss_a[i], []).append(i)
        for i, c in enumerate(so_b):
            if comp in c:
                gb.setdefault(ss_b[i], []).append(i)
        for (ka, ia), (kb, ib) in itertools.product(ga.items(), gb.items()):
            if ka & kb:
                continue
            for i, j in itertools.islice(itertools.product(ia, ib), limit):
                if not _adjacent(pa[i], pb[j]):
                    found.append((tuple(int(c) for c in pa[i]), tuple(int(c) for c in pb[j])))
                    break
        if found:
            break
    return found


def verify_interface_properties(result: InterfaceResult, U: SiteSet, V: Box,
                                sigma: SiteSet, limit: int = 10_000) -> InterfaceReport:
    """Check surrounding, crossing count and maximality of the layers.

    Coordinates in violations are array indices over ``result.window``.
    """
    window, inside, u, s = _inputs(U, V, sigma, check_u=False)
    face = _face(V, window)
    layers = [O.reframe(window) for O in result.layers]
    chain = [U.reframe(window), *layers, SiteSet(window, face)]
    surrounding = all(surrounds(a, b, window, margin=MARGIN) for a, b in zip(chain, chain[1:]))

    O = np.zeros(window.shape, dtype=bool)
    for layer in layers:
        O |= layer.mask
    k_sigma = min_crossing_count(U, V, sigma)
    k_layers = min_crossing_count(U, V, SiteSet(window, O))
    crossing = k_layers >= k_sigma

    lab_o, _ = label(inside & ~O, "nn")
    lab_s, _ = label(inside & ~s, "nn")
    closures = [_closure(layer.mask, inside) for layer in layers]
    violations: list = []
    for j, A in enumerate(closures):
        for jp in sorted({j, min(j + 1, len(closures) - 1)}):
            violations += _maximality(A, closures[jp], lab_o, lab_s, limit)
    if closures:
        violations += _face_violations(closures[-1], face, lab_o, lab_s)
    return InterfaceReport(surrounding, crossing, not violations, k_sigma, k_layers, violations)


def _face_violations(A: np.ndarray, face: np.ndarray, lab_o: np.ndarray,
                     lab_s: np.ndarray) -> list[tuple[tuple[int, ...], None]]:
    """Points of Ō_ℓ joined to ∂V in V ∖ O but not in V ∖ Σ."""
    on_face_o = set(np.unique(lab_o[face]).tolist()) - {0}
    on_face_s = set(np.unique(lab_s[face]).tolist()) - {0}
    near_face = _closure(face, np.ones_like(face))
    pts = np.argwhere(A & ~near_face)
    out = []
    for p, so, ss in zip(pts, _touching(pts, lab_o), _touching(pts, lab_s), strict=True):
        if so & on_face_o and not ss & on_face_s:
            out.append((tuple(int(c) for c in p), None))
    return out


def layers_from_points(window: Box, groups: Sequence[np.ndarray]) -> InterfaceResult:
    """Wrap hand-made layers (site coordinates per layer) as a result."""
    layers = [SiteSet.from_points(g, window=window) for g in groups]
    return InterfaceResult(window, layers)

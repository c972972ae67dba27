"""The interlacement process seen from a finite set K.

Trajectories of ω with label ≤ u_max that hit K form a Poisson process of
intensity u_max·cap(K); each starts at an ē_K-distributed site and runs
forward. Only visits inside a coverage box are kept.
"""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import ndimage

from rilab import walks
from rilab.errors import GeometryError, ParameterError
from rilab.lattice import Box, SiteSet, edge_labels, structure
from rilab.potential import EquilibriumMeasure, equilibrium_measure
from rilab.walks import WalkConfig

logger = logging.getLogger(__name__)

RLE_MAGIC = b"RILVAC01"


@dataclass(frozen=True, eq=False)
class LabeledTrajectory:
    """One point of ω restricted to the coverage box.

    Attributes:
        label: The trajectory's level u_i
        start: First entrance site in K
        clock: Step index of every recorded visit
        sites: Recorded visits inside the coverage box, shape ``(m, d)``
        truncated: The walk hit ``max_steps`` before escaping
        reentries: Number of kill-radius re-entries
        holding: Exp(1) holding time per visit, when requested
    """

    label: float
    start: np.ndarray
    clock: np.ndarray
    sites: np.ndarray
    truncated: bool = False
    reentries: int = 0
    holding: np.ndarray | None = None

    def pieces(self) -> list[np.ndarray]:
        """Maximal runs of consecutive steps inside the coverage box."""
        if not len(self.clock):
            return []
        cuts = np.nonzero(np.diff(self.clock) != 1)[0] + 1
        return np.split(self.sites, cuts)


@dataclass(frozen=True, eq=False)
class InterlacementSample:
    """ω restricted to trajectories hitting K with labels in (0, u_max]."""

    base: SiteSet
    u_max: float
    trajectories: list[LabeledTrajectory]
    cfg: WalkConfig
    coverage: Box
    measure: EquilibriumMeasure

    @property
    def count(self) -> int:
        return len(self.trajectories)

    @property
    def labels(self) -> np.ndarray:
        return np.array([t.label for t in self.trajectories])

    @property
    def truncated(self) -> int:
        return sum(t.truncated for t in self.trajectories)

    @cached_property
    def _visits(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.trajectories:
            return np.zeros(0), np.zeros((0, self.base.d), dtype=np.int64)
        labels = np.concatenate([np.full(len(t.sites), t.label) for t in self.trajectories])
        sites = np.concatenate([t.sites for t in self.trajectories])
        return labels, sites

    def jump_levels(self, u: float) -> np.ndarray:
        """The labels ≤ u, i.e. the levels where V^v can change."""
        labels = self.labels
        return labels[labels <= u]


def sample_process(
    K: SiteSet,
    u_max: float,
    cfg: WalkConfig | None = None,
    rng: np.random.Generator | None = None,
    measure: EquilibriumMeasure | None = None,
    coverage: Box | None = None,
    holding: bool = False,
) -> InterlacementSample:
    """Sample the trajectories of ω with label ≤ u_max that hit K.

    Args:
        K: Target set
        u_max: Largest label
        cfg: Kill-radius and re-entry policy
        rng: Generator owned by this trial
        measure: Precomputed e_K (computed exactly when omitted)
        coverage: Box where visits are recorded (defaults to K's window)
        holding: Draw Exp(1) holding times per recorded visit

    Raises:
        ParameterError: If u_max ≤ 0 or cap(K) = 0
    """
    if u_max <= 0:
        raise ParameterError(f"u_max must be positive, got {u_max}")
    cfg = cfg or WalkConfig()
    rng = rng if rng is not None else np.random.default_rng()
    measure = measure or equilibrium_measure(K)
    cap = measure.total
    if cap <= 0:
        raise ParameterError("cannot sample interlacements through a zero-capacity set")
    coverage = coverage or K.window
    if len(K) and not K.bounding_box().inside(coverage):
        raise GeometryError(f"coverage {coverage} does not contain K")

    n = int(rng.poisson(u_max * cap))
    labels = np.sort(u_max * (1.0 - rng.random(n)))
    if n == 0:
        return InterlacementSample(K, u_max, [], cfg, coverage, measure)
    starts = measure.sample(rng, size=n)
    escape = coverage.expand(cfg.radius(K.bounding_box()))
    record = walks.forward_walks(starts, coverage, escape, cfg, rng, reentry=measure.reentry)
    trajectories = []
    for i, (clock, sites) in enumerate(record.split(n)):
        hold = rng.exponential(size=len(sites)) if holding else None
        trajectories.append(LabeledTrajectory(
            label=float(labels[i]), start=starts[i], clock=clock, sites=sites,
            truncated=bool(record.truncated[i]), reentries=int(record.reentries[i]),
            holding=hold,
        ))
    logger.debug("sampled %d trajectories through |K| = %d at u_max = %g", n, len(K), u_max)
    return InterlacementSample(K, u_max, trajectories, cfg, coverage, measure)


# fields -----------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class VacantField:
    """V^u on a window box.

    Attributes:
        window: Box the arrays are laid out over
        u: Level
        occupancy: True where the site is vacant
        occupation: Discrete visit count ℓ_x
        delta: Noise level applied on top (0 for the plain field)
    """

    window: Box
    u: float
    occupancy: np.ndarray
    occupation: np.ndarray
    delta: float = 0.0

    @property
    def vacant(self) -> SiteSet:
        return SiteSet(self.window, self.occupancy)

    @property
    def occupied(self) -> SiteSet:
        return SiteSet(self.window, ~self.occupancy)

    def restrict(self, box: Box) -> VacantField:
        sl = box.slices(self.window)
        return VacantField(box, self.u, self.occupancy[sl], self.occupation[sl], self.delta)

    def is_vacant(self, x) -> bool:
        idx = tuple(int(c) - l for c, l in zip(x, self.window.lo, strict=True))
        return bool(self.occupancy[idx])


def vacant_field(s: InterlacementSample, u: float, window: Box | None = None) -> VacantField:
    """V^u and ℓ^u from the trajectories with label ≤ u.

    Raises:
        ParameterError: If u is outside [0, u_max]
        GeometryError: If the window leaves the coverage box
    """
    if u < 0 or u > s.u_max:
        raise ParameterError(f"level {u} outside [0, {s.u_max}]")
    window = window or s.coverage
    if not window.inside(s.coverage):
        raise GeometryError(f"window {window} leaves the coverage box {s.coverage}")
    labels, sites = s._visits
    keep = (labels <= u) & window.contains_array(sites)
    flat = np.ravel_multi_index(tuple((sites[keep] - np.asarray(window.lo)).T), window.shape)
    ell = np.bincount(flat, minlength=window.size).reshape(window.shape)
    return VacantField(window, u, ell == 0, ell)


@dataclass(frozen=True, eq=False)
class NoiseField:
    """I.i.d. uniforms 𝖴_x on a window."""

    window: Box
    uniforms: np.ndarray


def noise_field(window: Box, rng: np.random.Generator) -> NoiseField:
    """Draw 𝖴; pass a generator independent of the trajectory stream."""
    return NoiseField(window, rng.random(window.shape))


def noise_apply(V: VacantField, delta: float, noise: NoiseField) -> VacantField:
    """(V)_δ: keep a vacant site iff its uniform is at least δ.

    Raises:
        ParameterError: If δ ∉ [0, 1)
        GeometryError: If the noise window does not cover the field
    """
    if not 0 <= delta < 1:
        raise ParameterError(f"noise level must lie in [0, 1), got {delta}")
    if delta == 0:
        return V
    U = noise.uniforms[V.window.slices(noise.window)]
    return VacantField(V.window, V.u, V.occupancy & (U >= delta), V.occupation, delta)


def finite_cluster_indicator(V: VacantField, x) -> bool:
    """True iff the vacant cluster of x stays away from the window faces."""
    if not V.window.contains(x):
        raise GeometryError(f"site {tuple(x)} lies outside {V.window}")
    if not V.is_vacant(x):
        return True
    labels, _ = ndimage.label(V.occupancy, structure=structure(V.window.d, "nn"))
    idx = tuple(int(c) - l for c, l in zip(x, V.window.lo, strict=True))
    return int(labels[idx]) not in set(edge_labels(labels).tolist())


@dataclass
class FlipReport:
    """Finite-cluster proxy on nested windows."""

    inner: Box
    outer: Box
    flips: int = 0
    trials: int = 0
    records: list[tuple[bool, bool]] = field(default_factory=list)

    @property
    def rate(self) -> float:
        return self.flips / self.trials if self.trials else 0.0

    def add(self, small: bool, large: bool) -> None:
        self.trials += 1
        self.flips += int(small != large)
        self.records.append((small, large))


# run-length dumps ---------------------------------------------------------------


def write_rle(path: Path | str, V: VacantField) -> None:
    """Occupancy bitmap as run lengths, first run counting vacant sites."""
    flat = V.occupancy.ravel().astype(np.int8)
    change = np.nonzero(np.diff(flat))[0] + 1
    bounds = np.concatenate([[0], change, [len(flat)]])
    runs = np.diff(bounds).tolist()
    if len(flat) and flat[0] == 0:
        runs = [0] + runs
    shape = ",".join(str(s) for s in V.window.shape)
    lo = ",".join(str(c) for c in V.window.lo)
    with open(path, "wb") as fh:
        fh.write(RLE_MAGIC + struct.pack(">d", V.u))
        fh.write(f"d={V.window.d} shape={shape} lo={lo}\n".encode())
        fh.write((" ".join(str(r) for r in runs) + "\n").encode())


def read_rle(path: Path | str) -> tuple[float, Box, np.ndarray]:
    """Inverse of ``write_rle``: ``(u, window, occupancy)``."""
    raw = Path(path).read_bytes()
    if raw[:8] != RLE_MAGIC:
        raise GeometryError(f"{path}: not a vacant-set dump")
    (u,) = struct.unpack(">d", raw[8:16])
    header, body = raw[16:].decode().split("\n", 1)
    fields = dict(part.split("=", 1) for part in header.split())
    shape = tuple(int(s) for s in fields["shape"].split(","))
    lo = tuple(int(c) for c in fields["lo"].split(",")) if "lo" in fields else (0,) * len(shape)
    if int(fields["d"]) != len(shape):
        raise GeometryError(f"{path}: header dimension does not match the shape")
    runs = [int(r) for r in body.split()]
    values = np.resize([True, False], len(runs))
    occupancy = np.repeat(values, runs)
    window = Box(lo, tuple(l + s for l, s in zip(lo, shape, strict=True)))
    if occupancy.size != window.size:
        raise GeometryError(f"{path}: run lengths cover {occupancy.size} of {window.size} sites")
    return u, window, occupancy.reshape(shape)

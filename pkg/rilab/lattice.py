"""Lattice geometry on Z^d.

Boxes are half-open integer ranges. A ``SiteSet`` is a boolean mask over a
window box, so membership, boundaries and connectivity reduce to array
operations (``scipy.ndimage`` labeling and morphology).

Adjacency is either nearest-neighbour (``"nn"``, ℓ¹-distance 1) or
*-adjacency (``"star"``, ℓ∞-distance 1).
"""
from __future__ import annotations

import logging
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Literal

import numpy as np
from scipy import ndimage

from rilab.errors import GeometryError, ParameterError, PathError

logger = logging.getLogger(__name__)

Site = tuple[int, ...]
Adjacency = Literal["nn", "star"]

K_MIN = 100
MAX_WINDOW_SITES = 2**31


def norm_inf(x: Sequence[int]) -> int:
    return int(max(abs(int(c)) for c in x)) if len(x) else 0


def norm_2(x: Sequence[int]) -> float:
    return float(np.sqrt(sum(int(c) ** 2 for c in x)))


def structure(d: int, adjacency: Adjacency = "nn") -> np.ndarray:
    """Connectivity structure for ``scipy.ndimage`` in dimension ``d``."""
    if adjacency == "nn":
        return ndimage.generate_binary_structure(d, 1)
    if adjacency == "star":
        return ndimage.generate_binary_structure(d, d)
    raise ParameterError(f"unknown adjacency {adjacency!r}")


def unit_vectors(d: int) -> np.ndarray:
    """The 2d nearest-neighbour steps, ordered +e_1, -e_1, +e_2, ..."""
    steps = np.zeros((2 * d, d), dtype=np.int64)
    for i in range(d):
        steps[2 * i, i] = 1
        steps[2 * i + 1, i] = -1
    return steps


@dataclass(frozen=True)
class Box:
    """Half-open box ``[lo, hi)`` in Z^d."""

    lo: tuple[int, ...]
    hi: tuple[int, ...]

    def __post_init__(self):
        lo = tuple(int(c) for c in self.lo)
        hi = tuple(int(c) for c in self.hi)
        if len(lo) != len(hi) or not lo:
            raise GeometryError(f"box corners {lo} and {hi} have different dimensions")
        if any(h < l for l, h in zip(lo, hi, strict=True)):
            raise GeometryError(f"box [{lo}, {hi}) has negative extent")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def ball(cls, r: int, d: int, center: Sequence[int] | None = None) -> Box:
        """Closed ℓ∞ ball of radius ``r``, i.e. ``[c - r, c + r]^d``."""
        c = tuple(center) if center is not None else (0,) * d
        return cls(tuple(ci - r for ci in c), tuple(ci + r + 1 for ci in c))

    @classmethod
    def bounding(cls, points: np.ndarray) -> Box:
        points = np.asarray(points, dtype=np.int64)
        if points.size == 0:
            raise GeometryError("bounding box of an empty point set")
        return cls(tuple(points.min(axis=0)), tuple(points.max(axis=0) + 1))

    @property
    def d(self) -> int:
        return len(self.lo)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(h - l for l, h in zip(self.lo, self.hi, strict=True))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))

    @property
    def side(self) -> int:
        """Largest side length."""
        return max(self.shape)

    def is_empty(self) -> bool:
        return self.size == 0

    def contains(self, x: Sequence[int]) -> bool:
        return all(l <= int(c) < h for l, c, h in zip(self.lo, x, self.hi, strict=True))

    def contains_array(self, points: np.ndarray) -> np.ndarray:
        """Vectorized membership for an ``(..., d)`` array of sites."""
        points = np.asarray(points)
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return np.all((points >= lo) & (points < hi), axis=-1)

    def inside(self, other: Box) -> bool:
        """True iff ``self`` is a subset of ``other``."""
        if self.is_empty():
            return True
        return all(
            ol <= l and h <= oh
            for l, h, ol, oh in zip(self.lo, self.hi, other.lo, other.hi, strict=True)
        )

    def translate(self, v: Sequence[int]) -> Box:
        return Box(
            tuple(l + int(c) for l, c in zip(self.lo, v, strict=True)),
            tuple(h + int(c) for h, c in zip(self.hi, v, strict=True)),
        )

    def expand(self, r: int) -> Box:
        return Box(tuple(l - r for l in self.lo), tuple(h + r for h in self.hi))

    def intersect(self, other: Box) -> Box:
        lo = tuple(max(a, b) for a, b in zip(self.lo, other.lo, strict=True))
        hi = tuple(max(l, min(a, b)) for l, a, b in zip(lo, self.hi, other.hi, strict=True))
        return Box(lo, hi)

    def margin_in(self, window: Box) -> int:
        """Smallest gap between ``self`` and the faces of ``window``.

        Negative when ``self`` sticks out of ``window``.
        """
        gaps = [l - wl for l, wl in zip(self.lo, window.lo, strict=True)]
        gaps += [wh - h for h, wh in zip(self.hi, window.hi, strict=True)]
        return min(gaps)

    def sites(self) -> np.ndarray:
        """All sites as an ``(n, d)`` array in lexicographic order."""
        axes = [np.arange(l, h, dtype=np.int64) for l, h in zip(self.lo, self.hi, strict=True)]
        grid = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grid], axis=1)

    def slices(self, window: Box) -> tuple[slice, ...]:
        """Index slices of ``self`` inside an array laid out over ``window``."""
        if not self.inside(window):
            raise GeometryError(f"box {self} is not inside window {window}")
        return tuple(
            slice(l - wl, h - wl) for l, h, wl in zip(self.lo, self.hi, window.lo, strict=True)
        )

    def mask_in(self, window: Box) -> np.ndarray:
        mask = np.zeros(window.shape, dtype=bool)
        mask[self.intersect(window).slices(window)] = True
        return mask

    def gap_inf(self, other: Box) -> int:
        """ℓ∞ distance between the site sets of two nonempty boxes."""
        gaps = [
            max(ol - (h - 1), l - (oh - 1), 0)
            for l, h, ol, oh in zip(self.lo, self.hi, other.lo, other.hi, strict=True)
        ]
        return max(gaps)


def ball(r: int, d: int) -> Box:
    """B_r, the closed ℓ∞ ball of radius ``r`` around the origin."""
    return Box.ball(r, d)


class SiteSet:
    """Finite subset of Z^d stored as a boolean mask over a window box.

    Instances are immutable; the mask is made read-only on construction.
    """

    def __init__(self, window: Box, mask: np.ndarray):
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != window.shape:
            raise GeometryError(f"mask shape {mask.shape} does not match window {window.shape}")
        if window.size > MAX_WINDOW_SITES:
            raise GeometryError(f"window of {window.size} sites exceeds 2^31")
        mask = mask.copy()
        mask.setflags(write=False)
        self.window = window
        self.mask = mask

    # construction -----------------------------------------------------------

    @classmethod
    def empty(cls, window: Box) -> SiteSet:
        return cls(window, np.zeros(window.shape, dtype=bool))

    @classmethod
    def from_box(cls, box: Box, window: Box | None = None) -> SiteSet:
        window = window or box
        if not box.inside(window):
            raise GeometryError(f"box {box} does not fit window {window}")
        return cls(window, box.mask_in(window))

    @classmethod
    def from_points(
        cls, points: np.ndarray | Iterable[Sequence[int]], window: Box | None = None,
        margin: int = 0, d: int | None = None,
    ) -> SiteSet:
        """Build from an array or iterable of sites.

        Without a window the bounding box expanded by ``margin`` is used.
        """
        arr = np.asarray(list(points) if not isinstance(points, np.ndarray) else points,
                         dtype=np.int64)
        if arr.size == 0:
            if window is None:
                if d is None:
                    raise GeometryError("empty site set needs a window or a dimension")
                window = Box((0,) * d, (0,) * d)
            return cls.empty(window)
        arr = arr.reshape(-1, arr.shape[-1])
        if window is None:
            window = Box.bounding(arr).expand(margin)
        inside = window.contains_array(arr)
        if not inside.all():
            bad = tuple(int(c) for c in arr[~inside][0])
            raise GeometryError(f"site {bad} lies outside window {window}")
        mask = np.zeros(window.shape, dtype=bool)
        mask[tuple((arr - np.asarray(window.lo)).T)] = True
        return cls(window, mask)

    # basic queries ----------------------------------------------------------

    @property
    def d(self) -> int:
        return self.window.d

    @cached_property
    def coords(self) -> np.ndarray:
        """Sites as an ``(n, d)`` array in lexicographic order."""
        return np.argwhere(self.mask).astype(np.int64) + np.asarray(self.window.lo, dtype=np.int64)

    @cached_property
    def sites(self) -> frozenset[Site]:
        return frozenset(tuple(int(c) for c in row) for row in self.coords)

    def __len__(self) -> int:
        return int(self.mask.sum())

    def __bool__(self) -> bool:
        return bool(self.mask.any())

    def __iter__(self) -> Iterator[Site]:
        for row in self.coords:
            yield tuple(int(c) for c in row)

    def __contains__(self, x: object) -> bool:
        if not isinstance(x, tuple | list | np.ndarray) or len(x) != self.d:
            return False
        if not self.window.contains(x):
            return False
        return bool(self.mask[tuple(int(c) - l for c, l in zip(x, self.window.lo, strict=True))])

    def contains_array(self, points: np.ndarray) -> np.ndarray:
        """Vectorized membership; sites outside the window are not members."""
        points = np.asarray(points, dtype=np.int64)
        inside = self.window.contains_array(points)
        out = np.zeros(points.shape[:-1], dtype=bool)
        if inside.any():
            idx = points[inside] - np.asarray(self.window.lo)
            out[inside] = self.mask[tuple(idx.T)]
        return out

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SiteSet):
            return NotImplemented
        return self.sites == other.sites

    def __hash__(self) -> int:
        return hash(self.sites)

    def __repr__(self) -> str:
        return f"SiteSet(n={len(self)}, window={self.window})"

    # reframing and algebra --------------------------------------------------

    def reframe(self, window: Box) -> SiteSet:
        """Same sites laid out over another window."""
        if window == self.window:
            return self
        if len(self) and not self.bounding_box().inside(window):
            raise GeometryError(f"{self!r} does not fit window {window}")
        mask = np.zeros(window.shape, dtype=bool)
        common = self.window.intersect(window)
        if not common.is_empty():
            mask[common.slices(window)] = self.mask[common.slices(self.window)]
        return SiteSet(window, mask)

    def clip(self, box: Box) -> SiteSet:
        """Sites that fall inside ``box``, on the same window."""
        return SiteSet(self.window, self.mask & box.mask_in(self.window))

    def _aligned(self, other: SiteSet) -> np.ndarray:
        if other.window == self.window:
            return other.mask
        mask = np.zeros(self.window.shape, dtype=bool)
        common = self.window.intersect(other.window)
        if not common.is_empty():
            mask[common.slices(self.window)] = other.mask[common.slices(other.window)]
        return mask

    def __or__(self, other: SiteSet) -> SiteSet:
        if len(other) and not other.bounding_box().inside(self.window):
            raise GeometryError("union does not fit the left operand's window")
        return SiteSet(self.window, self.mask | self._aligned(other))

    def __and__(self, other: SiteSet) -> SiteSet:
        return SiteSet(self.window, self.mask & self._aligned(other))

    def __sub__(self, other: SiteSet) -> SiteSet:
        return SiteSet(self.window, self.mask & ~self._aligned(other))

    def complement(self) -> SiteSet:
        """Complement relative to the window."""
        return SiteSet(self.window, ~self.mask)

    def issubset(self, other: SiteSet) -> bool:
        return bool(other.contains_array(self.coords).all())

    def isdisjoint(self, other: SiteSet) -> bool:
        return not bool(other.contains_array(self.coords).any())

    def translate(self, v: Sequence[int]) -> SiteSet:
        return SiteSet(self.window.translate(v), self.mask)

    # geometry ---------------------------------------------------------------

    def bounding_box(self) -> Box:
        return Box.bounding(self.coords)

    def diameter_inf(self) -> int:
        if not len(self):
            return 0
        c = self.coords
        return int((c.max(axis=0) - c.min(axis=0)).max())

    def margin(self) -> int:
        """Gap between the bounding box and the window faces."""
        if not len(self):
            return min(self.window.shape) // 2
        return self.bounding_box().margin_in(self.window)


def euclidean_ball(r: float, d: int, margin: int = 0) -> SiteSet:
    """B²_r = {x : |x|₂ ≤ r}."""
    R = int(np.floor(r))
    window = Box.ball(R + margin, d)
    pts = window.sites()
    return SiteSet(window, ((pts**2).sum(axis=1) <= r * r).reshape(window.shape))


# boundaries -----------------------------------------------------------------


def edge_labels(labels: np.ndarray) -> np.ndarray:
    """Label ids present on any face of the array."""
    faces = []
    for axis in range(labels.ndim):
        faces.append(np.take(labels, 0, axis=axis).ravel())
        faces.append(np.take(labels, -1, axis=axis).ravel())
    ids = np.unique(np.concatenate(faces))
    return ids[ids > 0]


def inner_boundary(U: SiteSet, rel: SiteSet | None = None) -> SiteSet:
    """∂U: sites of U with a neighbour in ``rel`` ∖ U (in Z^d when ``rel`` is None)."""
    nn = structure(U.d, "nn")
    if rel is None:
        interior = ndimage.binary_erosion(U.mask, structure=nn, border_value=0)
        return SiteSet(U.window, U.mask & ~interior)
    U = U.reframe(rel.window)
    outside = rel.mask & ~U.mask
    return SiteSet(rel.window, U.mask & ndimage.binary_dilation(outside, structure=nn))


def outer_boundary(U: SiteSet, rel: SiteSet | None = None) -> SiteSet:
    """∂^out U: sites outside U (inside ``rel``) with a neighbour in U."""
    nn = structure(U.d, "nn")
    if rel is None:
        if len(U) and U.margin() < 1:
            raise GeometryError("outer boundary needs a window margin of at least 1")
        grown = ndimage.binary_dilation(U.mask, structure=nn)
        return SiteSet(U.window, grown & ~U.mask)
    U = U.reframe(rel.window)
    grown = ndimage.binary_dilation(U.mask, structure=nn)
    return SiteSet(rel.window, grown & ~U.mask & rel.mask)


def fill(U: SiteSet, margin: int = 2) -> SiteSet:
    """Fill(U): U together with every finite component of its complement."""
    if len(U) and U.margin() < margin:
        raise GeometryError(f"fill needs a window margin of at least {margin}")
    labels, _ = ndimage.label(~U.mask, structure=structure(U.d, "nn"))
    outside = np.isin(labels, edge_labels(labels))
    return SiteSet(U.window, ~outside)


def exterior_boundary(U: SiteSet, margin: int = 2) -> SiteSet:
    """∂^ext U = ∂^out Fill(U)."""
    return outer_boundary(fill(U, margin=margin))


def boundary(
    U: SiteSet, kind: Literal["inner", "outer", "exterior"] = "inner", rel: SiteSet | None = None
) -> SiteSet:
    """Dispatch to the inner, outer or exterior boundary."""
    if kind == "inner":
        return inner_boundary(U, rel)
    if kind == "outer":
        return outer_boundary(U, rel)
    if kind == "exterior":
        return exterior_boundary(U)
    raise ParameterError(f"unknown boundary kind {kind!r}")


# connectivity ---------------------------------------------------------------


def label(mask: np.ndarray, adjacency: Adjacency = "nn") -> tuple[np.ndarray, int]:
    """Connected-component labels of a boolean array (0 = background)."""
    return ndimage.label(mask, structure=structure(mask.ndim, adjacency))


def components(U: SiteSet, adjacency: Adjacency = "nn") -> list[SiteSet]:
    """Maximal connected pieces of U, ordered by their lexicographically first site."""
    labels, count = label(U.mask, adjacency)
    return [SiteSet(U.window, labels == k) for k in range(1, count + 1)]


def is_connected(U: SiteSet, adjacency: Adjacency = "nn") -> bool:
    if not len(U):
        return True
    return label(U.mask, adjacency)[1] == 1


def component_of(U: SiteSet, x: Sequence[int], adjacency: Adjacency = "nn") -> SiteSet:
    """The component of U containing ``x`` (empty when x ∉ U)."""
    if x not in U:
        return SiteSet.empty(U.window)
    labels, _ = label(U.mask, adjacency)
    idx = tuple(int(c) - l for c, l in zip(x, U.window.lo, strict=True))
    return SiteSet(U.window, labels == labels[idx])


def surrounds(A: SiteSet, sigma: SiteSet, window: Box | None = None, margin: int = 2) -> bool:
    """A ⪯ Σ: every nearest-neighbour path from A to the window edge meets Σ.

    Decided as: A is disjoint from the component of the window's Σ-complement
    that touches the window faces.
    """
    if not len(A):
        return True
    window = window or sigma.window
    for s in (A, sigma):
        if len(s) and s.bounding_box().margin_in(window) < margin:
            raise GeometryError(f"surrounds needs a window margin of at least {margin}")
    sig = sigma.reframe(window)
    labels, _ = label(~sig.mask, "nn")
    outside = np.isin(labels, edge_labels(labels))
    a = A.reframe(window)
    return not bool((outside & a.mask).any())


# box families ---------------------------------------------------------------


@dataclass(frozen=True)
class BoxFamily:
    """Nested boxes C_z ⊂ C̃_z ⊂ D̃_z ⊂ D_z ⊂ U_z attached to an anchor ``z``."""

    z: Site
    L: int
    K: int
    C: Box
    C_tilde: Box
    D_tilde: Box
    D: Box
    U: Box

    @property
    def d(self) -> int:
        return len(self.z)

    def boxes(self) -> list[Box]:
        return [self.C, self.C_tilde, self.D_tilde, self.D, self.U]


def box_family(z: Sequence[int], L: int, K: int, k_min: int = K_MIN) -> BoxFamily:
    """Boxes of scale L attached to ``z``.

    Raises:
        ParameterError: If L < 1 or K < k_min
    """
    if L < 1:
        raise ParameterError(f"scale L must be at least 1, got {L}")
    if K < k_min:
        raise ParameterError(f"factor K must be at least {k_min}, got {K}")
    z = tuple(int(c) for c in z)
    d = len(z)

    def cube(a: int, b: int) -> Box:
        return Box(tuple(c + a for c in z), tuple(c + b for c in z))

    family = BoxFamily(
        z=z, L=L, K=K,
        C=cube(0, L),
        C_tilde=cube(-L, 2 * L),
        D_tilde=cube(-2 * L, 3 * L),
        D=cube(-3 * L, 4 * L),
        U=cube(-K * L + 1, L + K * L - 1),
    )
    boxes = family.boxes()
    for inner, outer in zip(boxes, boxes[1:], strict=False):
        if not inner.inside(outer) or inner == outer:
            raise ParameterError(f"boxes are not strictly nested for L={L}, K={K}, d={d}")
    return family


# paths ----------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LatticePath:
    """Ordered list of sites with nearest-neighbour (or *-) steps."""

    vertices: np.ndarray
    adjacency: Adjacency = "nn"

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.int64)
        if v.ndim != 2 or len(v) == 0:
            raise PathError("a path needs at least one vertex")
        steps = np.abs(np.diff(v, axis=0))
        if self.adjacency == "nn":
            ok = steps.sum(axis=1) == 1
        else:
            ok = (steps.max(axis=1) == 1) if len(steps) else np.ones(0, dtype=bool)
        if not ok.all():
            bad = int(np.argmin(ok))
            raise PathError(f"step {bad} of the path violates {self.adjacency}-adjacency")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @property
    def d(self) -> int:
        return self.vertices.shape[1]

    def __len__(self) -> int:
        return len(self.vertices)

    def crosses(self, inner: Box | SiteSet, outer: Box | SiteSet) -> bool:
        """True iff the path visits ``inner`` and later leaves ``outer``."""
        hit_inner = inner.contains_array(self.vertices)
        if not hit_inner.any():
            return False
        first = int(np.argmax(hit_inner))
        return bool((~outer.contains_array(self.vertices[first:])).any())

    def range_set(self, window: Box | None = None) -> SiteSet:
        return SiteSet.from_points(self.vertices, window=window)


# annuli ---------------------------------------------------------------------


@dataclass(frozen=True)
class AnnulusSpec:
    """One of the four region shapes Λ_N."""

    kind: Literal["euclidean-ball", "euclidean-annulus", "euclidean-double", "box-annulus"]
    N: int
    sigma: float = 0.0

    def __post_init__(self):
        if self.kind not in ("euclidean-ball", "euclidean-annulus", "euclidean-double",
                             "box-annulus"):
            raise ParameterError(f"unknown annulus kind {self.kind!r}")
        if not 0 <= self.sigma < 1 / 3:
            raise ParameterError(f"sigma must lie in [0, 1/3), got {self.sigma}")
        if self.kind != "euclidean-annulus" and self.sigma != 0:
            raise ParameterError("sigma is only meaningful for euclidean-annulus")
        if self.kind == "euclidean-annulus" and self.sigma == 0:
            raise ParameterError("euclidean-annulus needs sigma in (0, 1/3)")
        if self.N < 1:
            raise ParameterError(f"radius must be positive, got {self.N}")

    def outer(self, d: int, margin: int = 2) -> SiteSet:
        """The set whose boundary a crossing must reach."""
        if self.kind == "euclidean-double":
            return euclidean_ball(2 * self.N, d, margin=margin)
        if self.kind == "box-annulus":
            return SiteSet.from_box(
                Box((-2 * self.N,) * d, (3 * self.N,) * d),
                Box((-2 * self.N - margin,) * d, (3 * self.N + margin,) * d),
            )
        return euclidean_ball(self.N, d, margin=margin)

    def inner(self, d: int, margin: int = 2) -> SiteSet:
        """The set a crossing must start from ({0} for the plain ball)."""
        window = self.outer(d, margin).window
        if self.kind == "euclidean-ball":
            return SiteSet.from_points([(0,) * d], window=window)
        if self.kind == "euclidean-annulus":
            return euclidean_ball(self.sigma * self.N, d).reframe(window)
        if self.kind == "euclidean-double":
            return euclidean_ball(self.N, d).reframe(window)
        return SiteSet.from_box(Box((-self.N,) * d, (2 * self.N,) * d), window)

    def region(self, d: int, margin: int = 2) -> SiteSet:
        """Λ_N itself."""
        outer = self.outer(d, margin)
        if self.kind == "euclidean-ball":
            return outer
        return outer - self.inner(d, margin)


# file formats ---------------------------------------------------------------


def write_sites(path: Path | str, sites: SiteSet | np.ndarray, d: int | None = None) -> None:
    """Write the site-set format: ``d=<int>`` then one site per line."""
    coords = sites.coords if isinstance(sites, SiteSet) else np.asarray(sites, dtype=np.int64)
    dim = sites.d if isinstance(sites, SiteSet) else (d or coords.shape[1])
    lines = [f"d={dim}"] + [" ".join(str(int(c)) for c in row) for row in coords]
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_rows(lines: list[str], d: int, path: Path | str) -> np.ndarray:
    rows = []
    for number, line in enumerate(lines, start=2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != d:
            raise GeometryError(f"{path}:{number}: expected {d} coordinates, got {len(parts)}")
        rows.append([int(p) for p in parts])
    return np.asarray(rows, dtype=np.int64).reshape(-1, d)


def _parse_header(header: str, path: Path | str, keyword: str | None) -> int:
    tokens = header.split()
    if keyword is not None:
        if not tokens or tokens[0] != keyword:
            raise GeometryError(f"{path}: expected a '{keyword}' header, got {header!r}")
        tokens = tokens[1:]
    if len(tokens) != 1 or not tokens[0].startswith("d="):
        raise GeometryError(f"{path}: malformed header {header!r}")
    return int(tokens[0][2:])


def read_sites(path: Path | str, margin: int = 2) -> SiteSet:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise GeometryError(f"{path}: empty site-set file")
    d = _parse_header(lines[0], path, None)
    return SiteSet.from_points(_parse_rows(lines[1:], d, path), margin=margin, d=d)


def write_path(path: Path | str, gamma: LatticePath) -> None:
    lines = [f"path d={gamma.d}"] + [" ".join(str(int(c)) for c in row) for row in gamma.vertices]
    Path(path).write_text("\n".join(lines) + "\n")


def read_path(path: Path | str) -> LatticePath:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise PathError(f"{path}: empty path file")
    d = _parse_header(lines[0], path, "path")
    return LatticePath(_parse_rows(lines[1:], d, path))

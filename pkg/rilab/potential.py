"""Discrete potential theory for the continuous-time unit-rate walk on Z^d.

Exact quantities come from linear solves: sparse ``I - P`` systems on a
finite killing domain U, or dense boundary Green's matrices built from the
infinite-volume lattice Green's function

    g(x) = ∫₀^∞ Π_i e^{-t/d} I_{x_i}(t/d) dt.

Beyond exact reach, equilibrium measures are estimated by escape trials with
a kill radius (see ``rilab.walks.WalkConfig``).
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Literal

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as sp_la
from scipy import integrate, special
from scipy.stats.sampling import DiscreteAliasUrn

from rilab import walks
from rilab.errors import CapabilityError, GeometryError, NumericError, ParameterError
from rilab.lattice import Box, SiteSet, inner_boundary
from rilab.walks import WalkConfig

logger = logging.getLogger(__name__)

SOLVE_CAP = 600_000
DIRECT_LIMIT = 50_000
DENSE_LIMIT = 4_000
GREEN_FAR = 25.0
CG_RTOL = 1e-12

Mode = Literal["exact", "mc"]


# Green's functions ----------------------------------------------------------


@lru_cache(maxsize=200_000)
def _green_class(key: tuple[int, ...]) -> float:
    d = len(key)

    def integrand(t: float) -> float:
        return float(np.prod(special.ive(np.asarray(key, dtype=float), t / d)))

    split = max(10.0, float(sum(k * k for k in key)))
    head, _ = integrate.quad(integrand, 0.0, split, epsabs=1e-14, epsrel=1e-12, limit=400)
    tail, _ = integrate.quad(integrand, split, np.inf, epsabs=1e-14, epsrel=1e-12, limit=400)
    return head + tail


def green_asymptotic(r: np.ndarray | float, d: int) -> np.ndarray:
    """Leading-order g(x) ~ c_d |x|^{2-d}, with c_d = d Γ(d/2 - 1) / (2 π^{d/2})."""
    c = d * special.gamma(d / 2 - 1) / (2 * math.pi ** (d / 2))
    r = np.asarray(r, dtype=float)
    return c * np.power(np.maximum(r, 1.0), 2 - d)


def green_function(x: tuple[int, ...] | np.ndarray, far: float = GREEN_FAR) -> float:
    """g(0, x) for the walk on Z^d (d ≥ 3), exact up to quadrature tolerance.

    Displacements longer than ``far`` (Euclidean) use ``green_asymptotic``.

    Example:
        >>> round(green_function((0, 0, 0)), 6)
        1.516386
    """
    a = np.abs(np.asarray(x, dtype=np.int64))
    if len(a) < 3:
        raise ParameterError("the walk is recurrent for d < 3")
    r = float(np.sqrt((a**2).sum()))
    if r > far:
        return float(green_asymptotic(r, len(a)))
    return _green_class(tuple(sorted(int(c) for c in a)))


def green_matrix(left: np.ndarray, right: np.ndarray | None = None,
                 far: float = GREEN_FAR) -> np.ndarray:
    """Dense matrix g(x_i, y_j) between two point lists.

    Near pairs cost one quadrature per displacement class; far pairs use
    ``green_asymptotic``.
    """
    left = np.asarray(left, dtype=np.int64)
    right = left if right is None else np.asarray(right, dtype=np.int64)
    d = left.shape[1]
    out = np.empty((len(left), len(right)))
    step = max(1, 2_000_000 // max(len(right), 1))
    for lo in range(0, len(left), step):
        diff = left[lo: lo + step, None, :] - right[None, :, :]
        r2 = (diff**2).sum(axis=-1)
        block = green_asymptotic(np.sqrt(r2), d)
        near = r2 <= far * far
        if near.any():
            keys = np.sort(np.abs(diff[near]), axis=1)
            classes, inverse = np.unique(keys, axis=0, return_inverse=True)
            values = np.array([_green_class(tuple(int(c) for c in row)) for row in classes])
            block[near] = values[np.asarray(inverse).ravel()]
        out[lo: lo + step] = block
    return out


def _cube_group(d: int) -> list[tuple[np.ndarray, np.ndarray]]:
    return [
        (np.array(perm), np.array(signs))
        for perm in itertools.permutations(range(d))
        for signs in itertools.product((1, -1), repeat=d)
    ]


def symmetry_orbits(points: np.ndarray) -> np.ndarray:
    """Orbit id per point under the cube symmetries preserving the point set.

    Symmetries act about the centre of the bounding box, so a set without
    symmetry gets one orbit per point.
    """
    pts = np.asarray(points, dtype=np.int64)
    n, d = pts.shape
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    doubled = 2 * pts - (pts.min(axis=0) + pts.max(axis=0))
    ref = doubled[np.lexsort(doubled.T[::-1])]
    images = []
    for perm, signs in _cube_group(d):
        img = doubled[:, perm] * signs
        if np.array_equal(img[np.lexsort(img.T[::-1])], ref):
            images.append(img)
    offset = int(np.abs(doubled).max())
    base = 2 * offset + 1
    weights = base ** np.arange(d - 1, -1, -1, dtype=np.int64)
    keys = np.stack([(img + offset) @ weights for img in images])
    _, orbit = np.unique(keys.min(axis=0), return_inverse=True)
    return np.asarray(orbit).ravel()


# sparse killed operators ----------------------------------------------------


def _index_map(mask: np.ndarray) -> tuple[np.ndarray, int]:
    index = np.full(mask.shape, -1, dtype=np.int64)
    n = int(mask.sum())
    index[mask] = np.arange(n)
    return index, n


def _transition(mask: np.ndarray) -> sp.csr_matrix:
    """One-step transition matrix of the walk restricted to ``mask`` sites."""
    index, n = _index_map(mask)
    d = mask.ndim
    rows, cols = [], []
    for axis in range(d):
        lo = [slice(None)] * d
        hi = [slice(None)] * d
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        a = index[tuple(lo)]
        b = index[tuple(hi)]
        ok = (a >= 0) & (b >= 0)
        rows += [a[ok], b[ok]]
        cols += [b[ok], a[ok]]
    r = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    c = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    data = np.full(len(r), 1.0 / (2 * d))
    return sp.csr_matrix((data, (r, c)), shape=(n, n))


def _neighbour_sum(values: np.ndarray) -> np.ndarray:
    """Σ over the 2d neighbours, with zero outside the array."""
    padded = np.pad(values, 1)
    d = values.ndim
    total = np.zeros_like(values, dtype=float)
    core = tuple(slice(1, -1) for _ in range(d))
    for axis in range(d):
        for shift in (-1, 1):
            sl = list(core)
            sl[axis] = slice(1 + shift, padded.shape[axis] - 1 + shift)
            total += padded[tuple(sl)]
    return total


def _solve(A: sp.csr_matrix, b: np.ndarray, tol: float = CG_RTOL,
           factor: sp_la.SuperLU | None = None) -> np.ndarray:
    """Solve A x = b, direct below ``DIRECT_LIMIT`` unknowns, conjugate gradient above."""
    n = A.shape[0]
    if n == 0:
        return np.zeros(0)
    if factor is not None:
        x = factor.solve(b)
    elif n <= DIRECT_LIMIT:
        x = sp_la.spsolve(A.tocsc(), b)
    else:
        x, info = sp_la.cg(A, b, rtol=tol, atol=0.0, maxiter=20 * n)
        if info != 0:
            residual = float(np.linalg.norm(A @ x - b) / max(np.linalg.norm(b), 1e-300))
            raise NumericError(f"conjugate gradient stopped with info={info}", residual)
    residual = float(np.linalg.norm(A @ x - b) / max(np.linalg.norm(b), 1e-300))
    if residual > max(100 * tol, 1e-9):
        raise NumericError("linear solve did not reach tolerance", residual)
    logger.debug("solved %d unknowns, residual %.2e", n, residual)
    return np.asarray(x)


@dataclass(eq=False)
class GreensSolve:
    """g_U(x, y): expected time at y before leaving U, started from x.

    Columns are solved lazily and cached.
    """

    domain: SiteSet
    tol: float = CG_RTOL
    _columns: dict[int, np.ndarray] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._index, self._n = _index_map(self.domain.mask)
        self._operator = (sp.identity(self._n, format="csr") - _transition(self.domain.mask)).tocsr()
        self._factor = None
        if self._n <= DIRECT_LIMIT and self._n:
            self._factor = sp_la.splu(self._operator.tocsc())

    def _local(self, x: tuple[int, ...]) -> int:
        if x not in self.domain:
            return -1
        idx = tuple(int(c) - l for c, l in zip(x, self.domain.window.lo, strict=True))
        return int(self._index[idx])

    def column(self, y: tuple[int, ...]) -> np.ndarray:
        """g_U(·, y) over the domain sites (lexicographic order)."""
        j = self._local(tuple(y))
        if j < 0:
            return np.zeros(self._n)
        if j not in self._columns:
            b = np.zeros(self._n)
            b[j] = 1.0
            self._columns[j] = _solve(self._operator, b, self.tol, self._factor)
        return self._columns[j]

    def value(self, x: tuple[int, ...], y: tuple[int, ...]) -> float:
        i = self._local(tuple(x))
        if i < 0:
            return 0.0
        return float(self.column(y)[i])

    def symmetry_residual(self, pairs: list[tuple[tuple[int, ...], tuple[int, ...]]]) -> float:
        return max((abs(self.value(x, y) - self.value(y, x)) for x, y in pairs), default=0.0)


def green_killed(U: SiteSet, window: Box | None = None, solve_cap: int = SOLVE_CAP) -> GreensSolve:
    """Green's function of the walk killed outside U.

    Raises:
        CapabilityError: If U exceeds the exact-solve cap
    """
    if window is not None:
        U = U.reframe(window)
    if len(U) > solve_cap:
        raise CapabilityError(f"|U| = {len(U)} exceeds the exact-solve cap {solve_cap}")
    return GreensSolve(U)


# equilibrium measures -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EquilibriumMeasure:
    """e_{K,U} on the sites of K (``base.coords`` order).

    Attributes:
        base: The set K
        ambient: The killing set U, or None for Z^d
        masses: e_{K,U}(x) per site of K
        mode: "exact" or "mc"
        stderr: Standard error of the total (0 for exact)
        bias_bound: Bound on the kill-radius bias (0 for exact)
        truncated: Number of truncated escape trials
    """

    base: SiteSet
    ambient: SiteSet | None
    masses: np.ndarray
    mode: str
    stderr: float = 0.0
    bias_bound: float = 0.0
    truncated: int = 0

    @property
    def total(self) -> float:
        return float(self.masses.sum())

    @property
    def normalized(self) -> np.ndarray:
        total = self.total
        if total <= 0:
            raise ParameterError("normalizing a zero-capacity equilibrium measure")
        return self.masses / total

    @cached_property
    def support(self) -> SiteSet:
        return SiteSet.from_points(self.base.coords[self.masses > 0], window=self.base.window)

    @cached_property
    def _urn(self) -> tuple[DiscreteAliasUrn | None, np.ndarray]:
        keep = np.nonzero(self.masses > 0)[0]
        if not len(keep):
            raise ParameterError("cannot sample from a zero-capacity set")
        if len(keep) == 1:
            return None, keep
        pv = self.masses[keep] / self.masses[keep].sum()
        return DiscreteAliasUrn(pv), keep

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        """Sites drawn from ē via an alias table, shape ``(size, d)`` or ``(d,)``."""
        urn, keep = self._urn
        if size == 0:
            return np.zeros((0, self.base.d), dtype=np.int64)
        count = 1 if size is None else size
        if len(keep) == 1:
            draws = np.zeros(count, dtype=np.int64)
        else:
            draws = np.atleast_1d(urn.rvs(size=count, random_state=rng)).astype(np.int64)
        sites = self.base.coords[keep[draws]]
        return sites[0] if size is None else sites

    def as_array(self, window: Box | None = None) -> np.ndarray:
        """Masses laid out over a window (zero off K)."""
        window = window or self.base.window
        out = np.zeros(window.shape)
        inside = window.contains_array(self.base.coords)
        out[tuple((self.base.coords[inside] - np.asarray(window.lo)).T)] = self.masses[inside]
        return out

    def mass_in(self, region: Box | SiteSet) -> float:
        return float(self.masses[region.contains_array(self.base.coords)].sum())

    def hitting_probability(self, points: np.ndarray, exact: bool = False) -> np.ndarray:
        """P_x[H_K < ∞] = Σ_y g(x, y) e_K(y) for each row of ``points`` (last-exit formula)."""
        points = np.asarray(points, dtype=np.int64).reshape(-1, self.base.d)
        keep = self.masses > 0
        sites, masses = self.base.coords[keep], self.masses[keep]
        if exact:
            return np.minimum(green_matrix(points, sites) @ masses, 1.0)
        out = np.empty(len(points))
        step = max(1, 2_000_000 // max(len(sites), 1))
        for lo in range(0, len(points), step):
            diff = points[lo: lo + step, None, :] - sites[None, :, :]
            r = np.sqrt((diff**2).sum(axis=-1))
            out[lo: lo + step] = green_asymptotic(r, self.base.d) @ masses
        return np.minimum(out, 1.0)

    def reentry(self, points: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Return decision and ē-distributed re-entry sites for escaped walkers."""
        p = self.hitting_probability(points)
        back = rng.random(len(p)) < p
        sites = np.zeros_like(np.asarray(points, dtype=np.int64))
        if back.any():
            sites[back] = self.sample(rng, size=int(back.sum()))
        return back, sites


def _killed_solution(K: SiteSet, U: SiteSet, tol: float = CG_RTOL) -> tuple[np.ndarray, np.ndarray]:
    """Escape masses e_{K,U} and h = P_·[H_K < T_U] laid out over U's window."""
    K = K.reframe(U.window)
    rest = U.mask & ~K.mask
    h = K.mask.astype(float)
    if rest.any():
        d = U.d
        A = (sp.identity(int(rest.sum()), format="csr") - _transition(rest)).tocsr()
        b = _neighbour_sum(K.mask.astype(float))[rest] / (2 * d)
        h[rest] = _solve(A, b, tol)
    e = 1.0 - _neighbour_sum(h) / (2 * U.d)
    masses = np.where(K.mask, e, 0.0)[K.mask]
    return np.clip(masses, 0.0, None), h


def _dense_infinite(K: SiteSet, dense_limit: int = DENSE_LIMIT) -> np.ndarray:
    """e_K on Z^d from G_{∂K} e = 1 on the inner boundary.

    e_K is constant on symmetry orbits, so the system is reduced to one
    unknown per orbit.
    """
    boundary = inner_boundary(K)
    pts = boundary.coords
    orbit = symmetry_orbits(pts)
    m = int(orbit.max()) + 1
    if m > dense_limit:
        raise CapabilityError(f"{m} boundary orbits exceed the dense limit {dense_limit}")
    _, first = np.unique(orbit, return_index=True)
    if m == len(pts):
        G = green_matrix(pts)
        e_boundary = la.solve(G, np.ones(len(pts)), assume_a="pos")
    else:
        collapse = sp.csr_matrix((np.ones(len(pts)), (np.arange(len(pts)), orbit)),
                                 shape=(len(pts), m))
        M = np.empty((m, m))
        step = max(1, 2_000_000 // len(pts))
        for lo in range(0, m, step):
            rows = green_matrix(pts[first[lo: lo + step]], pts)
            M[lo: lo + step] = (collapse.T @ rows.T).T
        e_boundary = la.solve(M, np.ones(m))[orbit]
        logger.debug("dense solve reduced %d boundary sites to %d orbits", len(pts), m)
    masses = np.zeros(len(K))
    masses[boundary.contains_array(K.coords)] = e_boundary
    return np.clip(masses, 0.0, None)


def _richardson_infinite(K: SiteSet, solve_cap: int) -> np.ndarray:
    """e_K on Z^d by killed solves on two windows and extrapolation in 1/R."""
    box = K.bounding_box()
    R = max(3 * box.side, 16)
    estimates = []
    for radius in (R, 2 * R):
        window = box.expand(radius)
        if window.size > solve_cap:
            raise CapabilityError(
                f"window of {window.size} sites for |K| = {len(K)} exceeds the solve cap"
            )
        U = SiteSet.from_box(window)
        masses, _ = _killed_solution(K.reframe(window), U)
        estimates.append(masses)
    logger.debug("extrapolated capacity from radii %d and %d", R, 2 * R)
    return np.clip(2 * estimates[1] - estimates[0], 0.0, None)


def _mc_infinite(
    K: SiteSet, n: int, cfg: WalkConfig, rng: np.random.Generator
) -> tuple[np.ndarray, float, float, int]:
    boundary = inner_boundary(K)
    pts = boundary.coords
    starts = np.repeat(pts, n, axis=0)
    box = K.bounding_box()
    escape = cfg.escape_box(box)
    result = walks.first_hits(starts, K, escape, cfg, rng)
    escaped = (~result.hit).reshape(len(pts), n).astype(float)
    center = (np.asarray(box.lo) + np.asarray(box.hi) - 1) / 2
    g_far = float(green_asymptotic(cfg.radius(box), K.d))
    if cfg.return_correction:
        r = np.sqrt(((result.points - center) ** 2).sum(axis=1)).reshape(len(pts), n)
        back = escaped * green_asymptotic(r, K.d)
        A, B = escaped.mean(axis=1).sum(), back.mean(axis=1).sum()
        cap = A / (1.0 + B)
        per_trial = escaped - cap * back
        bias = cap * (cap * g_far) ** 2
    else:
        per_trial = escaped
        cap = per_trial.mean(axis=1).sum()
        bias = cap * cap * g_far
    e_boundary = per_trial.mean(axis=1)
    stderr = float(np.sqrt((per_trial.var(axis=1, ddof=1) / n).sum())) if n > 1 else float("nan")
    masses = np.zeros(len(K))
    masses[boundary.contains_array(K.coords)] = e_boundary
    return np.clip(masses, 0.0, None), stderr, bias, int(result.truncated.sum())


def equilibrium_measure(
    K: SiteSet,
    U: SiteSet | None = None,
    mode: Mode = "exact",
    n: int = 1000,
    cfg: WalkConfig | None = None,
    rng: np.random.Generator | None = None,
    solve_cap: int = SOLVE_CAP,
    dense_limit: int = DENSE_LIMIT,
) -> EquilibriumMeasure:
    """e_{K,U}(x) = P_x[H̃_K > T_U] for x ∈ K.

    Args:
        K: The set whose equilibrium measure is wanted
        U: Killing set containing K, or None for Z^d
        mode: "exact" (linear solves) or "mc" (escape trials, U must be None)
        n: Escape trials per boundary site in mc mode
        cfg: Kill-radius policy for mc mode
        rng: Generator for mc mode
        solve_cap: Largest number of unknowns for exact sparse solves
        dense_limit: Largest |∂K| for the dense infinite-volume solve

    Returns:
        EquilibriumMeasure with masses per site of K

    Raises:
        ParameterError: If K ⊄ U or the mode is unknown
        CapabilityError: If an exact solve exceeds the caps
    """
    if U is not None:
        if len(K) and not U.contains_array(K.coords).all():
            raise ParameterError("K must be a subset of U")
    if not len(K):
        return EquilibriumMeasure(K, U, np.zeros(0), mode)
    if mode == "exact":
        if U is not None:
            if len(U) > solve_cap:
                raise CapabilityError(f"|U| = {len(U)} exceeds the exact-solve cap {solve_cap}")
            masses, _ = _killed_solution(K, U)
        else:
            try:
                masses = _dense_infinite(K, dense_limit)
            except CapabilityError:
                masses = _richardson_infinite(K, solve_cap)
        return EquilibriumMeasure(K, U, masses, "exact")
    if mode == "mc":
        if U is not None:
            raise ParameterError("mc mode estimates the measure on Z^d only")
        if n < 1:
            raise ParameterError(f"mc mode needs at least one trial per site, got {n}")
        cfg = cfg or WalkConfig()
        rng = rng if rng is not None else np.random.default_rng()
        masses, stderr, bias, truncated = _mc_infinite(K, n, cfg, rng)
        logger.info("mc capacity %.6f ± %.2e (bias ≤ %.1e, %d truncated)",
                    masses.sum(), stderr, bias, truncated)
        return EquilibriumMeasure(K, None, masses, "mc", stderr, bias, truncated)
    raise ParameterError(f"unknown mode {mode!r}")


def capacity(K: SiteSet, mode: Mode = "exact", rng: np.random.Generator | None = None,
             U: SiteSet | None = None, **kwargs) -> float:
    """cap_U(K), the total mass of the equilibrium measure."""
    if not len(K):
        return 0.0
    return equilibrium_measure(K, U, mode=mode, rng=rng, **kwargs).total


def sample_entrance(measure: EquilibriumMeasure, rng: np.random.Generator,
                    size: int | None = None) -> np.ndarray:
    """Site(s) drawn from ē_K.

    Raises:
        ParameterError: If cap(K) = 0
    """
    if measure.total <= 0:
        raise ParameterError("zero-capacity set has no entrance law")
    return measure.sample(rng, size=size)


@lru_cache(maxsize=64)
def box_capacity(side: int, d: int) -> float:
    """Exact cap of a cube with ``side`` sites per axis."""
    if side < 1:
        return 0.0
    return capacity(SiteSet.from_box(Box((0,) * d, (side,) * d)))


def box_capacity_bounds(L: int, d: int) -> tuple[float, float]:
    """Loose two-sided bounds c L^{d-2} ≤ cap(B_L) ≤ C L^{d-2}."""
    scale = float(max(L, 1)) ** (d - 2)
    return 0.3 * scale, 5.0 * scale


@dataclass(frozen=True)
class SweepingReport:
    """Both sides of cap_U(K) = cap_U(K′)·P_{ē_{K′,U}}[H_K < T_U]."""

    lhs: float
    rhs: float
    hit_probability: float

    @property
    def relative_error(self) -> float:
        return abs(self.lhs - self.rhs) / max(abs(self.lhs), 1e-300)


def sweeping_identity(K: SiteSet, K_prime: SiteSet, U: SiteSet) -> SweepingReport:
    """Evaluate the sweeping identity exactly inside the killing set U.

    Raises:
        GeometryError: If K ⊄ K′ or K′ ⊄ U
    """
    if not K_prime.contains_array(K.coords).all():
        raise GeometryError("sweeping needs K ⊆ K′")
    if not U.contains_array(K_prime.coords).all():
        raise GeometryError("sweeping needs K′ ⊆ U")
    masses_k, h_k = _killed_solution(K, U)
    masses_kp, _ = _killed_solution(K_prime, U)
    kp = K_prime.reframe(U.window)
    h_on_kp = h_k[kp.mask]
    cap_kp = masses_kp.sum()
    hit = float((masses_kp / cap_kp) @ h_on_kp)
    return SweepingReport(lhs=float(masses_k.sum()), rhs=float(cap_kp * hit), hit_probability=hit)


def entrance_kernel(x: np.ndarray, measure: EquilibriumMeasure, factor=None) -> np.ndarray:
    """P_x[H_K < ∞, X_{H_K} = y] per site y of K (zero off ∂K).

    Uses g(x, ∂K) = H(x, ·) G_{∂K}; ``factor`` is an ``lu_factor`` of G_{∂K}.
    """
    K = measure.base
    boundary = inner_boundary(K)
    pts = boundary.coords
    if factor is None:
        factor = la.lu_factor(green_matrix(pts))
    rhs = green_matrix(np.atleast_2d(x), pts).T
    row = la.lu_solve(factor, rhs).T[0]
    out = np.zeros(len(K))
    out[boundary.contains_array(K.coords)] = np.clip(row, 0.0, None)
    return out

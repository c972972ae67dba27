"""Tests for Green's functions, equilibrium measures and capacities."""
import numpy as np
import pytest

from rilab.errors import CapabilityError, GeometryError, ParameterError
from rilab.lattice import Box, SiteSet
from rilab.potential import (
    box_capacity,
    box_capacity_bounds,
    capacity,
    entrance_kernel,
    equilibrium_measure,
    green_function,
    green_killed,
    sweeping_identity,
    symmetry_orbits,
)
from rilab.walks import WalkConfig

G0 = 1.516386015


def point(d=3):
    return SiteSet.from_points([(0,) * d])


class TestGreenFunction:
    """Test the lattice Green's function."""

    def test_origin_value(self):
        """g(0) for Z³ matches Watson's constant."""
        assert green_function((0, 0, 0)) == pytest.approx(G0, rel=1e-6)

    def test_neighbour_from_harmonicity(self):
        """g(0) = 1 + g(e₁) for the unit-rate walk."""
        assert green_function((1, 0, 0)) == pytest.approx(G0 - 1, rel=1e-6)

    def test_cube_symmetry(self):
        """g is invariant under coordinate permutations and sign flips."""
        assert green_function((1, 2, 0)) == green_function((0, -2, 1))

    def test_recurrent_dimension_rejected(self):
        """There is no Green's function in d = 2."""
        with pytest.raises(ParameterError):
            green_function((0, 0))


class TestEquilibriumMeasure:
    """Test exact and Monte Carlo equilibrium measures."""

    def test_point_capacity(self):
        """cap({0}) = 1/g(0)."""
        assert capacity(point()) == pytest.approx(1 / G0, rel=1e-6)

    def test_two_point_capacity(self):
        """cap({0, e₁}) = 2/(g(0) + g(e₁))."""
        K = SiteSet.from_points([(0, 0, 0), (1, 0, 0)])
        assert capacity(K) == pytest.approx(2 / (2 * G0 - 1), rel=1e-6)

    def test_interior_carries_no_mass(self):
        """Only the inner boundary of K has escape mass."""
        measure = equilibrium_measure(SiteSet.from_box(Box.ball(1, 3)))
        assert measure.mass_in(Box.ball(0, 3)) == 0.0
        assert measure.total > 0

    def test_killing_increases_escape(self):
        """cap_U(K) ≥ cap(K) for a finite killing set."""
        U = SiteSet.from_box(Box.ball(5, 3))
        assert capacity(point(), U=U) > capacity(point())

    def test_killing_set_equal_to_K(self):
        """A walk leaving K is killed at once, so e_{K,K} = 1."""
        assert equilibrium_measure(point(), point()).masses.tolist() == [1.0]

    def test_K_outside_U_rejected(self):
        """K must be a subset of the killing set."""
        U = SiteSet.from_points([(5, 5, 5)])
        with pytest.raises(ParameterError):
            equilibrium_measure(point(), U)

    def test_empty_set(self):
        """The empty set has zero capacity."""
        empty = SiteSet.empty(Box.ball(1, 3))
        assert capacity(empty) == 0.0
        assert equilibrium_measure(empty).total == 0.0

    def test_mc_mode_rejects_killing_set(self):
        """Escape trials estimate measures on Z^d only."""
        with pytest.raises(ParameterError):
            equilibrium_measure(point(), point(), mode="mc")

    def test_unknown_mode(self):
        """Modes other than exact and mc are refused."""
        with pytest.raises(ParameterError):
            equilibrium_measure(point(), mode="magic")

    def test_solve_cap(self):
        """Killed solves beyond the cap raise a capability error."""
        with pytest.raises(CapabilityError):
            equilibrium_measure(point(), SiteSet.from_box(Box.ball(5, 3)), solve_cap=100)

    def test_mc_point_capacity(self, rng):
        """Escape trials estimate cap({0}) within a few standard errors."""
        measure = equilibrium_measure(point(), mode="mc", n=20_000, cfg=WalkConfig(kappa=8),
                                      rng=rng)
        assert measure.mode == "mc"
        assert measure.stderr > 0
        assert measure.total == pytest.approx(1 / G0, abs=0.03)

    def test_sample_lands_on_support(self, rng):
        """Entrance sites come from the boundary of K."""
        measure = equilibrium_measure(SiteSet.from_box(Box.ball(1, 3)))
        sites = measure.sample(rng, size=50)
        assert sites.shape == (50, 3)
        assert (np.abs(sites).max(axis=1) == 1).all()

    def test_normalized_sums_to_one(self):
        """ē_K is a probability vector."""
        measure = equilibrium_measure(SiteSet.from_box(Box.ball(1, 3)))
        assert measure.normalized.sum() == pytest.approx(1.0)


class TestBoxCapacity:
    """Test cube capacities."""

    def test_unit_cube_is_a_point(self):
        """A cube of side 1 is a single site."""
        assert box_capacity(1, 3) == pytest.approx(1 / G0, rel=1e-6)

    def test_growth_within_bounds(self):
        """cap grows with the side and stays within c L ≤ cap ≤ C L."""
        caps = [box_capacity(side, 3) for side in (1, 2, 3, 4)]
        assert caps == sorted(caps)
        for side, cap in zip((1, 2, 3, 4), caps, strict=True):
            lo, hi = box_capacity_bounds(side, 3)
            assert lo <= cap <= hi


class TestSweeping:
    """Test the sweeping identity."""

    def test_identity_holds_exactly(self):
        """cap_U(K) = cap_U(K′)·P_{ē_{K′,U}}[H_K < T_U] to solver precision."""
        U = SiteSet.from_box(Box.ball(6, 3))
        K_prime = SiteSet.from_box(Box.ball(2, 3))
        report = sweeping_identity(point(), K_prime, U)
        assert report.relative_error < 1e-8
        assert 0 < report.hit_probability < 1

    def test_needs_nesting(self):
        """K must lie inside K′."""
        U = SiteSet.from_box(Box.ball(6, 3))
        with pytest.raises(GeometryError):
            sweeping_identity(SiteSet.from_box(Box.ball(2, 3)), point(), U)


class TestKilledGreen:
    """Test the killed Green's function."""

    def test_symmetry(self):
        """g_U(x, y) = g_U(y, x)."""
        g = green_killed(SiteSet.from_box(Box.ball(3, 3)))
        assert g.symmetry_residual([((0, 0, 0), (1, 2, 0)), ((1, 1, 1), (-2, 0, 1))]) < 1e-10

    def test_outside_domain_is_zero(self):
        """A start outside U spends no time in U."""
        g = green_killed(SiteSet.from_box(Box.ball(2, 3)))
        assert g.value((5, 0, 0), (0, 0, 0)) == 0.0


class TestEntranceKernel:
    """Test the harmonic measure from a far point."""

    def test_total_is_hitting_probability(self):
        """Σ_y P_x[X_{H_K} = y] = P_x[H_K < ∞] for x outside K."""
        measure = equilibrium_measure(SiteSet.from_box(Box.ball(1, 3)))
        x = np.array([6, 0, 0])
        row = entrance_kernel(x, measure)
        expected = measure.hitting_probability(x[None, :], exact=True)[0]
        assert row.sum() == pytest.approx(expected, rel=1e-6)


class TestSymmetryOrbits:
    """Test orbit reduction."""

    def test_cube_faces(self):
        """The 26 boundary sites of B_1 fall into three orbits."""
        pts = Box.ball(1, 3).sites()
        pts = pts[np.abs(pts).max(axis=1) == 1]
        assert len(np.unique(symmetry_orbits(pts))) == 3

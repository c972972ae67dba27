"""Tests for boxes, site sets, boundaries and the file formats."""
import numpy as np
import pytest

from rilab.errors import GeometryError, ParameterError, PathError
from rilab.lattice import (
    AnnulusSpec,
    Box,
    LatticePath,
    SiteSet,
    box_family,
    component_of,
    components,
    euclidean_ball,
    exterior_boundary,
    fill,
    inner_boundary,
    is_connected,
    outer_boundary,
    read_path,
    read_sites,
    surrounds,
    write_path,
    write_sites,
)


def random_connected(rng: np.random.Generator, r: int = 3, margin: int = 4) -> SiteSet:
    """Origin component of a random subset of B_r, laid out in B_{r+margin}."""
    window = Box.ball(r + margin, 3)
    mask = Box.ball(r, 3).mask_in(window) & (rng.random(window.shape) < rng.uniform(0.3, 0.8))
    mask[Box.ball(0, 3).mask_in(window)] = True
    return component_of(SiteSet(window, mask), (0, 0, 0))


def hollow_cube(r: int, margin: int = 2) -> SiteSet:
    """∂B_r laid out with some room around it."""
    window = Box.ball(r + margin, 3)
    return SiteSet(window, Box.ball(r, 3).mask_in(window) & ~Box.ball(r - 1, 3).mask_in(window))


class TestBox:
    """Test half-open boxes."""

    def test_ball_is_closed(self):
        """B_r holds 2r+1 sites per axis."""
        box = Box.ball(2, 3)
        assert box.shape == (5, 5, 5)
        assert box.contains((2, -2, 0))
        assert not box.contains((3, 0, 0))

    def test_negative_extent_rejected(self):
        """A box with hi < lo is a geometry error."""
        with pytest.raises(GeometryError):
            Box((0, 0), (-1, 2))

    def test_intersect_of_disjoint_boxes_is_empty(self):
        """Disjoint boxes intersect in an empty box."""
        a = Box((0, 0), (2, 2))
        b = Box((5, 5), (7, 7))
        assert a.intersect(b).is_empty()

    def test_slices_address_the_window_array(self):
        """Slices of a sub-box select exactly its sites."""
        window = Box.ball(3, 2)
        inner = Box.ball(1, 2)
        grid = np.zeros(window.shape, dtype=int)
        grid[inner.slices(window)] = 1
        assert grid.sum() == inner.size

    def test_slices_outside_window_raise(self):
        """A box sticking out of the window has no slices."""
        with pytest.raises(GeometryError):
            Box.ball(4, 2).slices(Box.ball(3, 2))

    def test_gap_inf(self):
        """ℓ∞ gap between boxes counts lattice steps between nearest sites."""
        a = Box((0, 0), (2, 2))
        b = Box((5, 0), (6, 1))
        assert a.gap_inf(b) == 4


class TestSiteSet:
    """Test the mask-backed site set."""

    def test_from_points_round_trip(self):
        """Points come back in lexicographic order."""
        s = SiteSet.from_points([(1, 0), (0, 0), (0, 1)])
        assert [tuple(r) for r in s.coords] == [(0, 0), (0, 1), (1, 0)]
        assert len(s) == 3

    def test_point_outside_window_raises(self):
        """Every point must lie in the given window."""
        with pytest.raises(GeometryError):
            SiteSet.from_points([(9, 9)], window=Box.ball(1, 2))

    def test_equality_ignores_window(self):
        """Two layouts of the same sites compare equal."""
        s = SiteSet.from_points([(0, 0, 0)])
        assert s == s.reframe(Box.ball(3, 3))

    def test_set_algebra(self):
        """Union, intersection and difference act on sites."""
        window = Box.ball(2, 2)
        a = SiteSet.from_box(Box.ball(1, 2), window)
        b = SiteSet.from_points([(0, 0), (2, 2)], window=window)
        assert len(a | b) == 10
        assert len(a & b) == 1
        assert len(a - b) == 8
        assert (a & b).issubset(a)

    def test_mask_is_read_only(self):
        """Site sets are immutable."""
        s = SiteSet.from_box(Box.ball(1, 2))
        with pytest.raises(ValueError):
            s.mask[0, 0] = False

    def test_euclidean_ball_of_radius_one(self):
        """B²_1 in Z³ is the origin and its six neighbours."""
        assert len(euclidean_ball(1, 3)) == 7


class TestBoundaries:
    """Test inner, outer and exterior boundaries."""

    def test_inner_boundary_of_a_cube(self):
        """∂B_1 is B_1 minus its centre."""
        cube = SiteSet.from_box(Box.ball(1, 3), Box.ball(3, 3))
        assert len(inner_boundary(cube)) == 26

    def test_outer_boundary_of_a_point(self):
        """∂^out of a site is its 2d neighbours."""
        point = SiteSet.from_points([(0, 0, 0)], margin=1)
        assert len(outer_boundary(point)) == 6

    def test_outer_boundary_needs_margin(self):
        """Without room around the set the outer boundary is undefined."""
        with pytest.raises(GeometryError):
            outer_boundary(SiteSet.from_box(Box.ball(1, 2)))

    def test_fill_closes_cavities(self):
        """Fill of a hollow cube is the solid cube."""
        filled = fill(hollow_cube(2))
        assert filled == SiteSet.from_box(Box.ball(2, 3))

    def test_exterior_boundary_skips_the_cavity(self):
        """∂^ext of a hollow cube only sees the outside."""
        ext = exterior_boundary(hollow_cube(2))
        assert (0, 0, 0) not in ext
        assert (3, 0, 0) in ext
        assert (1, 0, 0) not in ext

    def test_surrounds(self):
        """A closed shell separates its inside from the window edge."""
        shell = hollow_cube(2, margin=3)
        origin = SiteSet.from_points([(0, 0, 0)], window=shell.window)
        outside = SiteSet.from_points([(3, 0, 0)], window=shell.window)
        assert surrounds(origin, shell)
        assert not surrounds(outside, shell)

    def test_fill_keeps_random_sets_connected(self, rng):
        """Fill of a connected set is connected and contains it."""
        for _ in range(40):
            U = random_connected(rng)
            filled = fill(U)
            assert is_connected(filled)
            assert U.issubset(filled)

    def test_exterior_boundary_of_random_sets(self, rng):
        """∂^ext of a connected set is *-connected and equals ∂^out Fill."""
        for _ in range(40):
            U = random_connected(rng)
            ext = exterior_boundary(U)
            assert is_connected(ext, "star")
            assert ext == outer_boundary(fill(U))
            assert ext.isdisjoint(U)

    def test_surrounds_is_transitive_on_nested_boundaries(self, rng):
        """U ⪯ ∂^ext U ⪯ ∂^ext(Fill U ∪ ∂^ext U), hence U ⪯ the outer one."""
        for _ in range(40):
            U = random_connected(rng)
            inner = exterior_boundary(U)
            outer = exterior_boundary(fill(U) | inner)
            assert surrounds(U, U)
            assert surrounds(U, inner)
            assert surrounds(inner, outer)
            assert surrounds(U, outer)
            assert outer.isdisjoint(inner)


class TestConnectivity:
    """Test labeling helpers."""

    def test_star_adjacency_joins_diagonals(self):
        """Diagonal neighbours are connected only under *-adjacency."""
        s = SiteSet.from_points([(0, 0), (1, 1)], margin=1)
        assert not is_connected(s)
        assert is_connected(s, "star")
        assert len(components(s)) == 2

    def test_component_of_site_outside_set_is_empty(self):
        """A site not in U has an empty component."""
        s = SiteSet.from_points([(0, 0)], margin=1)
        assert len(component_of(s, (1, 0))) == 0


class TestBoxFamily:
    """Test the nested boxes attached to an anchor."""

    def test_nesting(self):
        """C ⊂ C̃ ⊂ D̃ ⊂ D ⊂ U with the documented extents."""
        family = box_family((0, 0, 0), 2, 10, k_min=10)
        assert family.C == Box((0, 0, 0), (2, 2, 2))
        assert family.D == Box((-6,) * 3, (8,) * 3)
        assert family.U == Box((-19,) * 3, (21,) * 3)

    def test_small_K_rejected(self):
        """K below the minimum is a parameter error."""
        with pytest.raises(ParameterError):
            box_family((0, 0, 0), 2, 50)


class TestPaths:
    """Test lattice paths."""

    def test_non_adjacent_step_rejected(self):
        """A jump of two sites is not a nearest-neighbour path."""
        with pytest.raises(PathError):
            LatticePath(np.array([[0, 0], [2, 0]]))

    def test_crossing(self):
        """A straight walk from 0 to 3 crosses from B_0 out of B_2."""
        gamma = LatticePath(np.array([[i, 0] for i in range(4)]))
        assert gamma.crosses(Box.ball(0, 2), Box.ball(2, 2))
        assert not gamma.crosses(Box.ball(0, 2), Box.ball(3, 2))


class TestAnnulus:
    """Test the region shapes."""

    def test_sigma_only_for_euclidean_annulus(self):
        """A nonzero sigma is rejected for the other kinds."""
        with pytest.raises(ParameterError):
            AnnulusSpec("euclidean-ball", 5, sigma=0.1)

    def test_annulus_excludes_inner_ball(self):
        """The annulus region leaves out B²_{σN}."""
        region = AnnulusSpec("euclidean-annulus", 6, sigma=0.3).region(3)
        assert (0, 0, 0) not in region
        assert (6, 0, 0) in region


class TestFileFormats:
    """Test site-set and path files."""

    def test_sites_round_trip(self, temp_dir):
        """Written sites read back equal."""
        s = SiteSet.from_points([(0, 0, 0), (1, 2, 3)])
        write_sites(temp_dir / "s.txt", s)
        assert read_sites(temp_dir / "s.txt") == s

    def test_wrong_coordinate_count(self, temp_dir):
        """A row with the wrong number of coordinates names the line."""
        (temp_dir / "bad.txt").write_text("d=3\n0 0 0\n1 2\n")
        with pytest.raises(GeometryError, match=":3:"):
            read_sites(temp_dir / "bad.txt")

    def test_path_round_trip(self, temp_dir):
        """Written paths read back with the same vertices."""
        gamma = LatticePath(np.array([[0, 0, 0], [0, 0, 1], [0, 1, 1]]))
        write_path(temp_dir / "p.txt", gamma)
        assert np.array_equal(read_path(temp_dir / "p.txt").vertices, gamma.vertices)

    def test_path_needs_header(self, temp_dir):
        """A path file without the 'path' keyword is rejected."""
        (temp_dir / "p.txt").write_text("d=2\n0 0\n")
        with pytest.raises(GeometryError):
            read_path(temp_dir / "p.txt")

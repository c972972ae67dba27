"""Tests for shells, coarsenings, capacities and the good event."""
import math

import numpy as np
import pytest

from rilab.coarse import (
    GoodEventSpec,
    band_count,
    band_sites,
    build_shells,
    capacity_ratio,
    check_coarsening,
    extract_coarsening,
    family_stats,
    gamma_entropy,
    good_event_bruteforce,
    good_event_check,
    h_scale,
    in_band,
    line_coarsening,
    random_crossing,
    segment_capacity,
    sigma_capacity,
)
from rilab.errors import ParameterError, PathError
from rilab.lattice import AnnulusSpec, LatticePath

G0 = 1.516386015


@pytest.fixture(scope="module")
def shells():
    """Two shells of radius 3√3·10·i inside B²_160."""
    return build_shells(160, 10, 1, k_min=10)


class TestScales:
    """Test h and Γ."""

    def test_h_is_identity_in_three_dimensions(self):
        """h(x) = x for d = 3."""
        assert h_scale(7.0, 3) == 7.0

    def test_h_has_log_correction_above(self):
        """h(e) = 2e for d ≥ 4."""
        assert h_scale(math.e, 4) == pytest.approx(2 * math.e)

    def test_gamma(self):
        """Γ(1) = C/K in d = 3."""
        assert gamma_entropy(1.0, 10, 3, C=2.0) == pytest.approx(0.2)


class TestBands:
    """Test exact counting of boxes meeting a sphere."""

    def test_unit_sphere(self):
        """Around radius 1 the folded boxes are the origin's and its three axis neighbours."""
        assert band_count(1, 1, 3) == 32

    @pytest.mark.parametrize("r2,L", [(50, 2), (200, 3), (9, 1)])
    def test_count_matches_brute_force(self, r2, L):
        """The row count agrees with testing every box."""
        k = np.stack(np.meshgrid(*[np.arange(-12, 12)] * 3, indexing="ij"), axis=-1)
        assert band_count(r2, L, 3) == int(in_band(k, r2, L).sum())

    def test_sites_lie_in_band(self):
        """Listed corners are exactly the counted boxes."""
        sites = band_sites(50, 2, 3)
        assert len(sites) == band_count(50, 2, 3)
        assert in_band(sites // 2, 50, 2).all()
        assert len({tuple(s) for s in sites.tolist()}) == len(sites)

    def test_limit(self):
        """Listing stops once the limit is exceeded."""
        with pytest.raises(ParameterError):
            band_sites(10_000, 1, 3, limit=100)


class TestShells:
    """Test the shell system."""

    def test_layout(self, shells):
        """B²_160 fits two shells of unit 3√3·10."""
        assert shells.n == 2
        assert shells.unit == pytest.approx(30 * math.sqrt(3))
        assert shells.guaranteed_separation == 28

    def test_production_geometry(self):
        """N = 26000, K = 100, L = 5 gives nine shells."""
        assert build_shells(26_000, 100, 5).n == 9

    def test_too_small(self):
        """A radius below two shell units is rejected."""
        with pytest.raises(ParameterError, match="too small"):
            build_shells(100, 10, 1, k_min=10)

    def test_small_K(self):
        """K below the minimum is rejected."""
        with pytest.raises(ParameterError):
            build_shells(10_000, 10, 1)

    def test_candidates_belong_to_shell(self, shells):
        """Every candidate passes the membership test."""
        cand = shells.candidates(1)
        assert len(cand) == shells.counts[0]
        assert all(shells.contains(1, z) for z in cand[:50])

    def test_corner_must_be_on_lattice(self):
        """Non-multiples of L are never corners."""
        s = build_shells(320, 10, 2, k_min=10)
        assert not s.contains(1, (1, 0, 0))

    def test_index_range(self, shells):
        """Shell indices run from 1 to n."""
        with pytest.raises(ParameterError):
            shells.candidates(0)

    def test_family_stats(self, shells):
        """log|𝒜| sums the per-shell logarithms and respects the volume bounds."""
        stats = family_stats(shells, gamma_c=1.0)
        assert stats.log_family == pytest.approx(sum(math.log(c) for c in shells.counts))
        assert stats.within_volume


class TestCoarsening:
    """Test extraction and the mechanical checks."""

    def test_random_crossing_reaches_sphere(self, rng):
        """The walk starts at 0 and stops on ∂B²_N."""
        gamma = random_crossing(40, rng)
        assert tuple(gamma.vertices[0]) == (0, 0, 0)
        r2 = int((gamma.vertices[-1] ** 2).sum())
        assert r2 <= 1600
        assert ((gamma.vertices[:-1] ** 2).sum(axis=1) <= 1600).all()

    def test_bias_range(self, rng):
        """The drift must lie in (0, 1]."""
        with pytest.raises(ParameterError):
            random_crossing(40, rng, bias=0.0)

    def test_extracted_coarsening_is_admissible(self, shells, rng):
        """Extraction from a crossing passes every check."""
        gamma = random_crossing(shells.N, rng)
        C = extract_coarsening(gamma, shells)
        report = check_coarsening(C, shells, gamma, a=0.1)
        assert report.n == 2
        assert report.passed
        assert report.separation >= shells.guaranteed_separation

    def test_non_crossing_rejected(self, shells):
        """A path that never reaches ∂B²_N has no coarsening."""
        gamma = LatticePath(np.array([[0, 0, 0], [1, 0, 0]]))
        with pytest.raises(PathError):
            extract_coarsening(gamma, shells)

    def test_line_coarsening(self):
        """Corners sit a shell gap apart on the first axis."""
        C = line_coarsening(3, 10, 1)
        assert C.separation() == 30
        assert len(C.boxes()) == 3


class TestCapacities:
    """Test capacities of segments and Σ(𝒞)."""

    def test_single_site_segment(self):
        """cap of T_0 is 1/G(0)."""
        cap, approximate = segment_capacity(0)
        assert cap == pytest.approx(1 / G0, rel=1e-6)
        assert not approximate

    def test_one_box_block_matches_exact(self):
        """With one box the block approximation is the exact capacity."""
        C = line_coarsening(1, 10, 1)
        assert sigma_capacity(C, "block") == pytest.approx(sigma_capacity(C, "exact"), rel=1e-9)

    def test_rho_range(self):
        """ρ must lie in [0, 1)."""
        with pytest.raises(ParameterError):
            capacity_ratio(line_coarsening(2, 10, 1), 1.0)


class TestGoodEvent:
    """Test 𝒢 on a small shell system."""

    def test_all_good(self, shells):
        """With no bad boxes 𝒢 holds on every shell."""
        spec = GoodEventSpec.from_bad(AnnulusSpec("euclidean-ball", shells.N), 1.0, [])
        report = good_event_check(spec, shells)
        assert report.verdict
        assert report.good_shells == 2

    def test_bad_box_is_certificate(self, shells):
        """One bad box in shell 1 yields a coarsening through it."""
        bad = tuple(int(c) for c in shells.candidates(1)[5])
        spec = GoodEventSpec.from_bad(AnnulusSpec("euclidean-ball", shells.N), 1.0, [bad])
        report = good_event_check(spec, shells)
        assert not report.verdict
        assert tuple(report.certificate[0]) == bad

    def test_half_good_is_enough(self, shells):
        """ρ = 1/2 tolerates one bad shell of two."""
        bad = tuple(int(c) for c in shells.candidates(2)[0])
        spec = GoodEventSpec.from_bad(AnnulusSpec("euclidean-ball", shells.N), 0.5, [bad])
        assert good_event_check(spec, shells).verdict

    def test_shells_must_match_ball(self, shells):
        """𝒢 is only decided for the ball the shells were built for."""
        spec = GoodEventSpec.from_bad(AnnulusSpec("euclidean-ball", 200), 1.0, [])
        with pytest.raises(ParameterError):
            good_event_check(spec, shells)

    def test_bruteforce_limit(self, shells):
        """Enumeration refuses systems beyond its limit."""
        spec = GoodEventSpec.from_bad(AnnulusSpec("euclidean-ball", shells.N), 1.0, [])
        with pytest.raises(ParameterError):
            good_event_bruteforce(spec, shells, limit=1000)

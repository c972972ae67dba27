"""Tests for global, box-local, fine and boosted events."""
import numpy as np
import pytest

from rilab.errors import FamilySizeError, GeometryError, ParameterError
from rilab.events import (
    EventResult,
    EventSpec,
    box_measure,
    connected,
    dis,
    event_trial,
    event_window,
    eval_boosted,
    exist,
    fe,
    gluing_check,
    label_clusters,
    locuniq,
    lu,
    lu_tilde,
    o_minus_set,
    o_occ,
    one_arm,
    script_c,
    slu,
    slu_on_grid,
    tau_tr,
    two_arms,
    two_point,
    unique,
    v_z,
    w_minus,
)
from rilab.excursions import Excursion, Packet, PacketFamily
from rilab.interlacements import VacantField, sample_process
from rilab.lattice import AnnulusSpec, Box
from rilab.walks import WalkConfig

QUICK = WalkConfig(kappa=2)
TINY = 1e-9


def field(window: Box, vacant: np.ndarray, u: float = 1.0) -> VacantField:
    return VacantField(window, u, vacant, (~vacant).astype(np.int64))


def all_vacant(r: int) -> VacantField:
    window = Box.ball(r, 3)
    return field(window, np.ones(window.shape, dtype=bool))


def all_occupied(r: int) -> VacantField:
    window = Box.ball(r, 3)
    return field(window, np.zeros(window.shape, dtype=bool))


def split_by_plane(r: int) -> VacantField:
    """Vacant everywhere except the plane x = 0."""
    window = Box.ball(r, 3)
    vacant = np.ones(window.shape, dtype=bool)
    vacant[r] = False
    return field(window, vacant)


def packet(*sites) -> Packet:
    return Packet(tuple(Excursion(np.array([s])) for s in sites))


class TestEventSpec:
    """Test event parameter validation."""

    def test_unknown_event(self):
        """Only known events can be specified."""
        with pytest.raises(ParameterError):
            EventSpec("percolates", L=2)

    def test_box_local_needs_anchor(self):
        """Box-local events need z."""
        with pytest.raises(ParameterError):
            EventSpec("dis", L=2)

    def test_noise_level_below_half(self):
        """δ is restricted to [0, 1/2)."""
        with pytest.raises(ParameterError):
            EventSpec("exist", L=2, delta=0.5)

    def test_params_skip_unset(self):
        """Only set parameters are reported."""
        assert EventSpec("exist", L=3, u=0.5).params() == {"d": 3, "L": 3, "u": 0.5}

    def test_windows(self):
        """Each event reads the documented box."""
        assert event_window(EventSpec("exist", L=3)) == Box.ball(3, 3)
        assert event_window(EventSpec("slu", L=3)) == Box.ball(6, 3)
        assert event_window(EventSpec("dis", L=1, z=(0, 0, 0))) == Box((-3,) * 3, (4,) * 3)
        assert event_window(EventSpec("w_minus", z=(0, 0, 0), L0_minus=6)) == \
            Box((-6,) * 3, (12,) * 3)


class TestGlobalEvents:
    """Test events around the origin."""

    def test_exist(self):
        """A vacant box has a large cluster, an occupied one has none."""
        assert exist(all_vacant(4), 4).verdict
        assert not exist(all_occupied(4), 4).verdict

    def test_exist_needs_coverage(self):
        """The field must cover B_L."""
        with pytest.raises(GeometryError):
            exist(all_vacant(2), 4)

    def test_unique(self):
        """A separating plane leaves two large clusters in different components."""
        assert unique(all_vacant(6), all_vacant(6), 3).verdict
        split = split_by_plane(6)
        result = unique(split, split, 3)
        assert not result.verdict
        assert len(result.witnesses["clusters"]) == 2

    def test_annulus_events(self):
        """A vacant ball has one crossing; a plane through it makes two."""
        annulus = AnnulusSpec("euclidean-annulus", 4, sigma=0.3)
        assert locuniq(all_vacant(6), annulus).verdict
        assert not two_arms(all_vacant(6), annulus).verdict
        assert two_arms(split_by_plane(6), annulus).verdict

    def test_connected_and_truncated_two_point(self):
        """A vacant pocket links its sites and stays finite."""
        window = Box.ball(3, 3)
        vacant = np.zeros(window.shape, dtype=bool)
        vacant[3, 3, 3] = vacant[4, 3, 3] = True
        pocket = field(window, vacant)
        assert connected(pocket, (0, 0, 0), (1, 0, 0))
        assert tau_tr(pocket, (0, 0, 0), (1, 0, 0)).verdict
        assert not tau_tr(all_vacant(3), (0, 0, 0), (1, 0, 0)).verdict

    def test_label_region_must_fit(self):
        """Labeling outside the window is a geometry error."""
        with pytest.raises(GeometryError):
            label_clusters(all_vacant(2), Box.ball(3, 3))


class TestSLU:
    """Test strong local uniqueness on sampled trajectories."""

    @pytest.fixture
    def sample(self, rng):
        measure = box_measure(Box.ball(8, 3))
        return sample_process(measure.base, 0.05, QUICK, rng, measure=measure)

    def test_exact_levels_imply_grid(self, sample):
        """Checking every jump level is at least as strict as an even grid."""
        if slu(sample, 2, 0.05).verdict:
            assert slu_on_grid(sample, 2, 0.05, points=20)

    def test_level_above_sample(self, sample):
        """SLU cannot look above u_max."""
        with pytest.raises(ParameterError):
            slu(sample, 2, 1.0)

    def test_coverage(self, sample):
        """B_{2L} must be covered."""
        with pytest.raises(GeometryError):
            slu(sample, 5, 0.05)


class TestGluing:
    """Test the anchor-event check beside SLU."""

    def test_anchor_events_force_slu(self, rng):
        """With L′ = 1 all anchor events holding implies SLU."""
        measure = box_measure(Box.ball(8, 3))
        s = sample_process(measure.base, 0.05, QUICK, rng, measure=measure)
        result = gluing_check(s, 2, 0.05)
        assert result.diagnostics["L_fine"] == 1
        assert not result.verdict or result.diagnostics["slu"]

    def test_empty_configuration(self, rng):
        """Without trajectories there are no anchors to check."""
        measure = box_measure(Box.ball(8, 3))
        s = sample_process(measure.base, TINY, QUICK, rng, measure=measure)
        result = gluing_check(s, 2, TINY)
        assert result.verdict and result.diagnostics["slu"]
        assert result.diagnostics["evaluated"] == 0

    def test_coverage(self, rng):
        """The D boxes of every anchor must be covered."""
        measure = box_measure(Box.ball(4, 3))
        s = sample_process(measure.base, TINY, QUICK, rng, measure=measure)
        with pytest.raises(GeometryError):
            gluing_check(s, 2, TINY)


class TestBoxLocalEvents:
    """Test Dis_z, V_z and 𝒞_z."""

    def test_dis(self):
        """Occupied boxes are disconnected, vacant ones are not."""
        assert dis(all_occupied(4), (0, 0, 0), 1).verdict
        result = dis(all_vacant(4), (0, 0, 0), 1)
        assert not result.verdict and "crossing_site" in result.witnesses

    def test_v_z(self):
        """A vacant D_z glues; an occupied one does not even reach ∂D_z."""
        assert v_z(all_vacant(4), (0, 0, 0), 1).verdict
        result = v_z(all_occupied(4), (0, 0, 0), 1)
        assert not result.verdict and not result.diagnostics["reaches"]

    def test_script_c(self):
        """𝒞_z is all of D_z when vacant and empty when occupied."""
        assert len(script_c(all_vacant(4), (0, 0, 0), 1)) == 7**3
        assert len(script_c(all_occupied(4), (0, 0, 0), 1)) == 0

    def test_noise_needs_field(self):
        """A positive δ needs the uniforms."""
        with pytest.raises(ParameterError):
            dis(all_vacant(4), (0, 0, 0), 1, delta=0.1)


class TestFineEvents:
    """Test LU, O, FE, L̃U and W⁻ on packets."""

    def test_empty_packet(self):
        """Without excursions every fine event holds."""
        empty = Packet()
        assert lu(empty, (0, 0, 0), 2).verdict
        assert o_occ(empty, (0, 0, 0), 2).verdict
        assert fe(empty, (0, 0, 0), 2).verdict
        assert lu_tilde(empty, (0, 0, 0), 2).verdict

    def test_occupation_bound(self):
        """O_y fails once a site of ∂D_y is visited more than L₀ times."""
        p = packet(*([(-6, 0, 0)] * 3))
        result = o_occ(p, (0, 0, 0), 2)
        assert not result.verdict
        assert result.diagnostics["max_occupation"] == 3

    def test_local_uniqueness_fails_for_two_pieces(self):
        """Two separate occupied sites in D̃ ∖ C̃ break LU."""
        assert not lu(packet((-4, 0, 0), (5, 0, 0)), (0, 0, 0), 2).verdict

    def test_w_minus(self):
        """A vacant neighbourhood makes the anchor good."""
        assert w_minus(Packet(), (0, 0, 0), 6).verdict
        assert not w_minus(packet((1, 1, 1)), (0, 0, 0), 6).verdict

    def test_w_minus_anchor_on_lattice(self):
        """Anchors must lie on L₀⁻Z^d."""
        with pytest.raises(ParameterError):
            w_minus(Packet(), (1, 0, 0), 6)

    def test_o_minus_set(self):
        """Every lattice anchor of the region is good in an empty packet."""
        found = o_minus_set(Packet(), 6, Box((0,) * 3, (7,) * 3))
        assert len(found) == 8


class TestBoosted:
    """Test conjunctions over packet families."""

    def test_stops_at_first_failure(self):
        """The witness is the first failing index set."""
        base = packet((0, 0, 0), (1, 0, 0), (2, 0, 0))
        spec = EventSpec("o_occ", z=(0, 0, 0), L0=1)

        def too_long(spec, sub):
            return EventResult(spec.name, len(sub) < 2)

        result = eval_boosted(spec, base, PacketFamily(3, "minus", 3), evaluate=too_long)
        assert not result.verdict
        assert len(result.witnesses["index_set"]) == 2

    def test_all_members_hold(self):
        """An event holding on every subpacket holds boosted."""
        base = packet((0, 0, 0), (1, 0, 0))
        spec = EventSpec("o_occ", z=(0, 0, 0), L0=2)
        result = eval_boosted(spec, base, PacketFamily(2, "plus", 0))
        assert result.verdict
        assert result.diagnostics["checked"] == 4

    def test_antitone_in_family(self):
        """Enlarging ζ can only turn the boosted event from true to false."""
        base = packet(*[(i, 0, 0) for i in range(4)])
        spec = EventSpec("o_occ", z=(0, 0, 0), L0=1)

        def no_gaps(spec, sub):
            xs = sorted(int(e.path[0][0]) for e in sub)
            return EventResult(spec.name, xs == list(range(len(xs))))

        verdicts = [eval_boosted(spec, base, PacketFamily(4, "near_interval", nu),
                                 evaluate=no_gaps).verdict for nu in (0, 1, 2, 3)]
        assert verdicts == [True, True, False, False]
        assert all(large <= small for small, large in zip(verdicts, verdicts[1:]))

    def test_antitone_on_random_packets(self, rng):
        """LU over Z(ν + 2) implies LU over Z(ν) on the same packet."""
        spec = EventSpec("lu", z=(0, 0, 0), L0=2)
        for _ in range(30):
            base = packet(*(tuple(int(c) for c in rng.integers(-5, 6, size=3))
                            for _ in range(5)))
            for nu in (0, 1, 2):
                small = eval_boosted(spec, base, PacketFamily(5, "near_interval", nu))
                large = eval_boosted(spec, base, PacketFamily(5, "near_interval", nu + 2))
                assert small.verdict or not large.verdict
                assert small.diagnostics["family_size"] <= large.diagnostics["family_size"]

    def test_family_size_must_match(self):
        """The family must be built over the packet's size."""
        spec = EventSpec("o_occ", z=(0, 0, 0), L0=2)
        with pytest.raises(ParameterError):
            eval_boosted(spec, packet((0, 0, 0)), PacketFamily(2, "plus", 0))

    def test_cap(self):
        """Oversized families are refused before evaluation."""
        spec = EventSpec("o_occ", z=(0, 0, 0), L0=2)
        base = packet(*[(0, 0, 0)] * 12)
        with pytest.raises(FamilySizeError):
            eval_boosted(spec, base, PacketFamily(12, "plus", 0), cap=100)


class TestExperiments:
    """Test sampled trials and estimators."""

    def test_event_trial_at_tiny_level(self, rng):
        """Below any trajectory the box is vacant and Exist holds."""
        assert event_trial(EventSpec("exist", L=3, u=TINY), rng, QUICK).verdict

    def test_one_arm_at_tiny_level(self, rng):
        """The origin reaches ∂B_R whenever V^u is everything."""
        report = one_arm(2, TINY, 3, rng, cfg=QUICK)
        assert report.estimate == 1.0
        assert report.stderr == 0.0

    def test_two_point_proxy_sees_infinite_cluster(self, rng):
        """A fully vacant window leaves no finite cluster."""
        report = two_point((0, 0, 0), (1, 0, 0), TINY, 3, rng, margin=2, cfg=QUICK)
        assert report.estimate == 0.0
        assert report.flips.rate == 0.0

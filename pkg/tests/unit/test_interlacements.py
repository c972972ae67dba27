"""Tests for interlacement sampling and vacant fields."""
import numpy as np
import pytest

from rilab.errors import GeometryError, ParameterError
from rilab.interlacements import (
    FlipReport,
    LabeledTrajectory,
    finite_cluster_indicator,
    noise_apply,
    noise_field,
    read_rle,
    sample_process,
    vacant_field,
    write_rle,
)
from rilab.lattice import Box, SiteSet
from rilab.potential import capacity
from rilab.walks import WalkConfig

QUICK = WalkConfig(kappa=2)


@pytest.fixture
def ball_sample(rng):
    """Trajectories through B_1 recorded on B_3."""
    K = SiteSet.from_box(Box.ball(1, 3))
    return sample_process(K, 2.0, QUICK, rng, coverage=Box.ball(3, 3))


class TestSampleProcess:
    """Test the Poisson process of trajectories hitting K."""

    def test_nonpositive_level_rejected(self, rng):
        """u_max must be positive."""
        with pytest.raises(ParameterError):
            sample_process(SiteSet.from_points([(0, 0, 0)]), 0.0, QUICK, rng)

    def test_coverage_must_contain_K(self, rng):
        """Visits of K itself must be recorded."""
        with pytest.raises(GeometryError):
            sample_process(SiteSet.from_box(Box.ball(2, 3)), 1.0, QUICK, rng,
                           coverage=Box.ball(1, 3))

    def test_count_is_poisson_with_mean_u_cap(self, rng):
        """E[count] = u_max·cap(K)."""
        K = SiteSet.from_points([(0, 0, 0)])
        counts = [sample_process(K, 5.0, QUICK, rng).count for _ in range(300)]
        assert np.mean(counts) == pytest.approx(5.0 * capacity(K), abs=0.5)

    def test_labels_sorted_in_range(self, ball_sample):
        """Labels are increasing and lie in (0, u_max]."""
        labels = ball_sample.labels
        assert (np.diff(labels) >= 0).all()
        assert ((labels > 0) & (labels <= 2.0)).all()

    def test_trajectories_start_in_K(self, ball_sample):
        """Each trajectory's first recorded visit is its entrance site in K."""
        for t in ball_sample.trajectories:
            assert t.clock[0] == 0
            assert np.array_equal(t.sites[0], t.start)
            assert np.abs(t.start).max() <= 1

    def test_jump_levels(self, ball_sample):
        """Jump levels are the labels up to u."""
        assert len(ball_sample.jump_levels(1.0)) == int((ball_sample.labels <= 1.0).sum())

    def test_holding_times(self, rng):
        """Holding times come one per recorded visit."""
        K = SiteSet.from_points([(0, 0, 0)])
        s = sample_process(K, 3.0, QUICK, rng, coverage=Box.ball(2, 3), holding=True)
        for t in s.trajectories:
            assert t.holding is not None and len(t.holding) == len(t.sites)


class TestVacantField:
    """Test V^u and its noisy versions."""

    def test_monotone_in_level(self, ball_sample):
        """V^v ⊆ V^u for u ≤ v."""
        V1 = vacant_field(ball_sample, 0.5)
        V2 = vacant_field(ball_sample, 2.0)
        assert not (V2.occupancy & ~V1.occupancy).any()

    def test_K_covered_iff_some_trajectory(self, ball_sample):
        """B_1 meets the interlacement at level u iff a label is ≤ u."""
        V = vacant_field(ball_sample, 2.0)
        covered = not V.restrict(Box.ball(1, 3)).occupancy.all()
        assert covered == (ball_sample.count > 0)

    def test_level_above_u_max_rejected(self, ball_sample):
        """The sample only knows labels up to u_max."""
        with pytest.raises(ParameterError):
            vacant_field(ball_sample, 3.0)

    def test_window_must_fit_coverage(self, ball_sample):
        """Visits outside the coverage box were not recorded."""
        with pytest.raises(GeometryError):
            vacant_field(ball_sample, 1.0, Box.ball(4, 3))

    def test_occupation_counts_visits(self, ball_sample):
        """ℓ is zero exactly on the vacant set."""
        V = vacant_field(ball_sample, 2.0)
        assert np.array_equal(V.occupation == 0, V.occupancy)
        assert V.occupation.sum() == sum(len(t.sites) for t in ball_sample.trajectories)

    def test_noise_thins_vacant_set(self, ball_sample, rng):
        """(V)_δ ⊆ V, with the plain field at δ = 0."""
        V = vacant_field(ball_sample, 1.0)
        noise = noise_field(V.window, rng)
        assert noise_apply(V, 0.0, noise) is V
        noisy = noise_apply(V, 0.3, noise)
        assert not (noisy.occupancy & ~V.occupancy).any()
        assert noisy.delta == 0.3

    def test_noise_level_range(self, ball_sample, rng):
        """δ must lie in [0, 1)."""
        V = vacant_field(ball_sample, 1.0)
        with pytest.raises(ParameterError):
            noise_apply(V, 1.0, noise_field(V.window, rng))

    def test_finite_cluster_of_occupied_site(self, ball_sample):
        """An occupied site has an empty, hence finite, vacant cluster."""
        V = vacant_field(ball_sample, 2.0)
        occupied = np.argwhere(~V.occupancy)
        if len(occupied):
            x = tuple(int(c) for c in occupied[0] + np.asarray(V.window.lo))
            assert finite_cluster_indicator(V, x)


class TestTrajectoryPieces:
    """Test splitting a trajectory into coverage visits."""

    def test_pieces_split_at_clock_gaps(self):
        """A jump in the clock starts a new piece."""
        t = LabeledTrajectory(1.0, np.zeros(3), np.array([0, 1, 2, 7, 8]),
                              np.arange(15).reshape(5, 3))
        assert [len(p) for p in t.pieces()] == [3, 2]


class TestFlipReport:
    """Test the nested-window finite-cluster proxy."""

    def test_rate(self):
        """Flips count disagreements between the two windows."""
        report = FlipReport(Box.ball(2, 3), Box.ball(4, 3))
        report.add(True, True)
        report.add(True, False)
        assert report.rate == 0.5


class TestRLE:
    """Test the run-length dump."""

    def test_round_trip(self, ball_sample, temp_dir):
        """The dump restores level, window and occupancy."""
        V = vacant_field(ball_sample, 1.0)
        write_rle(temp_dir / "v.rle", V)
        u, window, occupancy = read_rle(temp_dir / "v.rle")
        assert u == 1.0
        assert window == V.window
        assert np.array_equal(occupancy, V.occupancy)

    def test_bad_magic(self, temp_dir):
        """Files without the magic bytes are rejected."""
        (temp_dir / "x.rle").write_bytes(b"NOTAVACANTDUMP")
        with pytest.raises(GeometryError):
            read_rle(temp_dir / "x.rle")

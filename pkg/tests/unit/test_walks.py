"""Tests for the vectorized random walk."""
import numpy as np
import pytest

from rilab.errors import ParameterError
from rilab.lattice import Box, SiteSet
from rilab.walks import (
    WalkConfig,
    additive_functional,
    first_hits,
    first_true,
    forward_walks,
    paths_until_exit,
    step_block,
)


class TestWalkConfig:
    """Test the kill-radius policy."""

    def test_kappa_below_two_rejected(self):
        """Kill radius factors below 2 are refused."""
        with pytest.raises(ParameterError):
            WalkConfig(kappa=1.5)

    def test_radius_scales_with_diameter(self):
        """The kill radius is kappa times the target diameter."""
        cfg = WalkConfig(kappa=4)
        assert cfg.radius(Box.ball(0, 3)) == 4
        assert cfg.radius(Box.ball(2, 3)) == 16
        assert cfg.escape_box(Box.ball(0, 3)) == Box.ball(4, 3)

    def test_bias_bound(self):
        """Bias shrinks like kappa^(2-d)."""
        assert WalkConfig(kappa=8).bias_bound(3) == pytest.approx(1 / 8)


class TestSteps:
    """Test the step primitives."""

    def test_step_block_takes_unit_steps(self, rng):
        """Consecutive positions differ by one unit vector."""
        block = step_block(np.zeros((5, 3), dtype=np.int64), 10, rng)
        assert block.shape == (5, 10, 3)
        assert (np.abs(np.diff(block, axis=1)).sum(axis=-1) == 1).all()
        assert (np.abs(block[:, 0]).sum(axis=-1) == 1).all()

    def test_first_true(self):
        """Rows without a True get -1."""
        flags = np.array([[False, True, True], [False, False, False]])
        assert first_true(flags).tolist() == [1, -1]


class TestFirstHits:
    """Test walks run to a target or the kill box."""

    def test_return_to_origin_frequency(self, rng):
        """Returns before the kill box sit a little below 1 - 1/g(0) ≈ 0.3405."""
        target = SiteSet.from_points([(0, 0, 0)])
        cfg = WalkConfig(kappa=8)
        result = first_hits(np.zeros((4000, 3)), target, cfg.escape_box(target.window), cfg, rng)
        assert not result.truncated.any()
        assert 0.27 < result.hit.mean() < 0.38
        assert (result.points[result.hit] == 0).all()

    def test_truncation_flags(self, rng):
        """Walks still alive at max_steps are flagged."""
        target = SiteSet.from_points([(50, 0, 0)])
        cfg = WalkConfig(kappa=2, max_steps=8, chunk=4)
        result = first_hits(np.zeros((20, 3)), target, Box.ball(100, 3), cfg, rng)
        assert result.truncated.all()
        assert (result.steps == 8).all()


class TestPaths:
    """Test full excursion paths."""

    def test_paths_end_outside_domain(self, rng):
        """Each path is a nearest-neighbour path whose last site leaves the domain."""
        domain = Box.ball(3, 3)
        paths, truncated = paths_until_exit(np.zeros((10, 3)), domain, WalkConfig(), rng)
        assert not truncated.any()
        for p in paths:
            assert not domain.contains(p[-1])
            assert domain.contains_array(p[:-1]).all()
            assert (np.abs(np.diff(p, axis=0)).sum(axis=1) == 1).all()

    def test_step_cap_flags_paths(self, rng):
        """Paths cut at the step cap are flagged and stay inside the domain."""
        domain = Box.ball(50, 3)
        cfg = WalkConfig(max_steps=8, chunk=8)
        paths, truncated = paths_until_exit(np.zeros((5, 3)), domain, cfg, rng)
        assert truncated.all()
        assert all(len(p) == 9 and domain.contains(p[-1]) for p in paths)

    def test_start_outside_domain(self, rng):
        """A start outside the domain is a one-site path, not truncated."""
        paths, truncated = paths_until_exit(np.array([[9, 0, 0]]), Box.ball(3, 3), WalkConfig(),
                                            rng)
        assert len(paths[0]) == 1
        assert not truncated[0]


class TestForwardWalks:
    """Test visit recording."""

    def test_visits_stay_in_coverage(self, rng):
        """Recorded visits lie in the coverage box and start at the start site."""
        coverage = Box.ball(2, 3)
        cfg = WalkConfig(kappa=2)
        record = forward_walks(np.zeros((50, 3)), coverage, Box.ball(6, 3), cfg, rng)
        assert coverage.contains_array(record.sites).all()
        pieces = record.split(50)
        assert all(len(clock) and clock[0] == 0 for clock, _ in pieces)
        assert all((sites[0] == 0).all() for _, sites in pieces)


class TestAdditiveFunctional:
    """Test occupation-time functionals."""

    def test_zero_weight_gives_zero(self, rng):
        """A zero weight accrues nothing."""
        window = Box.ball(2, 3)
        totals, truncated = additive_functional(
            np.zeros((10, 3)), np.zeros(window.shape), window, Box.ball(6, 3), WalkConfig(), rng)
        assert (totals == 0).all()
        assert not truncated.any()

    def test_time_at_origin_is_positive(self, rng):
        """A walk started at the weighted site spends positive time there."""
        window = Box.ball(0, 3)
        totals, _ = additive_functional(
            np.zeros((10, 3)), np.ones(window.shape), window, Box.ball(4, 3), WalkConfig(), rng)
        assert (totals > 0).all()

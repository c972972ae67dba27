"""Tests for blocking interfaces and their property checks."""
import numpy as np
import pytest

from rilab.errors import ParameterError
from rilab.interfaces import (
    blocking_interfaces,
    layers_from_points,
    min_crossing_count,
    verify_interface_properties,
)
from rilab.lattice import Box, SiteSet

V = Box.ball(10, 3)
ORIGIN = SiteSet.from_points([(0, 0, 0)], window=V)


def shells(*radii: int) -> SiteSet:
    mask = np.zeros(V.shape, dtype=bool)
    for r in radii:
        mask |= Box.ball(r, 3).mask_in(V) & ~Box.ball(r - 1, 3).mask_in(V)
    return SiteSet(V, mask)


class TestBlockingInterfaces:
    """Test the layer construction."""

    def test_empty_sigma(self):
        """Without Σ the flood reaches ∂V at once."""
        result = blocking_interfaces(ORIGIN, V, SiteSet.empty(V))
        assert len(result) == 0

    def test_touching_shells_form_one_layer(self):
        """Adjacent shells are one *-component."""
        result = blocking_interfaces(ORIGIN, V, shells(1, 2))
        assert len(result) == 1
        assert len(result.layers[0]) == 26 + 98

    def test_gapped_shells_form_two_layers(self):
        """Separated shells are crossed one after the other."""
        result = blocking_interfaces(ORIGIN, V, shells(1, 7))
        assert len(result) == 2
        assert len(result.layers[0]) == 26
        assert len(result.union) == 26 + len(shells(7))
        assert len(result.trace) == 2

    def test_loose_sites_are_not_layers(self):
        """Σ with no surrounding piece gives no layer."""
        result = blocking_interfaces(ORIGIN, V, SiteSet.from_points([(3, 3, 3)], window=V))
        assert len(result) == 0


class TestCrossingCount:
    """Test the minimal number of Σ sites on a path to ∂V."""

    @pytest.mark.parametrize("radii,expected", [((), 0), ((1, 2), 2), ((1, 7), 2), ((4,), 1)])
    def test_shells(self, radii, expected):
        """Each shell costs one crossing per site layer."""
        sigma = shells(*radii) if radii else SiteSet.empty(V)
        assert min_crossing_count(ORIGIN, V, sigma) == expected


class TestInputs:
    """Test argument validation."""

    def test_sigma_overlapping_u(self):
        """Σ must avoid U."""
        with pytest.raises(ParameterError):
            blocking_interfaces(ORIGIN, V, SiteSet.from_points([(0, 0, 0)], window=V))

    def test_disconnected_u(self):
        """U must be *-connected."""
        U = SiteSet.from_points([(0, 0, 0), (3, 0, 0)], window=V)
        with pytest.raises(ParameterError):
            blocking_interfaces(U, V, SiteSet.empty(V))

    def test_empty_u(self):
        """U must be nonempty."""
        with pytest.raises(ParameterError):
            blocking_interfaces(SiteSet.empty(V), V, SiteSet.empty(V))


class TestVerification:
    """Test the property checker."""

    @pytest.mark.parametrize("radii", [(1, 2), (1, 7), (2, 5, 8)])
    def test_constructed_layers_pass(self, radii):
        """The construction satisfies all three properties."""
        sigma = shells(*radii)
        report = verify_interface_properties(blocking_interfaces(ORIGIN, V, sigma), ORIGIN,
                                             V, sigma)
        assert report.passed
        assert report.k_layers == report.k_sigma

    def test_missing_layer_is_caught(self):
        """Dropping the inner shell loses a crossing."""
        sigma = shells(1, 7)
        window = V.expand(2)
        outer = np.argwhere(shells(7).mask) + np.asarray(V.lo)
        report = verify_interface_properties(layers_from_points(window, [outer]), ORIGIN, V,
                                             sigma)
        assert not report.crossing
        assert not report.passed
        assert (report.k_sigma, report.k_layers) == (2, 1)


def random_sigma(W: Box, rng: np.random.Generator) -> SiteSet:
    """Random Σ in W: thinned ℓ∞ shells plus scattered sites, never at the origin."""
    mask = np.zeros(W.shape, dtype=bool)
    for r in range(2, W.side // 2):
        if rng.random() < 0.4:
            shell = Box.ball(r, 3).mask_in(W) & ~Box.ball(r - 1, 3).mask_in(W)
            mask |= shell & (rng.random(W.shape) >= rng.uniform(0.0, 0.3))
    mask |= rng.random(W.shape) < rng.uniform(0.0, 0.25)
    mask[Box.ball(0, 3).mask_in(W)] = False
    return SiteSet(W, mask)


class TestRandomInstances:
    """Test the construction on random Σ in B_8."""

    W = Box.ball(8, 3)

    def test_properties_hold(self, rng):
        """(a), (b) and (c) hold on every sampled instance."""
        U = SiteSet.from_points([(0, 0, 0)], window=self.W)
        layered = 0
        for _ in range(30):
            sigma = random_sigma(self.W, rng)
            result = blocking_interfaces(U, self.W, sigma)
            report = verify_interface_properties(result, U, self.W, sigma)
            assert report.passed, report
            layered += len(result) > 0
        assert layered > 0

    def test_rerun_on_layers_is_idempotent(self, rng):
        """Running the construction on its own layers returns the same layers."""
        U = SiteSet.from_points([(0, 0, 0)], window=self.W)
        for _ in range(30):
            result = blocking_interfaces(U, self.W, random_sigma(self.W, rng))
            again = blocking_interfaces(U, self.W, result.union.reframe(self.W))
            assert len(again) == len(result)
            for a, b in zip(again.layers, result.layers, strict=True):
                assert a.sites == b.sites

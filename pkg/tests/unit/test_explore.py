"""Tests for the cluster exploration and its encounter times."""
import numpy as np
import pytest

from rilab.errors import ParameterError
from rilab.excursions import Packet
from rilab.explore import (
    ExploreGeometry,
    GoodPointContext,
    encounter_threshold,
    encounter_times,
    many_encounters,
    replay_check,
    run_exploration,
    vacancy,
)
from rilab.interlacements import VacantField
from rilab.lattice import Box

GEOMETRY = ExploreGeometry(z=(0, 0, 0), N=7, L=1, L0=2, y=(6, 6, 6))
START = (13, 0, 0)


def field_from(vacant: np.ndarray) -> VacantField:
    return VacantField(GEOMETRY.window, 1.0, vacant, (~vacant).astype(np.int64))


@pytest.fixture
def ray():
    """Vacant only along the first axis from ∂C̃_z to the face of D_z."""
    window = GEOMETRY.window
    vacant = np.zeros(window.shape, dtype=bool)
    lo = np.asarray(window.lo)
    for t in range(13, 28):
        vacant[tuple(np.array([t, 0, 0]) - lo)] = True
    return field_from(vacant)


class TestGeometry:
    """Test the box layout."""

    def test_reference_point_on_fine_lattice(self):
        """y must be a multiple of L₀."""
        with pytest.raises(ParameterError):
            ExploreGeometry(z=(0, 0, 0), N=7, L=1, L0=2, y=(1, 0, 0))

    def test_reference_point_in_origin_cell(self):
        """y must lie in D_(0,L₀)."""
        with pytest.raises(ParameterError):
            ExploreGeometry(z=(0, 0, 0), N=7, L=1, L0=2, y=(8, 0, 0))

    def test_cell_lookup(self):
        """Cells tile Z^d with period 7L₀."""
        assert GEOMETRY.cell((6, 6, 6)) == (6, 6, 6)
        assert GEOMETRY.cell((0, 0, 0)) == (6, 6, 6)
        assert GEOMETRY.cell((14, 0, 0)) == (20, 6, 6)

    def test_cell_faces(self):
        """Face sites sit at the ends of each cell period."""
        assert GEOMETRY.on_cell_face((0, 6, 6))
        assert not GEOMETRY.on_cell_face((6, 6, 6))

    def test_eligible_cells(self):
        """Eligible cells lie in D_z and miss C̃_z."""
        cells = GEOMETRY.cells()
        assert len(cells) == 19
        assert cells == sorted(cells)
        for y in cells:
            D = GEOMETRY.fine(y).D
            assert D.inside(GEOMETRY.window)
            assert D.intersect(GEOMETRY.boxes.C_tilde).is_empty()

    def test_planted_cells_must_be_eligible(self):
        """A cell meeting C̃_z cannot be good."""
        with pytest.raises(ParameterError):
            GoodPointContext.planted(GEOMETRY, [(6, 6, 6)])


class TestExploration:
    """Test the revelation order and invariants."""

    def test_occupied_start(self):
        """An occupied start reveals itself only."""
        V = field_from(np.zeros(GEOMETRY.window.shape, dtype=bool))
        state = run_exploration(START, V, GEOMETRY)
        assert len(state.walk) == 1
        assert state.cluster.sum() == 0
        assert state.invariants_ok

    def test_ray_reveals_cluster_and_boundary(self, ray):
        """The cluster and its outer boundary inside D_z are revealed once each."""
        state = run_exploration(START, ray, GEOMETRY)
        assert state.cluster.sum() == 15
        assert len(state.walk) == 15 + 4 * 15 + 1
        assert len(set(state.walk)) == len(state.walk)
        assert state.walk[0] == START
        assert not state.encounters

    def test_start_must_be_on_face(self, ray):
        """Explorations start on ∂C̃_z."""
        with pytest.raises(ParameterError):
            run_exploration((0, 0, 0), ray, GEOMETRY)

    def test_good_cells_along_ray(self, ray, rng):
        """Encounters with planted cells keep every invariant."""
        ctx = GoodPointContext.planted(GEOMETRY, GEOMETRY.cells())
        state = run_exploration(START, ray, GEOMETRY, ctx)
        assert state.invariants_ok
        assert state.encounters
        assert all(e.cell == (20, 6, 6) for e in state.encounters)
        assert encounter_times(state, ctx).passed
        assert replay_check(state, rng).unchanged
        assert replay_check(state, rng, rerandomize=False).unchanged

    def test_snapshot(self, ray):
        """Snapshots are plain JSON-friendly data."""
        snap = run_exploration(START, ray, GEOMETRY).snapshot()
        assert snap["x"] == list(START)
        assert snap["cluster_size"] == 15
        assert snap["taus"] == []


class TestEncounterCount:
    """Test the many-encounters event."""

    def test_threshold(self):
        """⌈c·a·m⌉."""
        assert encounter_threshold(1.0, 10, c73=0.05) == 1
        assert encounter_threshold(2.0, 10, c73=0.25) == 5

    def test_no_encounters(self, ray):
        """Without good times the event fails for a positive threshold."""
        state = run_exploration(START, ray, GEOMETRY)
        assert not many_encounters(state, 1.0, 10, c73=0.05)


def test_packet_vacancy():
    """An empty packet leaves every site vacant."""
    window = Box.ball(2, 3)
    assert vacancy(Packet(), window).all()

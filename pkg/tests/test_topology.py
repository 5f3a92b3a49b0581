"""Tests for gossip matrices and topology schedules."""

import numpy as np
import pytest

from dsgd_stability.errors import ConnectivityError, RangeError, ShiftError, ValidationError
from dsgd_stability.models import ScheduleKind, TopologyConfig, TopologyKind, TopologySpec, Weighting
from dsgd_stability.topology import (
    GossipMatrix,
    TopologySchedule,
    build_schedule,
    build_topology,
    chain_diagonals,
    product_chain,
    shifted_nonconvex,
    shifted_strongly_convex,
    spectral_gap,
)


@pytest.fixture
def alternating():
    """Ring(4) and complete(4) alternating every step."""
    return TopologySchedule.cycle(
        [build_topology(TopologyKind.RING, 4), build_topology(TopologyKind.COMPLETE, 4)]
    )


class TestGossipMatrix:
    """Tests for matrix validation and the spectral quantity."""

    @pytest.mark.parametrize("m", [2, 4, 8])
    def test_complete_graph_mixes_in_one_step(self, m):
        """Complete graphs have λ exactly zero."""
        P = build_topology(TopologyKind.COMPLETE, m)
        assert P.lam == 0.0
        np.testing.assert_allclose(P.entries, np.full((m, m), 1.0 / m))

    def test_ring_of_four(self):
        """Ring(4) with Metropolis weights has λ = 1/3."""
        P = build_topology(TopologyKind.RING, 4)
        assert abs(P.lam - 1.0 / 3.0) <= 1e-12
        assert spectral_gap(P) == P.lam
        assert P.min_diagonal == pytest.approx(1.0 / 3.0)

    def test_single_node(self):
        """One node gives the 1x1 identity and λ = 0."""
        P = build_topology(TopologyKind.RING, 1)
        assert P.m == 1
        assert P.lam == 0.0

    def test_rejects_non_symmetric(self):
        """Every violated property is listed."""
        with pytest.raises(ValidationError) as info:
            GossipMatrix.from_entries([[0.5, 0.6], [0.5, 0.4]])
        assert any("symmetric" in v for v in info.value.violations)
        assert any("sum to 1" in v for v in info.value.violations)

    def test_rejects_negative_entries(self):
        with pytest.raises(ValidationError):
            GossipMatrix.from_entries([[1.5, -0.5], [-0.5, 1.5]])

    def test_identity_does_not_mix(self):
        """Disconnected topologies raise ConnectivityError."""
        with pytest.raises(ConnectivityError):
            GossipMatrix.from_entries(np.eye(3))

    def test_entries_are_read_only(self):
        P = build_topology(TopologyKind.RING, 4)
        with pytest.raises(ValueError):
            P.entries[0, 0] = 1.0

    def test_explicit_matrix(self):
        P = build_topology(TopologyKind.EXPLICIT, 2, matrix=[[0.75, 0.25], [0.25, 0.75]])
        assert P.lam == pytest.approx(0.5)

    def test_explicit_size_mismatch(self):
        with pytest.raises(ValidationError):
            build_topology(TopologyKind.EXPLICIT, 3, matrix=[[0.5, 0.5], [0.5, 0.5]])


class TestNamedGraphs:
    """Tests for graph families and weighting rules."""

    @pytest.mark.parametrize(
        "kind,m",
        [
            (TopologyKind.RING, 6),
            (TopologyKind.PATH, 5),
            (TopologyKind.TORUS2D, 9),
            (TopologyKind.TORUS2D, 12),
        ],
    )
    @pytest.mark.parametrize("weighting", list(Weighting))
    def test_doubly_stochastic(self, kind, m, weighting):
        """Every weighting yields a symmetric doubly stochastic matrix with λ < 1."""
        P = build_topology(kind, m, weighting)
        np.testing.assert_allclose(P.entries.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_array_equal(P.entries, P.entries.T)
        assert 0.0 <= P.lam < 1.0

    def test_random_regular_is_seeded(self):
        first = build_topology(TopologyKind.RANDOM_REGULAR, 8, degree=3, seed=5)
        second = build_topology(TopologyKind.RANDOM_REGULAR, 8, degree=3, seed=5)
        np.testing.assert_array_equal(first.entries, second.entries)

    def test_random_regular_needs_valid_degree(self):
        with pytest.raises(ValidationError):
            build_topology(TopologyKind.RANDOM_REGULAR, 5, degree=3)
        with pytest.raises(ValidationError):
            build_topology(TopologyKind.RANDOM_REGULAR, 6)

    def test_lazy_weights_are_half_metropolis_on_regular_graphs(self):
        """On a ring every degree is 2, so lazy weights are 1/4 off the diagonal."""
        P = build_topology(TopologyKind.RING, 5, Weighting.LAZY_METROPOLIS)
        assert P.entries[0, 1] == pytest.approx(0.25)
        assert P.entries[0, 0] == pytest.approx(0.5)

    def test_sparser_graphs_mix_slower(self):
        ring = build_topology(TopologyKind.RING, 8)
        path = build_topology(TopologyKind.PATH, 8)
        complete = build_topology(TopologyKind.COMPLETE, 8)
        assert complete.lam < ring.lam < path.lam


class TestSchedules:
    """Tests for time-varying schedules and product chains."""

    def test_static_schedule(self):
        P = build_topology(TopologyKind.RING, 4)
        schedule = TopologySchedule.static(P)
        assert schedule.at(1) is P
        assert schedule.at(1000) is P
        assert schedule.horizon is None

    def test_cycle_alternates(self, alternating):
        assert alternating.at(1).kind == "ring"
        assert alternating.at(2).kind == "complete"
        assert alternating.at(3).kind == "ring"
        assert alternating.lam == pytest.approx(1.0 / 3.0)

    def test_explicit_list_horizon(self):
        P = build_topology(TopologyKind.RING, 4)
        schedule = TopologySchedule.explicit([P, P, P])
        assert schedule.horizon == 3
        with pytest.raises(RangeError):
            schedule.at(4)
        with pytest.raises(RangeError):
            schedule.at(0)

    def test_members_must_agree_on_size(self):
        with pytest.raises(ValidationError):
            TopologySchedule.cycle([build_topology(TopologyKind.RING, 4), build_topology(TopologyKind.RING, 5)])

    def test_build_from_config(self):
        config = TopologyConfig(
            schedule=ScheduleKind.PERIODIC_CYCLE,
            members=[TopologySpec(kind=TopologyKind.RING), TopologySpec(kind=TopologyKind.COMPLETE)],
        )
        schedule = build_schedule(config, 4)
        assert schedule.kind == ScheduleKind.PERIODIC_CYCLE
        assert schedule.describe()["members"] == ["ring", "complete"]

    def test_product_chain_stays_doubly_stochastic(self, alternating):
        product = product_chain(alternating, 1, 7)
        np.testing.assert_allclose(product.sum(axis=0), 1.0, atol=1e-12)
        np.testing.assert_allclose(product.sum(axis=1), 1.0, atol=1e-12)

    def test_product_chain_order(self, alternating):
        """P^{T:t} multiplies later matrices on the left."""
        expected = alternating.at(3).entries @ alternating.at(2).entries
        np.testing.assert_allclose(product_chain(alternating, 2, 3), expected)

    def test_product_chain_range(self, alternating):
        with pytest.raises(RangeError):
            product_chain(alternating, 3, 2)

    def test_chain_diagonals_match_products(self, alternating):
        """The backward pass agrees with explicit products for every t."""
        T, r = 6, 2
        diagonals = chain_diagonals(alternating, T, r)
        for t in range(1, T + 1):
            assert diagonals[t - 1] == pytest.approx(product_chain(alternating, t, T)[r - 1, r - 1])

    def test_chain_diagonals_with_shift(self, alternating):
        def shift(P, t):
            return shifted_strongly_convex(P, 0.1, 1.0)

        plain = chain_diagonals(alternating, 5, 1)
        shifted = chain_diagonals(alternating, 5, 1, shift)
        assert np.all(shifted < plain)


class TestShiftedMatrices:
    """Tests for the shifted matrices used by local-model bounds."""

    def test_strongly_convex_shift(self):
        P = build_topology(TopologyKind.RING, 4)
        shifted = shifted_strongly_convex(P, 0.2, 1.0)
        np.testing.assert_allclose(np.diag(shifted), 1.0 / 3.0 - 0.1)

    def test_strongly_convex_shift_too_large(self):
        P = build_topology(TopologyKind.COMPLETE, 4)
        with pytest.raises(ShiftError):
            shifted_strongly_convex(P, 1.0, 1.0)

    def test_nonconvex_shift_skips_node_r(self):
        P = build_topology(TopologyKind.RING, 4)
        shifted = shifted_nonconvex(P, 0.1, 2.0, 3)
        assert shifted[2, 2] == pytest.approx(P.entries[2, 2])
        assert shifted[0, 0] == pytest.approx(P.entries[0, 0] + 0.2)

    def test_nonconvex_shift_node_range(self):
        P = build_topology(TopologyKind.RING, 4)
        with pytest.raises(RangeError):
            shifted_nonconvex(P, 0.1, 1.0, 5)

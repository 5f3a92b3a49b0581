"""Tests for coupled twin runs and empirical stability."""

import numpy as np
import pytest

from dsgd_stability.bounds import BoundParams, local_bound, per_step_envelope
from dsgd_stability.engine import StepSchedule
from dsgd_stability.errors import RangeError, ValidationError
from dsgd_stability.models import LossFamily, Regime, TopologyKind, UpdateOrder
from dsgd_stability.stability import (
    NeighborSpec,
    aggregate,
    coupled_base,
    local_recursion_excess,
    local_trace,
    make_neighbor,
    pointwise_eps,
    sweep_neighbors,
    twin_run,
)
from dsgd_stability.topology import TopologySchedule, build_topology


def params_for(config, beta=0.25, L=1.0, mu=0.0):
    return BoundParams(
        L=L,
        beta=beta,
        m=config.m,
        n=config.dataset.n,
        T=config.T,
        lam=config.topology.lam,
        schedule=config.schedule,
        mu=mu,
    )


def hit_at_step(config, r, t):
    """A neighbor position whose sample node r draws at step t under the coupled stream."""
    table = coupled_base(config).indices
    return NeighborSpec(r, int(table[t - 1, r - 1]) + 1, seed=3)


class TestNeighborSpec:
    """Tests for NeighborSpec and make_neighbor."""

    def test_positions_are_one_based(self):
        with pytest.raises(ValidationError):
            NeighborSpec(0, 1)

    def test_neighbor_differs_in_one_position(self, make_run):
        dataset = make_run().dataset
        neighbor = make_neighbor(dataset, NeighborSpec(2, 3, seed=5))
        assert dataset.diff_count(neighbor) == 1
        assert not np.array_equal(neighbor.sample(2, 3)[0], dataset.sample(2, 3)[0])

    def test_position_outside_dataset(self, make_run):
        with pytest.raises(RangeError):
            make_neighbor(make_run().dataset, NeighborSpec(5, 1))


class TestTwinRun:
    """Tests for twin_run."""

    def test_identical_replacement_never_diverges(self, make_run):
        config = make_run()
        spec = NeighborSpec(1, 1, replacement=config.dataset.sample(1, 1))
        trace = twin_run(config, spec)
        assert np.all(trace.divergence == 0.0)
        assert np.all(trace.node_divergence == 0.0)

    def test_no_divergence_before_first_hit(self, make_run):
        config = make_run()
        spec = hit_at_step(config, 2, 6)
        trace = twin_run(config, spec)
        assert trace.first_hit is not None and trace.first_hit <= 6
        np.testing.assert_array_equal(trace.divergence[: trace.first_hit], 0.0)
        assert trace.divergence[trace.first_hit] > 0.0

    def test_hits_follow_the_index_table(self, make_run):
        config = make_run()
        spec = hit_at_step(config, 3, 1)
        trace = twin_run(config, spec)
        table = coupled_base(config).indices
        np.testing.assert_array_equal(trace.hits, np.flatnonzero(table[:, 2] == spec.k - 1) + 1)
        assert trace.divergence.shape == (config.T + 1,)
        assert trace.T == config.T

    def test_reused_base_gives_same_trace(self, make_run):
        config = make_run()
        spec = NeighborSpec(1, 2, seed=9)
        fresh = twin_run(config, spec)
        shared = twin_run(config, spec, coupled_base(config))
        np.testing.assert_array_equal(fresh.divergence, shared.divergence)

    def test_records(self, make_run):
        trace = twin_run(make_run(T=5), NeighborSpec(1, 1, seed=1))
        records = trace.records()
        assert [record["t"] for record in records] == [1, 2, 3, 4, 5, 6]
        assert sum(record["hit"] for record in records) == trace.hits.size

    @pytest.mark.parametrize("order", list(UpdateOrder))
    def test_convex_envelope_dominates(self, make_run, order):
        config = make_run(T=40, update_order=order)
        params = params_for(config)
        for r in (1, 3):
            trace = twin_run(config, hit_at_step(config, r, 2))
            envelope = per_step_envelope(Regime.CONVEX, params, trace.hits)
            assert np.all(trace.divergence <= envelope + 1e-9)

    def test_strongly_convex_projected_envelope_dominates(self, make_run):
        config = make_run(T=40, eta=0.5, family=LossFamily.RIDGE_LOGISTIC, mu=0.1, projected=True)
        c = config.model.constants()
        params = params_for(config, beta=c.beta, L=c.L, mu=c.mu)
        for r in (1, 4):
            trace = twin_run(config, hit_at_step(config, r, 3))
            envelope = per_step_envelope(Regime.STRONGLY_CONVEX, params, trace.hits)
            assert trace.divergence[-1] > 0.0
            assert np.all(trace.divergence <= envelope + 1e-9)

    def test_nonconvex_envelope_dominates(self, make_run):
        config = make_run(T=25, eta=0.05, family=LossFamily.SATURATING_NONCONVEX)
        beta = config.model.constants().beta
        L = config.model.constants().L
        params = params_for(config, beta=beta, L=L)
        trace = twin_run(config, hit_at_step(config, 2, 1))
        envelope = per_step_envelope(Regime.NONCONVEX, params, trace.hits)
        assert np.all(trace.divergence <= envelope + 1e-9)


class TestPointwiseEps:
    """Tests for pointwise_eps."""

    def test_surrogate_is_lipschitz_times_divergence(self, make_run):
        config = make_run()
        trace = twin_run(config, hit_at_step(config, 1, 3))
        eps = pointwise_eps(trace, config.model, config.dataset)
        assert eps.surrogate == pytest.approx(config.model.constants().L * trace.divergence[-1])
        assert eps.training_only
        assert eps.pool_size == config.m * config.dataset.n + 1
        assert trace.eps is eps

    def test_direct_below_surrogate(self, make_run):
        config = make_run()
        trace = twin_run(config, hit_at_step(config, 4, 2))
        pool = config.dataset.draw_pool(16, 0)
        eps = pointwise_eps(trace, config.model, config.dataset, pool, gradient=True)
        assert not eps.training_only
        assert eps.direct <= eps.surrogate + 1e-9
        assert eps.gradient is not None and eps.gradient >= 0.0


class TestAggregate:
    """Tests for aggregate."""

    def test_values(self):
        result = aggregate(np.array([[1.0, 3.0], [0.0, 0.0]]))
        assert result.delta_mean == pytest.approx(1.0)
        assert result.delta_sq == pytest.approx(2.5)
        assert result.rms == pytest.approx(np.sqrt(2.5))
        assert result.eps_uniform == 3.0

    def test_rejects_negative(self):
        with pytest.raises(ValidationError):
            aggregate(np.array([[0.1, -0.2]]))

    def test_rejects_empty(self):
        with pytest.raises(ValidationError):
            aggregate(np.zeros((0, 0)))


class TestSweepNeighbors:
    """Tests for sweep_neighbors."""

    def test_full_sweep(self, make_run):
        config = make_run(m=3, n=4, T=20)
        result = sweep_neighbors(config, replacement_seed=2, eval_pool=8)
        assert len(result.traces) == 12
        assert result.surrogate.shape == (3, 4)
        assert np.all(result.direct <= result.surrogate + 1e-9)
        agg = result.aggregate
        assert agg.delta_mean <= agg.rms * (1 + 1e-12)
        assert agg.rms <= agg.eps_uniform

    def test_selected_positions(self, make_run):
        config = make_run(m=3, n=4, T=10)
        result = sweep_neighbors(config, positions=[(1, 1), (3, 4)])
        assert [(trace.r, trace.k) for trace in result.traces] == [(1, 1), (3, 4)]
        assert result.surrogate[1, 1] == 0.0

    def test_deterministic(self, make_run):
        config = make_run(m=2, n=4, T=15)
        first = sweep_neighbors(config, replacement_seed=4)
        second = sweep_neighbors(config, replacement_seed=4)
        np.testing.assert_array_equal(first.surrogate, second.surrogate)


class TestLocalTrace:
    """Tests for local_trace."""

    def test_component_matches_node_divergence(self, make_run):
        config = make_run(update_order=UpdateOrder.GRAD_INSIDE_GOSSIP)
        spec = hit_at_step(config, 2, 4)
        local = local_trace(config, spec)
        trace = twin_run(config, spec)
        np.testing.assert_array_equal(local.component, trace.node_divergence[:, 1])
        assert local.deltas.shape == (config.T + 1, config.m)
        assert local.component[0] == 0.0
        assert local.precondition_met

    def test_cap_violation_is_reported(self, make_run):
        config = make_run(eta=3.0, T=5)
        local = local_trace(config, NeighborSpec(1, 1, seed=0))
        assert not local.precondition_met


class TestLocalRecursion:
    """Tests for local_recursion_excess."""

    @pytest.fixture
    def alternating(self):
        return TopologySchedule.cycle(
            [build_topology(TopologyKind.RING, 4), build_topology(TopologyKind.COMPLETE, 4)]
        )

    @pytest.mark.parametrize("r,t", [(1, 1), (2, 4), (4, 29)])
    def test_every_step_within_limit(self, make_run, alternating, r, t):
        config = make_run(topology=alternating)
        local = local_trace(config, hit_at_step(config, r, t))
        excess = local_recursion_excess(local, config, L=1.0)
        assert excess.shape == (config.T, config.m)
        assert excess.max() <= 1e-9

    def test_grad_inside_gossip_limit(self, make_run, alternating):
        config = make_run(topology=alternating, update_order=UpdateOrder.GRAD_INSIDE_GOSSIP)
        local = local_trace(config, hit_at_step(config, 3, 10))
        assert local_recursion_excess(local, config, L=1.0).max() <= 1e-9

    def test_terminal_divergence_below_shifted_chain(self, make_run, alternating):
        config = make_run(topology=alternating)
        spec = hit_at_step(config, 2, config.T)
        local = local_trace(config, spec)
        report = local_bound(Regime.CONVEX, alternating, params_for(config), 2, local.hits)
        assert local.component[-1] <= report.values["divergence_after_gossip"] + 1e-9

    def test_jump_without_hit_is_flagged(self, make_run):
        config = make_run()
        local = local_trace(config, hit_at_step(config, 1, 5))
        local.deltas = local.deltas.copy()
        local.deltas[3, 2] += 1.0
        excess = local_recursion_excess(local, config, L=1.0)
        assert excess[2, 2] > 0.0

"""Tests for stability, generalization and optimization bounds."""

import math
from dataclasses import replace

import numpy as np
import pytest

from dsgd_stability import bounds
from dsgd_stability.bounds import BoundParams
from dsgd_stability.engine import StepSchedule
from dsgd_stability.errors import DomainError, ShiftError, ValidationError
from dsgd_stability.models import Regime, TopologyKind
from dsgd_stability.rng import index_table
from dsgd_stability.topology import TopologySchedule, build_topology


@pytest.fixture
def convex_params():
    """L = β = 1, m = 4, n = 25, λ = 1/3, T = 100, η = 0.1."""
    return BoundParams(L=1.0, beta=1.0, m=4, n=25, T=100, lam=1.0 / 3.0, schedule=StepSchedule.constant(0.1))


class TestBoundParams:
    """Tests for BoundParams validation."""

    def test_lambda_range(self, convex_params):
        with pytest.raises(ValidationError):
            replace(convex_params, lam=1.0)

    def test_positive_constants(self, convex_params):
        with pytest.raises(ValidationError):
            replace(convex_params, L=0.0)

    def test_eta_of_decreasing_schedule(self, convex_params):
        with pytest.raises(DomainError):
            replace(convex_params, schedule=StepSchedule.inv_t()).eta


class TestCLambda:
    """Tests for C_λ and the inner-sum inequality."""

    def test_value(self):
        assert bounds.c_lambda(0.5) == pytest.approx(10.2777, abs=1e-4)

    @pytest.mark.parametrize("lam", [0.0, 1.0, -0.1])
    def test_domain(self, lam):
        with pytest.raises(DomainError):
            bounds.c_lambda(lam)

    def test_complete_graph(self):
        assert bounds.c_lambda_or_one(0.0) == 1.0

    def test_inequality_holds(self):
        assert bounds.c_lambda_violations([0.1, 0.5, 0.9, 0.99], 500) == []

    def test_inner_sums(self):
        np.testing.assert_allclose(bounds.inner_sums(np.ones(4), 0.5), [0.0, 1.0, 1.5, 1.75])


class TestConvexDelta:
    """Tests for convex_delta."""

    def test_constant_closed_form(self, convex_params):
        report = bounds.convex_delta(convex_params)
        assert report.value == pytest.approx(6.2)
        assert report.values["stationary"] == pytest.approx(6.2)
        assert report.values["general"] < report.values["closed_form"]
        assert report.precondition_met

    def test_single_step_direct_sum(self, convex_params):
        params = replace(convex_params, T=1)
        report = bounds.convex_delta(params)
        assert report.values["general"] == pytest.approx(2.0 * 0.1 / 100)
        assert report.value == pytest.approx(report.values["closed_form"])
        assert report.value == pytest.approx(2.0 * 0.1 * (2.0 * 0.1 / (2.0 / 3.0) + 0.01))

    def test_direct_sum_is_the_value_without_closed_form(self, convex_params):
        params = replace(convex_params, schedule=StepSchedule.inv_t_beta(1.0))
        report = bounds.convex_delta(params)
        assert "closed_form" not in report.values
        assert report.value == pytest.approx(report.values["general"])

    def test_unit_variant(self, convex_params):
        report = bounds.convex_delta(replace(convex_params, schedule=StepSchedule.inv_t()), variant="unit")
        assert report.values["closed_form"] == pytest.approx(4.05269844994)

    def test_default_variant_uses_c_lambda(self, convex_params):
        params = replace(convex_params, schedule=StepSchedule.inv_t())
        scaled = bounds.convex_delta(params).values["closed_form"]
        unit = bounds.convex_delta(params, variant="unit").values["closed_form"]
        assert scaled > unit
        assert scaled >= bounds.convex_delta(params).values["general"]

    def test_trace_mean_equals_general(self, convex_params):
        table = index_table(3, "twin-shared", convex_params.m, convex_params.T, convex_params.n)
        report = bounds.convex_delta(convex_params, table)
        assert report.eps.shape == (4, 25)
        assert report.values["delta_from_trace"] == pytest.approx(report.values["general"])
        assert report.values["rms"] >= report.values["delta_from_trace"]
        assert report.values["eps_uniform"] == pytest.approx(bounds.realized_uniform(convex_params, table))

    def test_trace_entry_matches_envelope(self, convex_params):
        table = index_table(3, "twin-shared", convex_params.m, convex_params.T, convex_params.n)
        eps = bounds.convex_delta(convex_params, table).eps
        r, k = 2, 7
        hits = np.flatnonzero(table[:, r - 1] == k - 1) + 1
        assert eps[r - 1, k - 1] == pytest.approx(bounds.eps_from_hits(Regime.CONVEX, convex_params, hits))

    def test_trace_shape_checked(self, convex_params):
        with pytest.raises(ValidationError):
            bounds.convex_delta(convex_params, np.zeros((3, 4), dtype=int))


class TestStronglyConvexDelta:
    """Tests for strongly_convex_delta."""

    def test_constant_closed_form(self, convex_params):
        params = replace(convex_params, mu=0.1, schedule=StepSchedule.constant(0.5))
        report = bounds.strongly_convex_delta(params)
        assert report.values["closed_form"] == pytest.approx(60.4)
        assert report.values["general_product"] <= report.values["general"]

    def test_closed_form_independent_of_horizon(self, convex_params):
        short = replace(convex_params, mu=0.1, schedule=StepSchedule.constant(0.5), T=200)
        long = replace(short, T=2000)
        assert bounds.strongly_convex_delta(short).value == bounds.strongly_convex_delta(long).value

    def test_needs_mu(self, convex_params):
        with pytest.raises(DomainError):
            bounds.strongly_convex_delta(convex_params)


class TestNonconvexDelta:
    """Tests for nonconvex_delta."""

    def test_constant_closed_form(self, convex_params):
        report = bounds.nonconvex_delta(replace(convex_params, T=10))
        assert report.values["closed_form"] == pytest.approx(1.60812032526)
        assert report.values["general"] <= report.values["closed_form"]

    def test_log_domain(self, convex_params):
        report = bounds.nonconvex_delta(replace(convex_params, T=2000, schedule=StepSchedule.constant(1.0)))
        assert report.log_domain
        assert report.value == math.inf
        assert report.values["log_value"] == pytest.approx(math.log(2.0 * (3.0 + 0.01)) + 2000 * math.log(2.0))

    def test_inv_t_beta_closed_form(self, convex_params):
        params = replace(convex_params, T=50, schedule=StepSchedule.inv_t_beta(1.0))
        report = bounds.nonconvex_delta(params)
        expected = 4.0 * 51 * (2.0 * bounds.c_lambda(1.0 / 3.0) + 0.01)
        assert report.values["closed_form"] == pytest.approx(expected)


class TestDispatch:
    """Tests for delta_for."""

    def test_routes_by_regime(self, convex_params):
        assert bounds.delta_for(Regime.CONVEX, convex_params).theorem == "convex"
        assert bounds.delta_for("nonconvex", convex_params).theorem == "nonconvex"

    def test_unknown_regime(self, convex_params):
        with pytest.raises(ValidationError):
            bounds.delta_for(Regime.OPTIMIZATION, convex_params)


class TestEnvelope:
    """Tests for per_step_envelope."""

    @pytest.fixture
    def small(self):
        return BoundParams(L=1.0, beta=1.0, m=2, n=4, T=3, lam=0.0, schedule=StepSchedule.constant(0.1))

    def test_without_hits(self, small):
        np.testing.assert_allclose(bounds.per_step_envelope(Regime.CONVEX, small), [0.0, 0.0, 0.04, 0.08])

    def test_with_hit(self, small):
        np.testing.assert_allclose(bounds.per_step_envelope(Regime.CONVEX, small, [1]), [0.0, 0.1, 0.14, 0.18])

    def test_hit_out_of_range(self, small):
        with pytest.raises(ValidationError):
            bounds.per_step_envelope(Regime.CONVEX, small, [4])

    def test_expected_injection(self, small):
        envelope = bounds.per_step_envelope(Regime.CONVEX, small, injection=0.25)
        assert envelope[1] == pytest.approx(0.025)

    def test_strongly_convex_contracts(self, small):
        params = replace(small, mu=1.0)
        assert bounds.per_step_envelope(Regime.STRONGLY_CONVEX, params, [1])[-1] < 0.18

    def test_no_envelope_for_local_regime(self, small):
        with pytest.raises(ValidationError):
            bounds.per_step_envelope(Regime.LOCAL_CONVEX, small)


class TestAverageWeight:
    """Tests for avg_weight_delta."""

    def test_convex_closed_form(self, convex_params):
        assert bounds.avg_weight_delta(convex_params).values["closed_form"] == pytest.approx(3.2)

    def test_below_final_iterate(self, convex_params):
        average = bounds.avg_weight_delta(convex_params).values["general"]
        final = bounds.convex_delta(convex_params).values["general"]
        assert average < final

    def test_nonconvex_closed_form(self, convex_params):
        params = replace(convex_params, T=10)
        report = bounds.avg_weight_delta(params, Regime.NONCONVEX)
        expected = (4.0 / (2.0 / 3.0) + 2.0 / (100 * 0.01)) * 1.1**11 / 11
        assert report.values["closed_form"] == pytest.approx(expected)


class TestGeneralization:
    """Tests for the generalization bound and its envelope."""

    def test_value(self):
        assert bounds.generalization_bound(1.0, 100, 0.1, 0.0) == pytest.approx(0.1517427, abs=1e-7)

    def test_stability_term(self):
        value = bounds.generalization_bound(0.0, 100, 0.1, 2.0)
        assert value == pytest.approx(2.0 * math.log(100) * math.log(10))

    @pytest.mark.parametrize("mn,delta", [(1, 0.1), (10, 0.0), (10, 1.0)])
    def test_domain(self, mn, delta):
        with pytest.raises(DomainError):
            bounds.generalization_bound(1.0, mn, delta, 0.0)

    def test_envelope_terms(self, convex_params):
        table = index_table(0, "primary", 4, 100, 25)
        terms = bounds.generalization_envelope(convex_params, table)
        assert terms["consensus"] == pytest.approx(4.0 * math.sqrt(2.0) * 0.01 * 100 * 1.5)
        assert terms["sampling"] > 0.0


class TestUniform:
    """Tests for the uniform-stability comparison."""

    def test_expected_form(self, convex_params):
        assert bounds.uniform_eps_bound(convex_params) == pytest.approx(6.2)

    def test_realized_above_mean(self, convex_params):
        table = index_table(1, "primary", 4, 100, 25)
        mean = bounds.convex_delta(convex_params, table).values["delta_from_trace"]
        assert bounds.realized_uniform(convex_params, table) > mean


class TestOptimization:
    """Tests for the optimization bounds."""

    @pytest.fixture
    def opt_params(self, convex_params):
        return replace(convex_params, schedule=StepSchedule.constant(0.3), sigma=0.5, gamma=0.2)

    def test_needs_sigma(self, convex_params):
        with pytest.raises(DomainError):
            bounds.opt_rhs_constant(convex_params)

    def test_constant_terms_sum(self, opt_params):
        report = bounds.opt_rhs_constant(opt_params)
        terms = [report.values[f"term_{i}"] for i in range(1, 7)]
        assert report.value == pytest.approx(sum(terms))
        assert report.precondition_met

    def test_cap_flagged(self, opt_params):
        assert not bounds.opt_rhs_constant(replace(opt_params, schedule=StepSchedule.constant(0.5))).precondition_met

    def test_error_divides_by_horizon(self, opt_params):
        rhs = bounds.opt_rhs_constant(opt_params).value
        expected = rhs / (4.0 * 0.3 * 0.2 / 3.0 * 101)
        assert bounds.opt_error(opt_params) == pytest.approx(expected)

    def test_decreasing(self, opt_params):
        report = bounds.opt_rhs_decreasing(replace(opt_params, schedule=StepSchedule.inv_t_gamma(0.2)))
        assert report.precondition_met
        assert report.value > 0.0

    def test_decreasing_needs_gamma(self, opt_params):
        with pytest.raises(DomainError):
            bounds.opt_rhs_decreasing(replace(opt_params, gamma=0.0))


class TestLocalBound:
    """Tests for local_bound."""

    @pytest.fixture
    def complete(self):
        return TopologySchedule.static(build_topology(TopologyKind.COMPLETE, 4))

    @pytest.fixture
    def params(self):
        return BoundParams(L=1.0, beta=1.0, m=4, n=8, T=10, lam=0.0, schedule=StepSchedule.constant(0.1))

    def test_complete_graph_mean(self, complete, params):
        report = bounds.local_bound(Regime.CONVEX, complete, params, r=1)
        assert report.values["mean_over_k"] == pytest.approx(0.0625)
        assert report.precondition_met

    def test_hits(self, complete, params):
        report = bounds.local_bound(Regime.CONVEX, complete, params, r=2, indicator_hits=[1, 5])
        assert report.values["per_rk"] == pytest.approx(2.0 * 0.25 * 0.2)
        assert report.values["divergence"] == pytest.approx(report.values["per_rk"])

    def test_gossip_first_chain_skips_the_hit_step(self, complete, params):
        report = bounds.local_bound(Regime.CONVEX, complete, params, r=2, indicator_hits=[1, 10])
        assert report.values["divergence"] == pytest.approx(2.0 * (0.25 * 0.1 + 0.25 * 0.1))
        assert report.values["divergence_after_gossip"] == pytest.approx(2.0 * (0.25 * 0.1 + 1.0 * 0.1))

    def test_strongly_convex_below_convex(self, complete, params):
        strong = bounds.local_bound(Regime.STRONGLY_CONVEX, complete, replace(params, mu=0.5), r=1)
        convex = bounds.local_bound(Regime.CONVEX, complete, params, r=1)
        assert strong.value < convex.value

    def test_nonconvex_above_convex(self, complete, params):
        nonconvex = bounds.local_bound(Regime.NONCONVEX, complete, params, r=1)
        convex = bounds.local_bound(Regime.CONVEX, complete, params, r=1)
        assert nonconvex.value > convex.value

    def test_shift_too_large(self, complete, params):
        with pytest.raises(ShiftError):
            bounds.local_bound(Regime.STRONGLY_CONVEX, complete, replace(params, mu=1.0, schedule=StepSchedule.constant(1.0)), r=1)

    def test_local_delta_sq(self, complete, params):
        table = index_table(0, "twin-shared", 4, 10, 8)
        report = bounds.local_bound(Regime.CONVEX, complete, params, r=1, indicator_traces=table)
        assert report.values["local_delta_sq"] >= report.values["mean_over_k"] ** 2

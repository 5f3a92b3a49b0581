"""Tests for the acceptance suite on the quick profile."""

import json

import pytest

from dsgd_stability.config import load_config
from dsgd_stability.errors import ValidationError
from dsgd_stability.verify import (
    CRITERIA,
    DETERMINISM_CRITERIA,
    PROFILES,
    CriterionResult,
    SuiteContext,
    _strong_params,
    run_criterion,
    run_suite,
    suite_report,
)


@pytest.fixture
def quick():
    return SuiteContext(PROFILES["quick"])


class TestCriteria:
    """Tests for individual criteria that are cheap on the quick profile."""

    @pytest.mark.parametrize("number", [1, 2, 3, 4, 9, 12])
    def test_passes(self, quick, number):
        result = run_criterion(number, quick)
        assert result.passed, result.detail
        assert result.name == CRITERIA[number][0]

    def test_topology_detail(self, quick):
        detail = run_criterion(1, quick).detail
        assert detail["ring4"] == pytest.approx(1.0 / 3.0)
        assert set(detail["complete"].values()) == {0.0}

    def test_variance_detail_shape(self, quick):
        result = run_criterion(15, quick)
        assert set(result.detail) == {"misses", "max_z"}
        assert result.detail["misses"] <= PROFILES["quick"].variance_points

    def test_detail_is_deterministic(self, quick):
        first = run_criterion(9, quick).to_record()
        second = run_criterion(9, SuiteContext(PROFILES["quick"])).to_record()
        assert first == second


@pytest.fixture(scope="module")
def shared():
    """One quick context for the sweep-backed criteria, so 5-8 compute their sweeps once."""
    return SuiteContext(PROFILES["quick"])


class TestSweepCriteria:
    """Tests for the criteria built on full (r, k) sweeps and the ones that follow them."""

    @pytest.mark.parametrize("number", [5, 7])
    def test_envelope_recursions(self, shared, number):
        result = run_criterion(number, shared)
        assert result.passed, result.detail
        assert set(result.detail) == {"sweeps", "envelope_violations"}
        assert result.detail["sweeps"] == PROFILES["quick"].stability_seeds
        assert result.detail["envelope_violations"] == 0

    def test_strongly_convex(self, shared):
        result = run_criterion(6, shared)
        assert result.passed, result.detail
        assert set(result.detail) == {
            "sweeps", "envelope_violations", "above_closed_form", "closed_T200", "closed_T2000",
        }
        assert result.detail["above_closed_form"] == 0
        assert result.detail["closed_T200"] == result.detail["closed_T2000"]

    def test_strongly_convex_constants_follow_the_model(self):
        params = _strong_params(4, 16, 200, 1.0 / 3.0)
        assert params.L == pytest.approx(1.2)
        assert params.beta == pytest.approx(0.35)
        assert params.mu == pytest.approx(0.1)

    def test_ordering(self, shared):
        result = run_criterion(8, shared)
        assert result.passed, result.detail
        assert set(result.detail) == {"sweeps", "rms_above_uniform", "direct_above_surrogate"}
        assert result.detail["sweeps"] == 3 * PROFILES["quick"].stability_seeds


class TestOptimizationCriteria:
    """Tests for the optimization-rate criteria."""

    def test_high_probability(self, quick):
        result = run_criterion(10, quick)
        assert result.passed, result.detail
        assert set(result.detail) == {"covered", "seeds", "min_slack"}
        assert result.detail["seeds"] == PROFILES["quick"].opt_seeds

    def test_decreasing_rate(self, quick):
        result = run_criterion(11, quick)
        assert result.passed, result.detail
        assert set(result.detail) == {"slope", "medians"}
        assert result.detail["slope"] <= -0.8
        assert len(result.detail["medians"]) == len(PROFILES["quick"].decreasing_Ts)


class TestLocalCriterion:
    """Tests for the local-model criterion."""

    def test_passes_on_gossip_then_grad(self, quick):
        result = run_criterion(13, quick)
        assert result.passed, result.detail
        assert set(result.detail) == {"positions", "bound_violations", "recursion_violations"}
        assert result.detail["positions"] == PROFILES["quick"].local_seeds * 4 * 8


class TestDeterminism:
    """Tests for the determinism criterion and suite payload stability."""

    def test_passes(self, quick):
        result = run_criterion(14, quick)
        assert result.passed, result.detail
        assert set(result.detail) == {"across_jobs", "rerun", "criteria", "cells"}
        assert result.detail["criteria"] == list(DETERMINISM_CRITERIA)
        assert result.detail["cells"] == 4

    async def test_suite_records_independent_of_jobs(self):
        serial = await run_suite("quick", [1, 5, 9, 13], jobs=1)
        parallel = await run_suite("quick", [1, 5, 9, 13], jobs=8)
        assert [r.to_record() for r in serial] == [r.to_record() for r in parallel]


class TestRunSuite:
    """Tests for run_suite and suite_report."""

    async def test_selected_criteria_in_order(self):
        results = await run_suite("quick", [3, 1], jobs=2)
        assert [result.number for result in results] == [1, 3]
        assert all(result.passed for result in results)

    async def test_unknown_profile(self):
        with pytest.raises(ValidationError):
            await run_suite("huge")

    async def test_unknown_criterion(self):
        with pytest.raises(ValidationError):
            await run_suite("quick", [16])

    def test_report(self):
        config = load_config({"kind": "verify-suite", "verify": {"profile": "quick"}})
        results = [
            CriterionResult(1, "topology-spectral", True, {"ring4": 0.5}),
            CriterionResult(2, "non-expansive-steps", False, {"logistic": 3}),
        ]
        report = suite_report(config, results)
        assert report.kind == "verify-suite"
        assert report.metrics == {"profile": "quick", "passed": [1], "failed": [2]}
        assert json.loads(report.records[1]["detail"]) == {"logistic": 3}

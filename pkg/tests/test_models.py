"""Tests for the configuration models."""

import pytest

from dsgd_stability.errors import (
    ConfigError,
    CriterionFailure,
    IngestError,
    LabError,
    RangeError,
    ShiftError,
    ValidationError,
    exit_code_for,
)
from dsgd_stability.models import (
    ExperimentConfig,
    ExperimentKind,
    LossFamily,
    Regime,
    RunSection,
    ScheduleKind,
    StepKind,
    TopologyConfig,
    TopologyKind,
    UpdateOrder,
    Weighting,
)


class TestExperimentConfig:
    """Tests for ExperimentConfig."""

    def test_defaults(self):
        """Test an empty document gives a single logistic run on a ring."""
        config = ExperimentConfig.from_dict({})

        assert config.kind == ExperimentKind.SINGLE_RUN
        assert config.run.loss.family == LossFamily.LOGISTIC
        assert config.run.topology.members[0].kind == TopologyKind.RING
        assert config.run.schedule.kind == StepKind.CONSTANT
        assert config.run.update_order == UpdateOrder.GOSSIP_THEN_GRAD
        assert config.seeds == [0]
        assert config.jobs is None

    def test_seed_count(self):
        """Test an integer seed count expands to a range."""
        config = ExperimentConfig.from_dict({"seeds": 3})
        assert config.seeds == [0, 1, 2]

    def test_round_trip(self):
        data = {
            "kind": "twin",
            "run": {
                "loss": {"family": "ridge-logistic", "mu": 0.1},
                "data": {"m": 3, "n": 5, "dim": 2},
                "schedule": {"kind": "inv-t-mu"},
                "T": 20,
                "projected": True,
                "regime": "strongly-convex",
            },
            "twin": {"r": 2, "k": 4, "eval_pool": 8},
            "seeds": [4, 5],
        }
        config = ExperimentConfig.from_dict(data)
        again = ExperimentConfig.from_dict(config.to_dict())
        assert again.to_dict() == config.to_dict()
        assert again.run.regime == Regime.STRONGLY_CONVEX
        assert again.twin.k == 4

    def test_jobs_not_in_canonical_form(self):
        config = ExperimentConfig.from_dict({"jobs": 4})
        assert "jobs" not in config.to_dict()

    def test_unknown_enum_value(self):
        """Test an unknown loss family is rejected."""
        with pytest.raises(ValueError):
            RunSection.from_dict({"loss": {"family": "hinge"}})


class TestTopologyConfig:
    """Tests for TopologyConfig."""

    def test_single_member_shorthand(self):
        config = TopologyConfig.from_dict({"kind": "complete", "weighting": "max-degree"})
        assert config.schedule == ScheduleKind.STATIC
        assert len(config.members) == 1
        assert config.members[0].weighting == Weighting.MAX_DEGREE

    def test_cycle(self):
        config = TopologyConfig.from_dict(
            {"schedule": "periodic-cycle", "members": [{"kind": "ring"}, {"kind": "complete"}]}
        )
        assert [member.kind for member in config.members] == [TopologyKind.RING, TopologyKind.COMPLETE]


class TestErrors:
    """Tests for the error hierarchy and exit codes."""

    def test_validation_lists_violations(self):
        error = ValidationError("bad matrix", ["row 1 sums to 0.9", "not symmetric"])
        assert error.violations == ["row 1 sums to 0.9", "not symmetric"]
        assert "row 1 sums to 0.9; not symmetric" in str(error)

    def test_path_prefix(self):
        assert str(ConfigError("missing T", path="exp.yaml")) == "exp.yaml: missing T"

    def test_ingest_line(self):
        assert str(IngestError("bad token", line=7)).startswith("line 7:")

    def test_builtin_bases(self):
        assert issubclass(ValidationError, ValueError)
        assert issubclass(RangeError, IndexError)
        assert issubclass(ShiftError, ValidationError)

    @pytest.mark.parametrize(
        "error,code",
        [
            (ConfigError("x"), 1),
            (ValidationError("x"), 1),
            (CriterionFailure(["3 (c-lambda)"]), 2),
            (LabError("x"), 3),
            (ValueError("x"), 1),
            (RuntimeError("x"), 3),
        ],
    )
    def test_exit_codes(self, error, code):
        assert exit_code_for(error) == code

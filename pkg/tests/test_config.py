"""Tests for config loading, overrides and validation."""

import json
from pathlib import Path

import pytest

from dsgd_stability.config import (
    apply_overrides,
    config_hash,
    dump_config,
    load_config,
    parse_override,
    validate_document,
)
from dsgd_stability.errors import ConfigError
from dsgd_stability.models import ExperimentKind, LossFamily, StepKind


class TestOverrides:
    """Tests for dotted-path overrides."""

    def test_parse_typed_values(self):
        assert parse_override("run.T=50") == (["run", "T"], 50)
        assert parse_override("run.projected=true") == (["run", "projected"], True)
        assert parse_override("seeds=[1, 2]") == (["seeds"], [1, 2])
        assert parse_override("run.loss.family=quadratic") == (["run", "loss", "family"], "quadratic")

    def test_malformed(self):
        with pytest.raises(ConfigError):
            parse_override("run.T")

    def test_creates_nested_sections(self):
        result = apply_overrides({}, ["run.schedule.eta=0.5"])
        assert result == {"run": {"schedule": {"eta": 0.5}}}

    def test_does_not_mutate_input(self):
        data = {"run": {"T": 10}}
        apply_overrides(data, ["run.T=20"])
        assert data["run"]["T"] == 10

    def test_through_scalar(self):
        with pytest.raises(ConfigError):
            apply_overrides({"run": 3}, ["run.T=5"])


class TestValidateDocument:
    """Tests for schema validation."""

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unexpected"):
            validate_document({"run": {"steps": 10}})

    def test_bad_enum(self):
        with pytest.raises(ConfigError):
            validate_document({"run": {"loss": {"family": "hinge"}}})

    def test_nulls_allowed_for_optional_fields(self):
        validate_document({"run": {"loss": {"domain_radius": None}}, "jobs": None})


class TestLoadConfig:
    """Tests for load_config."""

    def test_defaults(self):
        config = load_config()
        assert config.kind == ExperimentKind.SINGLE_RUN

    def test_yaml_file(self, tmp_path):
        path = tmp_path / "exp.yaml"
        path.write_text("kind: twin\nrun:\n  T: 12\n  loss:\n    family: saturating-nonconvex\n")
        config = load_config(path)
        assert config.run.T == 12
        assert config.run.loss.family == LossFamily.SATURATING_NONCONVEX

    def test_json_file_with_overrides_and_kind(self, tmp_path):
        path = tmp_path / "exp.json"
        path.write_text(json.dumps({"run": {"schedule": {"kind": "inv-t"}}}))
        config = load_config(path, ["run.T=7"], "bound-eval")
        assert config.kind == ExperimentKind.BOUND_EVAL
        assert config.run.T == 7
        assert config.run.schedule.kind == StepKind.INV_T

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError) as exc:
            load_config(tmp_path / "missing.yaml")
        assert exc.value.path.endswith("missing.yaml")

    def test_not_a_mapping(self, tmp_path):
        path = tmp_path / "list.yaml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(ConfigError):
            load_config(path)

    @pytest.mark.parametrize(
        "data",
        [
            {"run": {"loss": {"family": "quadratic"}}},
            {"run": {"loss": {"family": "logistic", "mu": 0.1}}},
            {"run": {"loss": {"family": "ridge-logistic", "mu": 0.1}, "regime": "strongly-convex"}},
            {"run": {"loss": {"family": "saturating-nonconvex"}, "regime": "convex"}},
            {"run": {"regime": "optimization"}},
            {"run": {"data": {"source": "libsvm"}}},
            {"kind": "twin", "twin": {"r": 9}},
        ],
    )
    def test_regime_mismatch(self, data):
        with pytest.raises(ConfigError, match="regime mismatch"):
            load_config(data)


class TestConfigHash:
    """Tests for config_hash."""

    def test_stable(self):
        assert config_hash(load_config({"seeds": [1]})) == config_hash(load_config({"seeds": [1]}))

    def test_ignores_output_and_jobs(self):
        base = load_config({})
        other = load_config({"output": {"directory": "elsewhere"}, "jobs": 3})
        assert config_hash(base) == config_hash(other)

    def test_changes_with_content(self):
        assert config_hash(load_config({})) != config_hash(load_config({"run": {"T": 99}}))

    def test_dump_reloads(self):
        config = load_config({"kind": "sweep", "sweep": {"grid": {"eta": [0.1, 0.2]}}})
        assert config_hash(load_config(json.loads(dump_config(config)))) == config_hash(config)


class TestShippedExperiments:
    """Tests for the configs under experiments/."""

    @pytest.mark.parametrize(
        "path",
        sorted((Path(__file__).parent.parent / "experiments").glob("*.yaml")),
        ids=lambda path: path.stem,
    )
    def test_loads(self, path):
        load_config(path)

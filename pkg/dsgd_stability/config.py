"""
Experiment configuration: loading, dotted-path overrides, schema and regime validation,
and the content hash reports are named by.
"""

import copy
import hashlib
import json
import logging
from functools import cache
from importlib import resources
from pathlib import Path
from typing import Any

import yaml
from jsonschema import Draft202012Validator

from .errors import ConfigError
from .models import ExperimentConfig, ExperimentKind, LossFamily, Regime

logger = logging.getLogger(__name__)

SCHEMA_FILE = "experiment.schema.json"


@cache
def load_schema(name: str = SCHEMA_FILE) -> dict[str, Any]:
    """Load a schema shipped in the package's schemas directory."""
    text = resources.files("dsgd_stability").joinpath("schemas", name).read_text()
    return json.loads(text)


def parse_override(assignment: str) -> tuple[list[str], Any]:
    """Split `a.b.c=value` into its key path and a YAML-typed value."""
    key, sep, raw = assignment.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as e:
        raise ConfigError(f"override value {raw!r} does not parse: {e}") from e
    return key.strip().split("."), value


def apply_overrides(data: dict[str, Any], assignments: list[str]) -> dict[str, Any]:
    """Return a copy of `data` with each `key.path=value` assignment applied."""
    result = copy.deepcopy(data)
    for assignment in assignments:
        path, value = parse_override(assignment)
        node = result
        for part in path[:-1]:
            child = node.get(part)
            if child is None:
                child = node[part] = {}
            elif not isinstance(child, dict):
                raise ConfigError(f"cannot set {'.'.join(path)}: {part} is not a mapping")
            node = child
        node[path[-1]] = value
        logger.debug(f"Override {'.'.join(path)} = {value!r}")
    return result


def validate_document(data: Any, path: str | None = None) -> None:
    """Validate a raw config document against the experiment schema.

    Raises:
        ConfigError: with every schema violation listed
    """
    validator = Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        details = "; ".join(
            f"{'.'.join(str(p) for p in error.absolute_path) or '<root>'}: {error.message}"
            for error in errors
        )
        raise ConfigError(f"schema validation failed: {details}", path=path)


def check_regime(config: ExperimentConfig, path: str | None = None) -> None:
    """Reject runs whose declared regime contradicts the loss or the projection setting.

    Violated stepsize caps are not checked here; they are warned on and recorded at run time.
    """
    run = config.run
    regime = run.regime
    family = run.loss.family
    problems = []
    if family == LossFamily.QUADRATIC and run.loss.mu <= 0:
        problems.append("quadratic family needs loss.mu > 0")
    if family in (LossFamily.LOGISTIC, LossFamily.SATURATING_NONCONVEX) and run.loss.mu:
        problems.append(f"{family.value} family takes no loss.mu")
    if run.data.source == "libsvm" and not run.data.path:
        problems.append("libsvm source needs data.path")
    if run.projected and run.loss.domain_radius is None:
        problems.append("projected run needs loss.domain_radius")
    strong = family in (LossFamily.RIDGE_LOGISTIC, LossFamily.QUADRATIC) and run.loss.mu > 0
    if regime in (Regime.STRONGLY_CONVEX, Regime.LOCAL_STRONGLY_CONVEX):
        if not strong:
            problems.append(f"{regime.value} regime needs a family with mu > 0")
        if regime == Regime.STRONGLY_CONVEX and not run.projected:
            problems.append("strongly-convex regime needs projected = true")
    if regime in (Regime.CONVEX, Regime.LOCAL_CONVEX, Regime.OPTIMIZATION):
        if family == LossFamily.SATURATING_NONCONVEX:
            problems.append(f"{regime.value} regime needs a convex family")
    if regime == Regime.OPTIMIZATION and not strong:
        problems.append("optimization regime needs a PL family (mu > 0)")
    if config.kind == ExperimentKind.TWIN and not config.twin.full_sweep:
        if config.twin.r > run.data.m or config.twin.k > run.data.n:
            problems.append(f"twin position ({config.twin.r}, {config.twin.k}) outside the dataset")
    if problems:
        raise ConfigError("regime mismatch: " + "; ".join(problems), path=path)


def load_config(
    source: str | Path | dict[str, Any] | None = None,
    overrides: list[str] | None = None,
    kind: ExperimentKind | str | None = None,
) -> ExperimentConfig:
    """Load, override, validate and parse an experiment config.

    Args:
        source: path to a JSON or YAML document, an already-parsed mapping, or None for defaults
        overrides: `key.path=value` assignments applied before validation
        kind: experiment kind forced by the CLI subcommand

    Raises:
        ConfigError: unreadable file, schema violation or regime mismatch
    """
    path = None
    if source is None:
        data: Any = {}
    elif isinstance(source, dict):
        data = source
    else:
        path = str(source)
        try:
            data = yaml.safe_load(Path(source).read_text()) or {}
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}", path=path) from e
        except yaml.YAMLError as e:
            raise ConfigError(f"config does not parse: {e}", path=path) from e
    if not isinstance(data, dict):
        raise ConfigError("config document must be a mapping", path=path)
    data = apply_overrides(data, overrides or [])
    if kind is not None:
        data["kind"] = ExperimentKind(kind).value
    validate_document(data, path)
    try:
        config = ExperimentConfig.from_dict(data)
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e), path=path) from e
    check_regime(config, path)
    config.source = path
    logger.info(f"Loaded {config.kind.value} config ({config_hash(config)[:12]})")
    return config


def canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def config_hash(config: ExperimentConfig) -> str:
    """sha256 over the canonical config, without the output section and `jobs`."""
    data = config.to_dict()
    data.pop("output", None)
    return hashlib.sha256(canonical_json(data).encode()).hexdigest()


def dump_config(config: ExperimentConfig) -> str:
    """Pretty JSON of a config, loadable again with load_config."""
    return json.dumps(config.to_dict(), indent=2)

"""
Report records and their CSV / JSON files.

CSV files carry one row per step, neighbor position or grid cell, with a fixed column
order per report kind and a version line above the header. JSON files hold the full nested
record and validate against schemas/report.schema.json. The metric payload (everything but
timing) is byte-identical across reruns of the same config.
"""

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np
from jsonschema import Draft202012Validator

from .config import canonical_json, load_schema
from .errors import LabError, ValidationError

logger = logging.getLogger(__name__)

UTC = timezone.utc  # datetime.UTC is 3.11+

SCHEMA_VERSION = 1
REPORT_SCHEMA = "report.schema.json"
VERSION_PREFIX = "# dsgd-lab report"

CSV_COLUMNS: dict[str, list[str]] = {
    "single-run": ["seed", "t", "consensus", "consensus_bound", "average_norm", "risk"],
    "twin": ["seed", "r", "k", "t", "d_t", "node_mean", "hit", "envelope"],
    "twin-sweep": [
        "seed",
        "r",
        "k",
        "hits",
        "first_hit",
        "final_divergence",
        "eps_surrogate",
        "eps_direct",
        "eps_bound",
    ],
    "bound-eval": ["theorem", "quantity", "value", "precondition_met"],
    "sweep": [
        "cell",
        "seed",
        "settings",
        "delta_mean",
        "rms",
        "eps_uniform",
        "bound",
        "precondition_met",
    ],
    "verify-suite": ["criterion", "name", "passed", "detail"],
}


@dataclass
class Report:
    """One experiment's results: config echo, metric records and precondition flags."""

    kind: str
    config: dict[str, Any]
    config_hash: str
    records: list[dict[str, Any]] = field(default_factory=list)
    metrics: dict[str, Any] = field(default_factory=dict)
    preconditions: dict[str, bool] = field(default_factory=dict)
    wall_clock_seconds: float = 0.0
    created_at: str = field(default_factory=lambda: datetime.now(UTC).isoformat())

    @property
    def stem(self) -> str:
        return f"{self.kind}-{self.config_hash[:12]}"

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "config_hash": self.config_hash,
            "config": jsonable(self.config),
            "metrics": jsonable(self.metrics),
            "records": jsonable(self.records),
            "preconditions": dict(self.preconditions),
            "wall_clock_seconds": self.wall_clock_seconds,
            "created_at": self.created_at,
        }

    def payload(self) -> str:
        """Canonical JSON of everything except timing, for determinism comparisons."""
        data = self.to_dict()
        data.pop("wall_clock_seconds")
        data.pop("created_at")
        return canonical_json(data)


def jsonable(value: Any) -> Any:
    """Convert numpy values to plain JSON types; non-finite floats become strings."""
    if isinstance(value, dict):
        return {str(key): jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        number = float(value)
        return number if math.isfinite(number) else str(number)
    return value


def validate_report(data: dict[str, Any]) -> None:
    """Validate a report dict against the shipped report schema.

    Raises:
        ValidationError: with every violation listed
    """
    validator = Draft202012Validator(load_schema(REPORT_SCHEMA))
    errors = [
        f"{'.'.join(str(p) for p in error.absolute_path) or '<root>'}: {error.message}"
        for error in validator.iter_errors(data)
    ]
    if errors:
        raise ValidationError("report does not match its schema", errors)


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (dict, list)):
        return canonical_json(jsonable(value))
    return str(value)


def _parse(text: str) -> Any:
    if text == "":
        return None
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def write_csv(report: Report, path: Path) -> Path:
    columns = CSV_COLUMNS[report.kind]
    with open(path, "w", newline="") as f:
        f.write(f"{VERSION_PREFIX} v{SCHEMA_VERSION} kind={report.kind}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for record in report.records:
            writer.writerow([_cell(record.get(column)) for column in columns])
    return path


def read_csv(path: str | Path) -> tuple[dict[str, Any], list[dict[str, Any]]]:
    """Read a report CSV back.

    Returns:
        (header metadata with `version` and `kind`, rows with numbers and booleans restored)
    """
    with open(path, newline="") as f:
        first = f.readline().strip()
        if not first.startswith(VERSION_PREFIX):
            raise ValidationError(f"{path} is not a report CSV (missing version line)")
        meta: dict[str, Any] = {}
        for token in first[len(VERSION_PREFIX) :].split():
            if token.startswith("v") and token[1:].isdigit():
                meta["version"] = int(token[1:])
            elif "=" in token:
                key, _, value = token.partition("=")
                meta[key] = value
        reader = csv.DictReader(f)
        rows = [{key: _parse(value) for key, value in row.items()} for row in reader]
    return meta, rows


def emit_report(
    report: Report,
    directory: str | Path,
    formats: list[str] | tuple[str, ...] = ("csv", "json"),
) -> list[Path]:
    """Write a report's files; names embed the config hash.

    Raises:
        LabError: output directory cannot be written
        ValidationError: JSON record does not match the report schema
    """
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise LabError(f"cannot create output directory: {e}", path=str(directory)) from e
    written = []
    for fmt in formats:
        path = directory / f"{report.stem}.{fmt}"
        try:
            if fmt == "csv":
                write_csv(report, path)
            elif fmt == "json":
                data = report.to_dict()
                validate_report(data)
                path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
            else:
                raise ValidationError(f"unknown report format {fmt!r}")
        except OSError as e:
            raise LabError(f"cannot write report: {e}", path=str(path)) from e
        written.append(path)
    logger.info(f"Wrote {', '.join(p.name for p in written)} to {directory}")
    return written

"""
Decentralized SGD Stability Lab

Simulates D-SGD over gossip topologies, measures pointwise uniform stability with coupled
twin runs, and evaluates the stability, generalization and optimization bounds against
the measurements.

Modules:
    - topology: gossip matrices, spectral quantity, time-varying schedules
    - losses: loss families with analytic constants, risks, variance, minimizer oracle
    - engine: the D-SGD recursion and trajectory recording
    - stability: twin runs, pointwise ε, local-model traces
    - bounds: closed-form and direct-sum bound evaluators
    - experiment / verify / cli: config-driven experiments and the acceptance suite
"""

__version__ = "0.1.0"

from dsgd_stability.bounds import (
    BoundParams,
    BoundReport,
    convex_delta,
    local_bound,
    nonconvex_delta,
    strongly_convex_delta,
)
from dsgd_stability.config import load_config
from dsgd_stability.dataset import PartitionedDataset, generate_synthetic, ingest_libsvm
from dsgd_stability.engine import RunConfig, StepSchedule, Trajectory, run
from dsgd_stability.errors import LabError
from dsgd_stability.experiment import run_experiment
from dsgd_stability.losses import LossModel
from dsgd_stability.models import ExperimentConfig, LossFamily, Regime, TopologyKind
from dsgd_stability.report import Report, emit_report
from dsgd_stability.stability import NeighborSpec, StabilityTrace, twin_run
from dsgd_stability.topology import GossipMatrix, TopologySchedule, build_topology

__all__ = [
    # Models
    "ExperimentConfig",
    "LossFamily",
    "Regime",
    "TopologyKind",
    # Core
    "GossipMatrix",
    "TopologySchedule",
    "build_topology",
    "LossModel",
    "PartitionedDataset",
    "generate_synthetic",
    "ingest_libsvm",
    "RunConfig",
    "StepSchedule",
    "Trajectory",
    "run",
    "NeighborSpec",
    "StabilityTrace",
    "twin_run",
    # Bounds
    "BoundParams",
    "BoundReport",
    "convex_delta",
    "strongly_convex_delta",
    "nonconvex_delta",
    "local_bound",
    # Harness
    "load_config",
    "run_experiment",
    "Report",
    "emit_report",
    "LabError",
]

"""
Shared data models for the stability lab.

This module contains the enums used across modules and the declarative experiment
configuration, parsed from the config document with `from_dict` and echoed into reports
with `to_dict`.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any


class TopologyKind(str, Enum):
    """Named gossip graph families."""

    COMPLETE = "complete"
    RING = "ring"
    PATH = "path"
    TORUS2D = "torus2d"
    RANDOM_REGULAR = "random-regular"
    EXPLICIT = "explicit"


class Weighting(str, Enum):
    """Rules turning a graph into a doubly stochastic matrix."""

    METROPOLIS = "metropolis"
    LAZY_METROPOLIS = "lazy-metropolis"
    MAX_DEGREE = "max-degree"


class ScheduleKind(str, Enum):
    """How gossip matrices vary over steps."""

    STATIC = "static"
    PERIODIC_CYCLE = "periodic-cycle"
    EXPLICIT_LIST = "explicit-list"


class LossFamily(str, Enum):
    """Loss families with analytic constants."""

    LOGISTIC = "logistic"
    RIDGE_LOGISTIC = "ridge-logistic"
    QUADRATIC = "quadratic"
    SATURATING_NONCONVEX = "saturating-nonconvex"


class StepKind(str, Enum):
    """Stepsize schedules."""

    CONSTANT = "constant"
    INV_T = "inv-t"
    INV_T_MU = "inv-t-mu"
    INV_T_BETA = "inv-t-beta"
    INV_T_GAMMA = "inv-t-gamma"


class UpdateOrder(str, Enum):
    """Where the local gradient step sits relative to gossip."""

    GOSSIP_THEN_GRAD = "gossip-then-grad"
    GRAD_INSIDE_GOSSIP = "grad-inside-gossip"


class Regime(str, Enum):
    """Theorem regimes a run or bound is checked against."""

    CONVEX = "convex"
    STRONGLY_CONVEX = "strongly-convex"
    NONCONVEX = "nonconvex"
    OPTIMIZATION = "optimization"
    LOCAL_CONVEX = "local-convex"
    LOCAL_STRONGLY_CONVEX = "local-strongly-convex"


class SampleRole(str, Enum):
    """Roles keying the sampling streams."""

    PRIMARY = "primary"
    TWIN_SHARED = "twin-shared"


class LabelRule(str, Enum):
    """Label generators for synthetic data."""

    SIGN_FLIP = "sign-flip"
    LINEAR_NOISE = "linear-noise"


class ExperimentKind(str, Enum):
    """What an experiment config asks the harness to do."""

    SINGLE_RUN = "single-run"
    TWIN = "twin"
    BOUND_EVAL = "bound-eval"
    VERIFY_SUITE = "verify-suite"
    SWEEP = "sweep"


@dataclass
class TopologySpec:
    """One gossip matrix: a named graph with a weighting rule, or an explicit matrix."""

    kind: TopologyKind = TopologyKind.RING
    weighting: Weighting = Weighting.METROPOLIS
    degree: int | None = None
    seed: int = 0
    matrix: list[list[float]] | None = None

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TopologySpec":
        return cls(
            kind=TopologyKind(data.get("kind", "ring")),
            weighting=Weighting(data.get("weighting", "metropolis")),
            degree=data.get("degree"),
            seed=data.get("seed", 0),
            matrix=data.get("matrix"),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "weighting": self.weighting.value,
            "degree": self.degree,
            "seed": self.seed,
            "matrix": self.matrix,
        }


@dataclass
class TopologyConfig:
    """Static topology or a time-varying schedule of member topologies."""

    schedule: ScheduleKind = ScheduleKind.STATIC
    members: list[TopologySpec] = field(default_factory=lambda: [TopologySpec()])
    length: int | None = None

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TopologyConfig":
        if "members" in data:
            members = [TopologySpec.from_dict(item) for item in data["members"]]
        else:
            members = [TopologySpec.from_dict(data)]
        return cls(
            schedule=ScheduleKind(data.get("schedule", "static")),
            members=members,
            length=data.get("length"),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "schedule": self.schedule.value,
            "members": [member.to_dict() for member in self.members],
            "length": self.length,
        }


@dataclass
class LossConfig:
    """Loss family and the compact domain its constants are derived on."""

    family: LossFamily = LossFamily.LOGISTIC
    mu: float = 0.0
    domain_radius: float | None = 2.0
    feature_bound: float = 1.0
    label_bound: float = 1.0

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "LossConfig":
        return cls(
            family=LossFamily(data.get("family", "logistic")),
            mu=float(data.get("mu", 0.0)),
            domain_radius=data.get("domain_radius", 2.0),
            feature_bound=float(data.get("feature_bound", 1.0)),
            label_bound=float(data.get("label_bound", 1.0)),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "family": self.family.value,
            "mu": self.mu,
            "domain_radius": self.domain_radius,
            "feature_bound": self.feature_bound,
            "label_bound": self.label_bound,
        }


@dataclass
class DataConfig:
    """Where the partitioned dataset comes from."""

    source: str = "synthetic"
    m: int = 4
    n: int = 16
    dim: int = 5
    label_rule: LabelRule | None = None
    flip_noise: float = 0.1
    noise: float = 0.1
    seed: int = 0
    path: str | None = None

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "DataConfig":
        rule = data.get("label_rule")
        return cls(
            source=data.get("source", "synthetic"),
            m=int(data.get("m", 4)),
            n=int(data.get("n", 16)),
            dim=int(data.get("dim", 5)),
            label_rule=LabelRule(rule) if rule else None,
            flip_noise=float(data.get("flip_noise", 0.1)),
            noise=float(data.get("noise", 0.1)),
            seed=int(data.get("seed", 0)),
            path=data.get("path"),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "source": self.source,
            "m": self.m,
            "n": self.n,
            "dim": self.dim,
            "label_rule": self.label_rule.value if self.label_rule else None,
            "flip_noise": self.flip_noise,
            "noise": self.noise,
            "seed": self.seed,
            "path": self.path,
        }


@dataclass
class StepConfig:
    """Stepsize schedule; curvature fields default to the loss constants when unset."""

    kind: StepKind = StepKind.CONSTANT
    eta: float | None = 0.1
    mu: float | None = None
    beta: float | None = None
    gamma: float | None = None

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "StepConfig":
        return cls(
            kind=StepKind(data.get("kind", "constant")),
            eta=data.get("eta", 0.1),
            mu=data.get("mu"),
            beta=data.get("beta"),
            gamma=data.get("gamma"),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "eta": self.eta,
            "mu": self.mu,
            "beta": self.beta,
            "gamma": self.gamma,
        }


@dataclass
class RunSection:
    """Declarative form of one D-SGD run."""

    loss: LossConfig = field(default_factory=LossConfig)
    data: DataConfig = field(default_factory=DataConfig)
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    schedule: StepConfig = field(default_factory=StepConfig)
    T: int = 100
    update_order: UpdateOrder = UpdateOrder.GOSSIP_THEN_GRAD
    projected: bool = False
    initial_w: list[float] | None = None
    stride: int = 1
    regime: Regime | None = None

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunSection":
        regime = data.get("regime")
        return cls(
            loss=LossConfig.from_dict(data.get("loss", {})),
            data=DataConfig.from_dict(data.get("data", {})),
            topology=TopologyConfig.from_dict(data.get("topology", {})),
            schedule=StepConfig.from_dict(data.get("schedule", {})),
            T=int(data.get("T", 100)),
            update_order=UpdateOrder(data.get("update_order", "gossip-then-grad")),
            projected=bool(data.get("projected", False)),
            initial_w=data.get("initial_w"),
            stride=int(data.get("stride", 1)),
            regime=Regime(regime) if regime else None,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "loss": self.loss.to_dict(),
            "data": self.data.to_dict(),
            "topology": self.topology.to_dict(),
            "schedule": self.schedule.to_dict(),
            "T": self.T,
            "update_order": self.update_order.value,
            "projected": self.projected,
            "initial_w": self.initial_w,
            "stride": self.stride,
            "regime": self.regime.value if self.regime else None,
        }


@dataclass
class TwinConfig:
    """Neighbor position for twin runs, or a request for the full (r,k) sweep."""

    r: int = 1
    k: int = 1
    full_sweep: bool = False
    replacement: dict[str, Any] | None = None
    replacement_seed: int = 0
    eval_pool: int = 0
    local: bool = False
    gradient: bool = False

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TwinConfig":
        return cls(
            r=int(data.get("r", 1)),
            k=int(data.get("k", 1)),
            full_sweep=bool(data.get("full_sweep", False)),
            replacement=data.get("replacement"),
            replacement_seed=int(data.get("replacement_seed", 0)),
            eval_pool=int(data.get("eval_pool", 0)),
            local=bool(data.get("local", False)),
            gradient=bool(data.get("gradient", False)),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "r": self.r,
            "k": self.k,
            "full_sweep": self.full_sweep,
            "replacement": self.replacement,
            "replacement_seed": self.replacement_seed,
            "eval_pool": self.eval_pool,
            "local": self.local,
            "gradient": self.gradient,
        }


@dataclass
class BoundsConfig:
    """Which closed-form bounds to evaluate, with optional constant overrides."""

    regimes: list[Regime] = field(default_factory=lambda: [Regime.CONVEX])
    delta_conf: float = 0.1
    sigma: float | None = None
    variant: str = "c-lambda"
    overrides: dict[str, float] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "BoundsConfig":
        return cls(
            regimes=[Regime(item) for item in data.get("regimes", ["convex"])],
            delta_conf=float(data.get("delta_conf", 0.1)),
            sigma=data.get("sigma"),
            variant=data.get("variant", "c-lambda"),
            overrides=dict(data.get("overrides", {})),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "regimes": [regime.value for regime in self.regimes],
            "delta_conf": self.delta_conf,
            "sigma": self.sigma,
            "variant": self.variant,
            "overrides": dict(self.overrides),
        }


@dataclass
class SweepConfig:
    """Grid of run overrides; each axis is a dotted run path or a short alias."""

    grid: dict[str, list[Any]] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SweepConfig":
        return cls(grid={key: list(values) for key, values in data.get("grid", {}).items()})

    def to_dict(self) -> dict[str, Any]:
        return {"grid": {key: list(values) for key, values in self.grid.items()}}


@dataclass
class VerifyConfig:
    """Acceptance-suite selection."""

    profile: str = "full"
    criteria: list[int] | None = None

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "VerifyConfig":
        return cls(profile=data.get("profile", "full"), criteria=data.get("criteria"))

    def to_dict(self) -> dict[str, Any]:
        return {"profile": self.profile, "criteria": self.criteria}


@dataclass
class OutputConfig:
    """Report destination and formats."""

    directory: str = "reports"
    formats: list[str] = field(default_factory=lambda: ["csv", "json"])

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "OutputConfig":
        return cls(
            directory=data.get("directory", "reports"),
            formats=list(data.get("formats", ["csv", "json"])),
        )

    def to_dict(self) -> dict[str, Any]:
        return {"directory": self.directory, "formats": list(self.formats)}


@dataclass
class ExperimentConfig:
    """Complete experiment configuration."""

    kind: ExperimentKind = ExperimentKind.SINGLE_RUN
    run: RunSection = field(default_factory=RunSection)
    twin: TwinConfig = field(default_factory=TwinConfig)
    bounds: BoundsConfig = field(default_factory=BoundsConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    seeds: list[int] = field(default_factory=lambda: [0])
    jobs: int | None = None
    source: str | None = field(default=None, compare=False)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        seeds = data.get("seeds", [0])
        if isinstance(seeds, int):
            seeds = list(range(seeds))
        return cls(
            kind=ExperimentKind(data.get("kind", "single-run")),
            run=RunSection.from_dict(data.get("run", {})),
            twin=TwinConfig.from_dict(data.get("twin", {})),
            bounds=BoundsConfig.from_dict(data.get("bounds", {})),
            sweep=SweepConfig.from_dict(data.get("sweep", {})),
            verify=VerifyConfig.from_dict(data.get("verify", {})),
            output=OutputConfig.from_dict(data.get("output", {})),
            seeds=[int(seed) for seed in seeds],
            jobs=data.get("jobs"),
        )

    def to_dict(self) -> dict[str, Any]:
        """Canonical form; `jobs` and `source` are left out of it and of the config hash."""
        return {
            "kind": self.kind.value,
            "run": self.run.to_dict(),
            "twin": self.twin.to_dict(),
            "bounds": self.bounds.to_dict(),
            "sweep": self.sweep.to_dict(),
            "verify": self.verify.to_dict(),
            "output": self.output.to_dict(),
            "seeds": list(self.seeds),
        }

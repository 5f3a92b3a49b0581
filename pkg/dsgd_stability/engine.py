"""
Decentralized SGD engine.

One step gossips the node weights through P^t and takes a local stochastic gradient step at
every node, in either order. All m node updates are vectorised over the node axis, so a
trajectory is a pure function of its RunConfig.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from .dataset import PartitionedDataset
from .errors import (
    ConfigError,
    DomainExitError,
    InsufficientTraceError,
    NumericsError,
    RangeError,
    ValidationError,
)
from .losses import LossConstants, LossModel, loss_grad, project
from .models import Regime, SampleRole, StepConfig, StepKind, UpdateOrder
from .rng import index_table, sample_index
from .topology import TopologySchedule

logger = logging.getLogger(__name__)

AVERAGE_TOL = 1e-12
DOMAIN_TOL = 1e-12


@dataclass(frozen=True)
class StepSchedule:
    """Stepsizes η_t for t ≥ 1."""

    kind: StepKind
    eta: float | None = None
    mu: float | None = None
    beta: float | None = None
    gamma: float | None = None

    def __post_init__(self):
        if self.kind == StepKind.CONSTANT:
            if self.eta is None or not np.isfinite(self.eta) or self.eta < 0:
                raise ValidationError(f"constant stepsize must be finite and >= 0, got {self.eta}")
            return
        curvature = self._curvature()
        if curvature is not None and curvature <= 0:
            raise ValidationError(f"{self.kind.value} schedule needs a positive curvature constant")

    def _curvature(self) -> float | None:
        return {
            StepKind.INV_T: 1.0,
            StepKind.INV_T_MU: self.mu,
            StepKind.INV_T_BETA: self.beta,
            StepKind.INV_T_GAMMA: self.gamma,
        }.get(self.kind)

    @classmethod
    def constant(cls, eta: float) -> "StepSchedule":
        return cls(StepKind.CONSTANT, eta=float(eta))

    @classmethod
    def inv_t(cls) -> "StepSchedule":
        return cls(StepKind.INV_T)

    @classmethod
    def inv_t_mu(cls, mu: float) -> "StepSchedule":
        return cls(StepKind.INV_T_MU, mu=float(mu))

    @classmethod
    def inv_t_beta(cls, beta: float) -> "StepSchedule":
        return cls(StepKind.INV_T_BETA, beta=float(beta))

    @classmethod
    def inv_t_gamma(cls, gamma: float) -> "StepSchedule":
        return cls(StepKind.INV_T_GAMMA, gamma=float(gamma))

    @classmethod
    def from_config(cls, config: StepConfig, constants: LossConstants | None = None) -> "StepSchedule":
        """Build from config, taking unset curvature constants from the loss."""

        def pick(value: float | None, name: str) -> float | None:
            if value is not None:
                return float(value)
            if constants is None:
                return None
            return getattr(constants, name)

        kind = config.kind
        if kind == StepKind.CONSTANT:
            return cls.constant(config.eta if config.eta is not None else 0.0)
        if kind == StepKind.INV_T:
            return cls.inv_t()
        fields = {StepKind.INV_T_MU: "mu", StepKind.INV_T_BETA: "beta", StepKind.INV_T_GAMMA: "gamma"}
        name = fields[kind]
        value = pick(getattr(config, name), name)
        if value is None or value <= 0:
            raise ConfigError(f"{kind.value} schedule needs {name} > 0", path=f"run.schedule.{name}")
        return cls(kind, **{name: value})

    @property
    def is_constant(self) -> bool:
        return self.kind == StepKind.CONSTANT

    def at(self, t: int) -> float:
        """η_t for 1-based t."""
        if t < 1:
            raise RangeError(f"step {t} must be >= 1")
        if self.kind == StepKind.CONSTANT:
            return float(self.eta)  # type: ignore[arg-type]
        numerator = 1.0 if self.kind in (StepKind.INV_T, StepKind.INV_T_BETA) else 2.0
        return numerator / (self._curvature() * (t + 1))  # type: ignore[operator]

    def values(self, T: int) -> np.ndarray:
        """η_1..η_T as an array."""
        if T <= 0:
            return np.zeros(0)
        if self.kind == StepKind.CONSTANT:
            return np.full(T, float(self.eta))  # type: ignore[arg-type]
        t = np.arange(1, T + 1, dtype=float)
        numerator = 1.0 if self.kind in (StepKind.INV_T, StepKind.INV_T_BETA) else 2.0
        return numerator / (self._curvature() * (t + 1))  # type: ignore[operator]

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "eta": self.eta,
            "mu": self.mu,
            "beta": self.beta,
            "gamma": self.gamma,
        }


@dataclass(frozen=True)
class PreconditionReport:
    """Whether a stepsize schedule meets a theorem regime's cap."""

    regime: Regime
    met: bool
    rule: str
    worst_step: int | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "regime": self.regime.value,
            "met": self.met,
            "rule": self.rule,
            "worst_step": self.worst_step,
        }


def check_cap(
    schedule: StepSchedule,
    regime: Regime | str,
    beta: float,
    T: int,
    topology: TopologySchedule | None = None,
) -> PreconditionReport:
    """Check the stepsize cap of a regime over steps 1..T.

    Local regimes compare η_t against min_i P^t_ii, so they need the topology schedule.
    """
    regime = Regime(regime)
    etas = schedule.values(max(T, 1))
    if regime == Regime.NONCONVEX:
        return PreconditionReport(regime, True, "no stepsize cap")
    if regime in (Regime.LOCAL_CONVEX, Regime.LOCAL_STRONGLY_CONVEX):
        if topology is None:
            raise ValidationError(f"{regime.value} cap needs the topology schedule")
        diagonals = np.array([topology.at(t).min_diagonal for t in range(1, len(etas) + 1)])
        factor = 2.0 if regime == Regime.LOCAL_CONVEX else 1.0
        caps = factor * diagonals / beta
        rule = f"eta_t <= {factor:g} * P^t_ii / beta"
    else:
        factor = {Regime.CONVEX: 2.0, Regime.STRONGLY_CONVEX: 1.0, Regime.OPTIMIZATION: 1.0 / 3.0}[
            regime
        ]
        if regime == Regime.OPTIMIZATION and not schedule.is_constant:
            return _check_decreasing_optimization(schedule, regime)
        caps = np.full(len(etas), factor / beta)
        rule = f"eta_t <= {factor:.6g} / beta"
    violations = np.flatnonzero(etas > caps * (1.0 + 1e-12))
    if violations.size:
        return PreconditionReport(regime, False, rule, int(violations[0]) + 1)
    return PreconditionReport(regime, True, rule)


def _check_decreasing_optimization(schedule: StepSchedule, regime: Regime) -> PreconditionReport:
    met = schedule.kind == StepKind.INV_T_GAMMA
    return PreconditionReport(regime, met, "eta_t = 2 / (gamma (t + 1))")


@dataclass(frozen=True, eq=False)
class RunConfig:
    """Everything a D-SGD run depends on."""

    model: LossModel
    dataset: PartitionedDataset
    schedule: StepSchedule
    topology: TopologySchedule
    T: int
    update_order: UpdateOrder = UpdateOrder.GOSSIP_THEN_GRAD
    projected: bool = False
    master_seed: int = 0
    initial_w: np.ndarray | None = None
    stride: int = 1
    role: SampleRole = SampleRole.PRIMARY
    regime: Regime | None = None

    def __post_init__(self):
        problems = []
        if self.topology.m != self.dataset.m:
            problems.append(f"topology has {self.topology.m} nodes, dataset has {self.dataset.m}")
        if self.model.dim != self.dataset.dim:
            problems.append(f"model dim {self.model.dim} != dataset dim {self.dataset.dim}")
        if self.T < 0:
            problems.append(f"T must be >= 0, got {self.T}")
        if self.stride < 1:
            problems.append(f"stride must be >= 1, got {self.stride}")
        horizon = self.topology.horizon
        if horizon is not None and self.T > horizon:
            problems.append(f"T={self.T} exceeds topology horizon {horizon}")
        if self.projected and self.model.domain_radius is None:
            problems.append("projected run needs a domain radius")
        if self.initial_w is not None:
            initial = np.array(self.initial_w, dtype=float)
            if initial.shape != (self.model.dim,):
                problems.append(f"initial_w has shape {initial.shape}, expected ({self.model.dim},)")
            object.__setattr__(self, "initial_w", initial)
        if problems:
            raise ValidationError("invalid run config", problems)

    @property
    def m(self) -> int:
        return self.dataset.m

    def start(self) -> np.ndarray:
        """w¹ broadcast to every node."""
        initial = np.zeros(self.model.dim) if self.initial_w is None else self.initial_w
        if self.projected:
            initial = project(initial, self.model.domain_radius)  # type: ignore[arg-type]
        return np.tile(initial, (self.m, 1))

    def indices(self) -> np.ndarray:
        """Zero-based sample indices for every (step, node), shape (T, m)."""
        return index_table(self.master_seed, self.role, self.m, self.T, self.dataset.n)

    def with_dataset(self, dataset: PartitionedDataset) -> "RunConfig":
        return replace(self, dataset=dataset)


@dataclass
class EngineState:
    """Node weights w^t(i) at step t."""

    t: int
    weights: np.ndarray

    @property
    def average(self) -> np.ndarray:
        return self.weights.mean(axis=0)


@dataclass
class Trajectory:
    """Recorded D-SGD states.

    `steps[s]` is the step index of `weights[s]`; state T+1 (the output) is always recorded.
    """

    steps: np.ndarray
    weights: np.ndarray
    averages: np.ndarray
    consensus: np.ndarray
    indices: np.ndarray
    etas: np.ndarray
    stride: int
    final_weights: np.ndarray
    weighted_average: np.ndarray | None = None
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def T(self) -> int:
        return len(self.indices)

    @property
    def output(self) -> np.ndarray:
        """w^{T+1} = (1/m)Σᵢ w^{T+1}(i)."""
        return self.final_weights.mean(axis=0)

    def state(self, t: int) -> np.ndarray:
        """Node weights at recorded step t."""
        positions = np.flatnonzero(self.steps == t)
        if not positions.size:
            raise InsufficientTraceError(f"step {t} not recorded at stride {self.stride}")
        return self.weights[positions[0]]


def _gradients(config: RunConfig, weights: np.ndarray, row: np.ndarray) -> np.ndarray:
    nodes = np.arange(config.m)
    x = config.dataset.features[nodes, row]
    y = config.dataset.labels[nodes, row]
    return loss_grad(config.model, weights, x, y)


def step(
    config: RunConfig,
    state: EngineState,
    indices: np.ndarray | None = None,
) -> EngineState:
    """Advance from w^t to w^{t+1}.

    Args:
        config: validated run config
        state: weights at step t
        indices: zero-based sample index per node for this step; drawn from the keyed stream
            when omitted

    Raises:
        DomainExitError: unprojected weight left the certified ball
        NumericsError: non-finite weight, or the averaged-weight identity broke
    """
    t = state.t
    if indices is None:
        indices = np.array(
            [
                sample_index(config.master_seed, config.role, i, t, config.dataset.n) - 1
                for i in range(1, config.m + 1)
            ]
        )
    P = config.topology.at(t).entries
    eta = config.schedule.at(t)
    grads = _gradients(config, state.weights, indices)
    if config.update_order == UpdateOrder.GOSSIP_THEN_GRAD:
        weights = P @ state.weights - eta * grads
    else:
        weights = P @ (state.weights - eta * grads)

    if not np.all(np.isfinite(weights)):
        raise NumericsError(f"non-finite weights at step {t + 1}")
    radius = config.model.domain_radius
    if config.projected:
        weights = project(weights, radius)  # type: ignore[arg-type]
    else:
        expected = state.average - eta * grads.mean(axis=0)
        drift = np.abs(weights.mean(axis=0) - expected).max()
        scale = 1.0 + np.abs(state.weights).max() + eta * np.abs(grads).max()
        if drift > AVERAGE_TOL * scale:
            raise NumericsError(f"averaged-weight identity off by {drift:.3e} at step {t}")
        if radius is not None and config.model.lipschitz_is_local:
            norms = np.linalg.norm(weights, axis=1)
            if norms.max() > radius * (1.0 + DOMAIN_TOL):
                node = int(np.argmax(norms)) + 1
                raise DomainExitError(
                    f"node {node} reached |w| = {norms.max():.6g} > {radius} at step {t + 1}"
                )
    return EngineState(t + 1, weights)


def consensus_error(weights: np.ndarray) -> float:
    """[Σᵢ‖w̄ − w(i)‖²]^{1/2} over the node axis."""
    weights = np.asarray(weights, dtype=float)
    return float(np.linalg.norm(weights - weights.mean(axis=0)))


def consensus_bound(t: int, schedule: StepSchedule, lam: float, L: float, m: int) -> float:
    """2√m·L·Σ_{q=1}^{t} η_q λ^{t−q}, the bound on the consensus error of state t+1."""
    if t < 1:
        raise RangeError(f"consensus bound needs t >= 1, got {t}")
    etas = schedule.values(t)
    powers = np.power(float(lam), np.arange(t - 1, -1, -1, dtype=float))
    return float(2.0 * np.sqrt(m) * L * np.dot(etas, powers))


def observed_grad_norm(config: RunConfig, trajectory: Trajectory) -> float:
    """Largest sampled-gradient norm over the recorded states t ≤ T and all nodes.

    Set next to the analytic L in reports; projected runs can stay well below it.
    """
    norms = [
        np.linalg.norm(
            _gradients(config, trajectory.weights[position], trajectory.indices[t - 1]), axis=1
        ).max()
        for position, t in enumerate(trajectory.steps)
        if t <= trajectory.T
    ]
    return float(max(norms, default=0.0))


def run(config: RunConfig, indices: np.ndarray | None = None) -> Trajectory:
    """Execute T steps of D-SGD and record the trajectory.

    Args:
        config: validated run config
        indices: precomputed (T, m) zero-based sample table; computed from the keyed stream
            when omitted

    Returns:
        Trajectory recorded every `config.stride` steps plus the output state T+1.
    """
    if config.regime is not None and config.regime != Regime.NONCONVEX:
        try:
            report = check_cap(
                config.schedule, config.regime, config.model.constants().beta, config.T, config.topology
            )
        except ConfigError:
            report = None
        if report is not None and not report.met:
            logger.warning(
                f"Stepsize cap for {config.regime.value} violated at step {report.worst_step} "
                f"({report.rule}); running anyway"
            )

    table = config.indices() if indices is None else np.asarray(indices)
    if table.shape != (config.T, config.m):
        raise ValidationError(f"index table has shape {table.shape}, expected ({config.T}, {config.m})")

    state = EngineState(1, config.start())
    recorded_steps = []
    recorded = []
    for t in range(1, config.T + 1):
        if (t - 1) % config.stride == 0:
            recorded_steps.append(t)
            recorded.append(state.weights)
        state = step(config, state, table[t - 1])
    recorded_steps.append(config.T + 1)
    recorded.append(state.weights)

    weights = np.stack(recorded)
    averages = weights.mean(axis=1)
    consensus = np.linalg.norm(weights - averages[:, None, :], axis=(1, 2))
    etas = config.schedule.values(config.T + 1)
    trajectory = Trajectory(
        steps=np.array(recorded_steps),
        weights=weights,
        averages=averages,
        consensus=consensus,
        indices=table,
        etas=etas,
        stride=config.stride,
        final_weights=state.weights,
        metadata={
            "T": config.T,
            "m": config.m,
            "master_seed": config.master_seed,
            "update_order": config.update_order.value,
            "projected": config.projected,
        },
    )
    if config.stride == 1:
        trajectory.weighted_average = average_iterate(trajectory, config.schedule)
    logger.debug(
        f"Run finished: T={config.T} m={config.m} seed={config.master_seed} "
        f"final consensus={consensus[-1]:.3e}"
    )
    return trajectory


def average_iterate(trajectory: Trajectory, schedule: StepSchedule) -> np.ndarray:
    """w̄^{T+1} = Σ_{t=1}^{T+1} η_t w_t / Σ_{t=1}^{T+1} η_t.

    Raises:
        InsufficientTraceError: trajectory was not recorded at every step
    """
    if trajectory.stride != 1:
        raise InsufficientTraceError(
            f"average iterate needs every step, trajectory stride is {trajectory.stride}"
        )
    etas = schedule.values(len(trajectory.averages))
    total = etas.sum()
    if total == 0.0:
        return trajectory.averages.mean(axis=0)
    return (etas[:, None] * trajectory.averages).sum(axis=0) / total

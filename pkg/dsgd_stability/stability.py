"""
Coupled twin runs on neighboring datasets and the empirical stability quantities built
from them.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from .dataset import PartitionedDataset
from .engine import RunConfig, Trajectory, check_cap, run
from .errors import NumericsError, ValidationError
from .losses import LossModel, loss_eval, loss_grad
from .models import Regime, SampleRole, UpdateOrder
from .rng import derive_seed

logger = logging.getLogger(__name__)

DIRECT_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class NeighborSpec:
    """Position (r, k), 1-based, and the sample that replaces Z_{k(r)}.

    With no explicit replacement a fresh sample is drawn under a sub-seed of `seed`.
    """

    r: int
    k: int
    replacement: tuple[np.ndarray, float] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.r < 1 or self.k < 1:
            raise ValidationError(f"neighbor position (r={self.r}, k={self.k}) must be 1-based")


@dataclass
class PointwiseEps:
    """Two estimates of ε_rk and, optionally, the gradient divergence."""

    surrogate: float
    direct: float
    pool_size: int
    training_only: bool = False
    gradient: float | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "surrogate": self.surrogate,
            "direct": self.direct,
            "pool_size": self.pool_size,
            "training_only": self.training_only,
            "gradient": self.gradient,
        }


@dataclass
class StabilityTrace:
    """Divergence of the twin trajectories on S and S^{(rk)}.

    Row s of `divergence` and `node_divergence` is step s+1, for steps 1..T+1.
    """

    r: int
    k: int
    divergence: np.ndarray
    node_divergence: np.ndarray
    hits: np.ndarray
    output_w: np.ndarray
    output_v: np.ndarray
    replacement: tuple[np.ndarray, float]
    neighbor: PartitionedDataset = field(repr=False)
    eps: PointwiseEps | None = None
    provenance: dict[str, Any] = field(default_factory=dict)

    @property
    def T(self) -> int:
        return len(self.divergence) - 1

    @property
    def first_hit(self) -> int | None:
        return int(self.hits[0]) if self.hits.size else None

    def records(self) -> list[dict[str, Any]]:
        """One record per step, for CSV emission."""
        hit_set = set(self.hits.tolist())
        return [
            {
                "r": self.r,
                "k": self.k,
                "t": t,
                "d_t": float(self.divergence[t - 1]),
                "node_mean": float(self.node_divergence[t - 1].mean()),
                "hit": int(t in hit_set),
            }
            for t in range(1, self.T + 2)
        ]


@dataclass
class StabilityAggregate:
    """Means, RMS and max of an m×n matrix of ε_rk."""

    eps: np.ndarray
    delta_mean: float
    delta_sq: float
    rms: float
    eps_uniform: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "delta_mean": self.delta_mean,
            "delta_sq": self.delta_sq,
            "rms": self.rms,
            "eps_uniform": self.eps_uniform,
        }


@dataclass
class LocalTrace:
    """Per-node divergence vectors δ^t of a twin run, with the r-th component picked out."""

    r: int
    k: int
    deltas: np.ndarray
    hits: np.ndarray
    precondition_met: bool

    @property
    def component(self) -> np.ndarray:
        return self.deltas[:, self.r - 1]


@dataclass
class SweepResult:
    """Every (r, k) twin of one config."""

    traces: list[StabilityTrace]
    surrogate: np.ndarray
    direct: np.ndarray
    aggregate: StabilityAggregate
    direct_aggregate: StabilityAggregate


def make_neighbor(dataset: PartitionedDataset, spec: NeighborSpec) -> PartitionedDataset:
    """S^{(rk)}: the dataset with Z_{k(r)} replaced.

    Raises:
        RangeError: position outside the dataset
        ValidationError: replacement violates the feature bound
    """
    x, y = replacement_for(dataset, spec)
    return dataset.replace_sample(spec.r, spec.k, x, y)


def replacement_for(dataset: PartitionedDataset, spec: NeighborSpec) -> tuple[np.ndarray, float]:
    if spec.replacement is not None:
        x, y = spec.replacement
        return np.asarray(x, dtype=float), float(y)
    return dataset.draw_replacement(derive_seed(spec.seed, f"replace:{spec.r}:{spec.k}"))


def _coupled(config: RunConfig) -> RunConfig:
    return replace(config, role=SampleRole.TWIN_SHARED, stride=1)


def twin_run(config: RunConfig, spec: NeighborSpec, base: Trajectory | None = None) -> StabilityTrace:
    """Run D-SGD on S and S^{(rk)} with shared sample indices and record their divergence.

    Args:
        config: run on the original dataset; role and stride are forced to twin-shared and 1
        spec: neighbor position and replacement
        base: trajectory on S already computed under the same coupled config, reused if given
    """
    coupled = _coupled(config)
    table = coupled.indices() if base is None else base.indices
    if base is None:
        base = run(coupled, table)
    elif base.stride != 1:
        raise ValidationError("base trajectory must be recorded at stride 1")

    replacement = replacement_for(config.dataset, spec)
    neighbor = config.dataset.replace_sample(spec.r, spec.k, *replacement)
    twin = run(coupled.with_dataset(neighbor), table)
    if not np.array_equal(base.indices, twin.indices):
        raise NumericsError(f"twin runs for (r={spec.r}, k={spec.k}) drew different samples")

    node_divergence = np.linalg.norm(base.weights - twin.weights, axis=-1)
    divergence = np.linalg.norm(base.averages - twin.averages, axis=-1)
    hits = np.flatnonzero(table[:, spec.r - 1] == spec.k - 1) + 1
    logger.debug(
        f"Twin (r={spec.r}, k={spec.k}): {hits.size} hits, final divergence {divergence[-1]:.3e}"
    )
    return StabilityTrace(
        r=spec.r,
        k=spec.k,
        divergence=divergence,
        node_divergence=node_divergence,
        hits=hits,
        output_w=base.output,
        output_v=twin.output,
        replacement=replacement,
        neighbor=neighbor,
        provenance={
            "master_seed": config.master_seed,
            "T": config.T,
            "topology": config.topology.describe(),
            "schedule": config.schedule.to_dict(),
            "update_order": config.update_order.value,
            "projected": config.projected,
        },
    )


def pointwise_eps(
    trace: StabilityTrace,
    model: LossModel,
    dataset: PartitionedDataset,
    eval_pool: tuple[np.ndarray, np.ndarray] | None = None,
    gradient: bool = False,
) -> PointwiseEps:
    """Lipschitz surrogate L‖w − v‖ and the direct sup of |f(w;Z) − f(v;Z)| over a finite pool.

    The pool is every training sample, the replacement sample and `eval_pool`; without an
    evaluation pool the estimate is flagged as training-only.
    """
    L = model.constants().L
    w, v = trace.output_w, trace.output_v
    surrogate = float(L * np.linalg.norm(w - v))

    x_train, y_train = dataset.flat()
    x_new, y_new = trace.replacement
    xs = [x_train, np.asarray(x_new)[None, :]]
    ys = [y_train, np.array([y_new])]
    training_only = eval_pool is None or len(eval_pool[1]) == 0
    if training_only:
        logger.debug(f"No evaluation pool for (r={trace.r}, k={trace.k}); using training samples")
    else:
        xs.append(eval_pool[0])  # type: ignore[index]
        ys.append(eval_pool[1])  # type: ignore[index]
    x = np.concatenate(xs)
    y = np.concatenate(ys)

    direct = float(np.abs(loss_eval(model, w, x, y) - loss_eval(model, v, x, y)).max())
    if direct > surrogate + DIRECT_SLACK:
        logger.warning(
            f"Direct estimate {direct:.6g} exceeds surrogate {surrogate:.6g} at "
            f"(r={trace.r}, k={trace.k}); weights left the certified ball"
        )
    grad_gap = None
    if gradient:
        diff = loss_grad(model, w, x, y) - loss_grad(model, v, x, y)
        grad_gap = float(np.linalg.norm(diff, axis=-1).max())
    eps = PointwiseEps(
        surrogate=surrogate,
        direct=direct,
        pool_size=len(y),
        training_only=training_only,
        gradient=grad_gap,
    )
    trace.eps = eps
    return eps


def aggregate(eps: np.ndarray) -> StabilityAggregate:
    """Δ_rk, Δ²_rk, [Δ²_rk]^{1/2} and the realized uniform ε of an m×n matrix."""
    eps = np.asarray(eps, dtype=float)
    if eps.size == 0:
        raise ValidationError("cannot aggregate an empty eps matrix")
    if np.any(eps < 0) or not np.all(np.isfinite(eps)):
        raise ValidationError("eps entries must be finite and nonnegative")
    delta_sq = float(np.mean(eps**2))
    return StabilityAggregate(
        eps=eps,
        delta_mean=float(eps.mean()),
        delta_sq=delta_sq,
        rms=float(np.sqrt(delta_sq)),
        eps_uniform=float(eps.max()),
    )


def local_trace(config: RunConfig, spec: NeighborSpec, base: Trajectory | None = None) -> LocalTrace:
    """Per-node divergence vectors for the local-model theorems.

    The local convex cap η_t ≤ 2P^t_rr/β is checked against min_i P^t_ii and only warned on.
    """
    beta = config.model.constants().beta
    cap = check_cap(config.schedule, Regime.LOCAL_CONVEX, beta, config.T, config.topology)
    if not cap.met:
        logger.warning(f"Local stepsize cap violated at step {cap.worst_step} ({cap.rule})")
    trace = twin_run(config, spec, base)
    return LocalTrace(
        r=spec.r,
        k=spec.k,
        deltas=trace.node_divergence,
        hits=trace.hits,
        precondition_met=cap.met,
    )


def local_recursion_excess(local: LocalTrace, config: RunConfig, L: float) -> np.ndarray:
    """Excess of δ^{t+1} over its one-step recursion limit, one row per step t = 1..T.

    Gossip-then-grad: δ^{t+1} ≼ P^tδ^t + 2η_tL·1[hit at t]·e_r.
    Grad-inside-gossip: δ^{t+1} ≼ P^t(δ^t + 2η_tL·1[hit at t]·e_r).
    """
    etas = config.schedule.values(config.T)
    hits = np.zeros(config.T)
    hits[np.asarray(local.hits, dtype=int) - 1] = 1.0
    excess = np.empty((config.T, config.m))
    for t in range(1, config.T + 1):
        P = config.topology.at(t).entries
        kick = np.zeros(config.m)
        kick[local.r - 1] = 2.0 * etas[t - 1] * L * hits[t - 1]
        if config.update_order == UpdateOrder.GOSSIP_THEN_GRAD:
            limit = P @ local.deltas[t - 1] + kick
        else:
            limit = P @ (local.deltas[t - 1] + kick)
        excess[t - 1] = local.deltas[t] - limit
    return excess


def coupled_base(config: RunConfig) -> Trajectory:
    """Trajectory on S under the coupled config, shared by every twin of a sweep."""
    coupled = _coupled(config)
    return run(coupled, coupled.indices())


def sweep_neighbors(
    config: RunConfig,
    positions: list[tuple[int, int]] | None = None,
    replacement_seed: int = 0,
    eval_pool: int = 0,
    gradient: bool = False,
) -> SweepResult:
    """Twin runs over every (r, k) (or the given positions), reusing the trajectory on S."""
    dataset = config.dataset
    if positions is None:
        positions = [(r, k) for r in range(1, dataset.m + 1) for k in range(1, dataset.n + 1)]
    base = coupled_base(config)
    pool = dataset.draw_pool(eval_pool, derive_seed(replacement_seed, "eval-pool"))
    if pool is None:
        logger.warning("Direct eps estimates use training samples only (no evaluation pool)")
    surrogate = np.zeros((dataset.m, dataset.n))
    direct = np.zeros((dataset.m, dataset.n))
    traces = []
    for r, k in positions:
        trace = twin_run(config, NeighborSpec(r, k, seed=replacement_seed), base)
        eps = pointwise_eps(trace, config.model, dataset, pool, gradient)
        surrogate[r - 1, k - 1] = eps.surrogate
        direct[r - 1, k - 1] = eps.direct
        traces.append(trace)
    logger.info(f"Swept {len(traces)} neighbor positions (seed={config.master_seed})")
    return SweepResult(
        traces=traces,
        surrogate=surrogate,
        direct=direct,
        aggregate=aggregate(surrogate),
        direct_aggregate=aggregate(direct),
    )

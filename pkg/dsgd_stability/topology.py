"""
Gossip matrices and time-varying topology schedules.

- GossipMatrix: validated symmetric doubly stochastic matrix with its spectral quantity
- TopologySchedule: static, periodic-cycle, or explicit-list sequence of gossip matrices
- build_topology: named graphs (via networkx) weighted by Metropolis-style rules
- product_chain / chain_diagonals: P^{T:t} products and their diagonals
- shifted_strongly_convex / shifted_nonconvex: the shifted matrices of the local-model bounds
"""

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Any

import networkx as nx
import numpy as np

from .errors import ConnectivityError, RangeError, ShiftError, ValidationError
from .models import ScheduleKind, TopologyConfig, TopologyKind, TopologySpec, Weighting

logger = logging.getLogger(__name__)

ROW_SUM_TOL = 1e-12
CHAIN_TOL = 1e-10
SPECTRAL_TOL = 1e-13
CONNECTIVITY_TOL = 1e-12


def _violations(entries: np.ndarray) -> list[str]:
    problems = []
    if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
        return [f"matrix must be square, got shape {entries.shape}"]
    if not np.all(np.isfinite(entries)):
        return ["entries must be finite"]
    if not np.array_equal(entries, entries.T):
        problems.append("matrix is not symmetric")
    if entries.min() < 0.0 or entries.max() > 1.0:
        problems.append("entries must lie in [0, 1]")
    row_error = np.abs(entries.sum(axis=1) - 1.0).max()
    if row_error > ROW_SUM_TOL:
        problems.append(f"rows must sum to 1 (max deviation {row_error:.3e})")
    return problems


def spectral_quantity(entries: np.ndarray) -> float:
    """max(|λ₂|, |λ_m|) of a symmetric matrix; 0 for a single node."""
    m = entries.shape[0]
    if m == 1:
        return 0.0
    eigenvalues = np.sort(np.linalg.eigvalsh(entries))[::-1]
    lam = float(max(abs(eigenvalues[1]), abs(eigenvalues[-1])))
    return 0.0 if lam < SPECTRAL_TOL else lam


@dataclass(frozen=True, eq=False)
class GossipMatrix:
    """Symmetric doubly stochastic mixing matrix with its cached spectral quantity."""

    entries: np.ndarray
    lam: float
    kind: str = "explicit"

    @classmethod
    def from_entries(cls, entries: Any, kind: str = "explicit") -> "GossipMatrix":
        """Validate a matrix and compute λ.

        Raises:
            ValidationError: listing every violated property
            ConnectivityError: when λ ≥ 1 - 1e-12
        """
        array = np.array(entries, dtype=float)
        problems = _violations(array)
        if problems:
            raise ValidationError("invalid gossip matrix", problems)
        lam = spectral_quantity(array)
        if lam >= 1.0 - CONNECTIVITY_TOL:
            raise ConnectivityError(f"topology does not mix: lambda = {lam:.15f}")
        array.setflags(write=False)
        return cls(entries=array, lam=lam, kind=kind)

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @property
    def min_diagonal(self) -> float:
        return float(np.diag(self.entries).min())


def spectral_gap(P: GossipMatrix) -> float:
    """λ = max(|λ₂|, |λ_m|) of the validated matrix."""
    return P.lam


def _graph(kind: TopologyKind, m: int, degree: int | None, seed: int) -> nx.Graph:
    if kind == TopologyKind.COMPLETE:
        return nx.complete_graph(m)
    if kind == TopologyKind.RING:
        return nx.cycle_graph(m) if m > 2 else nx.path_graph(m)
    if kind == TopologyKind.PATH:
        return nx.path_graph(m)
    if kind == TopologyKind.TORUS2D:
        rows = max(d for d in range(1, math.isqrt(m) + 1) if m % d == 0)
        graph = nx.grid_2d_graph(rows, m // rows, periodic=True)
        graph.remove_edges_from(list(nx.selfloop_edges(graph)))
        return graph
    if kind == TopologyKind.RANDOM_REGULAR:
        if degree is None:
            raise ValidationError("random-regular topology needs a degree")
        if degree >= m or (degree * m) % 2:
            raise ValidationError(
                "invalid random-regular parameters", [f"degree={degree}, m={m}"]
            )
        return nx.random_regular_graph(degree, m, seed=seed)
    raise ValidationError(f"unknown topology kind: {kind}")


def weight_matrix(adjacency: np.ndarray, weighting: Weighting = Weighting.METROPOLIS) -> np.ndarray:
    """Doubly stochastic weights from a symmetric 0/1 adjacency matrix."""
    adjacency = (adjacency > 0).astype(float)
    np.fill_diagonal(adjacency, 0.0)
    degrees = adjacency.sum(axis=1)
    if weighting == Weighting.METROPOLIS:
        pair = 1.0 / (1.0 + np.maximum.outer(degrees, degrees))
    elif weighting == Weighting.LAZY_METROPOLIS:
        pair = 1.0 / (2.0 * np.maximum(np.maximum.outer(degrees, degrees), 1.0))
    else:
        pair = np.full_like(adjacency, 1.0 / (degrees.max() + 1.0))
    weights = np.where(adjacency > 0, pair, 0.0)
    np.fill_diagonal(weights, 1.0 - weights.sum(axis=1))
    return weights


def build_topology(
    kind: TopologyKind | str,
    m: int,
    weighting: Weighting | str = Weighting.METROPOLIS,
    degree: int | None = None,
    seed: int = 0,
    matrix: Sequence[Sequence[float]] | None = None,
) -> GossipMatrix:
    """Build a validated gossip matrix.

    Args:
        kind: complete, ring, path, torus2d, random-regular, or explicit
        m: node count (≥ 1)
        weighting: weighting rule for named graphs
        degree: degree for random-regular graphs
        seed: seed for random-regular graphs
        matrix: row-major entries for explicit matrices

    Returns:
        Validated GossipMatrix.

    Raises:
        ValidationError: bad parameters or an explicit matrix failing validation
        ConnectivityError: disconnected graph
    """
    kind = TopologyKind(kind)
    weighting = Weighting(weighting)
    if kind == TopologyKind.EXPLICIT:
        if matrix is None:
            raise ValidationError("explicit topology needs a matrix")
        gossip = GossipMatrix.from_entries(matrix, kind=kind.value)
        if gossip.m != m:
            raise ValidationError(f"explicit matrix has {gossip.m} nodes, expected {m}")
        return gossip
    if m < 1:
        raise ValidationError(f"node count must be positive, got {m}")
    if m == 1:
        return GossipMatrix.from_entries([[1.0]], kind=kind.value)

    graph = _graph(kind, m, degree, seed)
    adjacency = nx.to_numpy_array(graph, nodelist=sorted(graph.nodes()))
    gossip = GossipMatrix.from_entries(weight_matrix(adjacency, weighting), kind=kind.value)
    logger.debug(f"Built {kind.value} topology with m={m}, lambda={gossip.lam:.6f}")
    return gossip


def build_from_spec(spec: TopologySpec, m: int) -> GossipMatrix:
    return build_topology(spec.kind, m, spec.weighting, spec.degree, spec.seed, spec.matrix)


@dataclass(frozen=True, eq=False)
class TopologySchedule:
    """Sequence of gossip matrices indexed by step t ≥ 1."""

    kind: ScheduleKind
    matrices: tuple[GossipMatrix, ...]
    length: int | None = None
    _lam: float = field(init=False, repr=False, default=0.0)

    def __post_init__(self):
        if not self.matrices:
            raise ValidationError("topology schedule needs at least one matrix")
        sizes = {matrix.m for matrix in self.matrices}
        if len(sizes) != 1:
            raise ValidationError("schedule matrices disagree on node count", [str(sorted(sizes))])
        if self.kind == ScheduleKind.STATIC and len(self.matrices) != 1:
            raise ValidationError("static schedule holds exactly one matrix")
        object.__setattr__(self, "_lam", max(matrix.lam for matrix in self.matrices))

    @classmethod
    def static(cls, P: GossipMatrix) -> "TopologySchedule":
        return cls(ScheduleKind.STATIC, (P,))

    @classmethod
    def cycle(cls, matrices: Sequence[GossipMatrix]) -> "TopologySchedule":
        return cls(ScheduleKind.PERIODIC_CYCLE, tuple(matrices))

    @classmethod
    def explicit(cls, matrices: Sequence[GossipMatrix]) -> "TopologySchedule":
        return cls(ScheduleKind.EXPLICIT_LIST, tuple(matrices), length=len(matrices))

    @property
    def m(self) -> int:
        return self.matrices[0].m

    @property
    def lam(self) -> float:
        """Largest λ over the schedule; the static value for a static schedule."""
        return self._lam

    @property
    def horizon(self) -> int | None:
        if self.kind == ScheduleKind.EXPLICIT_LIST:
            return len(self.matrices)
        return self.length

    def at(self, t: int) -> GossipMatrix:
        """Gossip matrix P^t used at step t (1-based)."""
        if t < 1 or (self.horizon is not None and t > self.horizon):
            raise RangeError(f"step {t} outside schedule horizon {self.horizon}")
        if self.kind == ScheduleKind.STATIC:
            return self.matrices[0]
        return self.matrices[(t - 1) % len(self.matrices)]

    def describe(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "members": [matrix.kind for matrix in self.matrices],
            "m": self.m,
            "lambda": self.lam,
            "horizon": self.horizon,
        }


def build_schedule(config: TopologyConfig, m: int) -> TopologySchedule:
    """Build the topology schedule a run config declares."""
    matrices = [build_from_spec(spec, m) for spec in config.members]
    if config.schedule == ScheduleKind.STATIC:
        return TopologySchedule.static(matrices[0])
    if config.schedule == ScheduleKind.PERIODIC_CYCLE:
        return TopologySchedule(ScheduleKind.PERIODIC_CYCLE, tuple(matrices), config.length)
    return TopologySchedule.explicit(matrices)


def _check_range(schedule: TopologySchedule, t: int, T: int) -> None:
    horizon = schedule.horizon
    if not 1 <= t <= T or (horizon is not None and T > horizon):
        raise RangeError(f"chain indices (t={t}, T={T}) outside horizon {horizon}")


def product_chain(schedule: TopologySchedule, t: int, T: int) -> np.ndarray:
    """P^{T:t} = P^T · P^{T-1} ⋯ P^t.

    Raises:
        RangeError: indices outside 1 ≤ t ≤ T ≤ horizon
        ValidationError: product drifted from double stochasticity
    """
    _check_range(schedule, t, T)
    product = np.eye(schedule.m)
    for s in range(t, T + 1):
        product = schedule.at(s).entries @ product
    deviation = max(
        np.abs(product.sum(axis=1) - 1.0).max(), np.abs(product.sum(axis=0) - 1.0).max()
    )
    if deviation > CHAIN_TOL:
        raise ValidationError(f"product chain lost double stochasticity ({deviation:.3e})")
    return product


def shifted_strongly_convex(P: GossipMatrix, eta: float, mu: float) -> np.ndarray:
    """𝒫 = P − (ημ/2)·I; requires ημ/2 below every diagonal entry."""
    shift = eta * mu / 2.0
    if shift == 0.0:
        return P.entries.copy()
    if shift >= P.min_diagonal:
        raise ShiftError(
            "stepsize too large for this topology",
            [f"eta*mu/2 = {shift:.6g} >= min diagonal {P.min_diagonal:.6g}"],
        )
    return P.entries - shift * np.eye(P.m)


def shifted_nonconvex(P: GossipMatrix, eta: float, beta: float, r: int) -> np.ndarray:
    """P̂ = P + ηβ·E_{m/r}: every diagonal entry except the r-th (1-based) grows by ηβ."""
    if not 1 <= r <= P.m:
        raise RangeError(f"node index {r} outside 1..{P.m}")
    shift = np.full(P.m, eta * beta)
    shift[r - 1] = 0.0
    return P.entries + np.diag(shift)


Shift = Callable[[GossipMatrix, int], np.ndarray]


def chain_diagonals(
    schedule: TopologySchedule,
    T: int,
    r: int,
    shift: Shift | None = None,
) -> np.ndarray:
    """Q^{T:t}_rr for t = 1..T in one backward pass, Q^t = shift(P^t, t) or P^t."""
    if T < 1:
        return np.zeros(0)
    _check_range(schedule, 1, T)
    if not 1 <= r <= schedule.m:
        raise RangeError(f"node index {r} outside 1..{schedule.m}")
    diagonals = np.empty(T)
    product = np.eye(schedule.m)
    for t in range(T, 0, -1):
        factor = shift(schedule.at(t), t) if shift else schedule.at(t).entries
        product = product @ factor
        diagonals[t - 1] = product[r - 1, r - 1]
    return diagonals

"""
Closed-form stability, generalization and optimization bounds for decentralized SGD.

Every stability bound is evaluated two ways: the direct summation over steps 1..T (exact,
O(T) thanks to the inner-sum recurrence) and, where one exists for the stepsize schedule,
the closed form. Sums that can overflow are accumulated in the log domain.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.special import logsumexp

from .engine import StepSchedule, check_cap
from .errors import DomainError, ValidationError
from .models import Regime, StepKind
from .topology import GossipMatrix, TopologySchedule, chain_diagonals, shifted_nonconvex, shifted_strongly_convex

logger = logging.getLogger(__name__)

LOG_MAX = math.log(np.finfo(float).max)
STABILITY_REGIMES = (Regime.CONVEX, Regime.STRONGLY_CONVEX, Regime.NONCONVEX)


@dataclass(frozen=True)
class BoundParams:
    """Model constants, sizes, spectral quantity and stepsize schedule a bound depends on."""

    L: float
    beta: float
    m: int
    n: int
    T: int
    lam: float
    schedule: StepSchedule
    mu: float = 0.0
    gamma: float = 0.0
    M: float = 0.0
    sigma: float | None = None
    delta_conf: float = 0.1

    def __post_init__(self):
        problems = []
        if self.L <= 0 or self.beta <= 0:
            problems.append(f"L and beta must be positive (L={self.L}, beta={self.beta})")
        if self.mu < 0 or self.gamma < 0 or self.M < 0:
            problems.append("mu, gamma and M must be nonnegative")
        if self.m < 1 or self.n < 1 or self.T < 0:
            problems.append(f"sizes must satisfy m, n >= 1 and T >= 0 (m={self.m}, n={self.n}, T={self.T})")
        if not 0.0 <= self.lam < 1.0:
            problems.append(f"lambda must lie in [0, 1), got {self.lam}")
        if not 0.0 < self.delta_conf < 1.0:
            problems.append(f"delta_conf must lie in (0, 1), got {self.delta_conf}")
        if self.sigma is not None and self.sigma < 0:
            problems.append(f"sigma must be nonnegative, got {self.sigma}")
        if problems:
            raise ValidationError("invalid bound parameters", problems)

    @property
    def mn(self) -> int:
        return self.m * self.n

    @property
    def eta(self) -> float:
        """The constant stepsize; DomainError for decreasing schedules."""
        if not self.schedule.is_constant:
            raise DomainError(f"{self.schedule.kind.value} schedule has no single stepsize")
        return float(self.schedule.eta)  # type: ignore[arg-type]

    def etas(self, count: int | None = None) -> np.ndarray:
        return self.schedule.values(self.T if count is None else count)

    def to_dict(self) -> dict[str, Any]:
        return {
            "L": self.L,
            "beta": self.beta,
            "mu": self.mu,
            "gamma": self.gamma,
            "M": self.M,
            "sigma": self.sigma,
            "m": self.m,
            "n": self.n,
            "T": self.T,
            "lambda": self.lam,
            "schedule": self.schedule.to_dict(),
            "delta_conf": self.delta_conf,
        }


@dataclass
class BoundReport:
    """Values of one theorem's bound together with its inputs."""

    theorem: str
    values: dict[str, float]
    precondition_met: bool
    params: dict[str, Any]
    envelope: np.ndarray | None = field(default=None, repr=False)
    eps: np.ndarray | None = field(default=None, repr=False)
    log_domain: bool = False
    notes: list[str] = field(default_factory=list)

    @property
    def value(self) -> float:
        return self.values["value"]

    def to_dict(self) -> dict[str, Any]:
        return {
            "theorem": self.theorem,
            "values": dict(self.values),
            "precondition_met": self.precondition_met,
            "log_domain": self.log_domain,
            "notes": list(self.notes),
            "params": self.params,
        }


def c_lambda(lam: float) -> float:
    """C_λ = (1/(λ log(1/λ)))·(8/(e² log(1/λ)) + 2).

    Raises:
        DomainError: λ outside (0, 1)
    """
    if not 0.0 < lam < 1.0:
        raise DomainError(f"C_lambda needs 0 < lambda < 1, got {lam}")
    log_inv = math.log(1.0 / lam)
    return (8.0 / (math.e**2 * log_inv) + 2.0) / (lam * log_inv)


def c_lambda_or_one(lam: float) -> float:
    """C_λ, with λ = 0 (complete graph) taking the geometric-sum value 1."""
    return 1.0 if lam == 0.0 else c_lambda(lam)


def inner_sums(etas: np.ndarray, lam: float) -> np.ndarray:
    """S_t = Σ_{q=1}^{t−1} η_q λ^{t−q−1} for t = 1..len(etas), with 0⁰ = 1."""
    sums = np.zeros(len(etas))
    for t in range(1, len(etas)):
        sums[t] = lam * sums[t - 1] + etas[t - 1]
    return sums


def c_lambda_violations(lams: list[float], horizon: int) -> list[tuple[float, int]]:
    """(λ, t) pairs where Σ_{q=1}^{t−1} λ^{t−1−q}/(q+1) > C_λ/t, for t ≤ horizon."""
    t = np.arange(1, horizon + 1, dtype=float)
    violations = []
    for lam in lams:
        sums = inner_sums(1.0 / (t + 1.0), lam)
        bad = np.flatnonzero(sums > c_lambda(lam) / t)
        violations.extend((lam, int(index) + 1) for index in bad)
    return violations


def _log_carry(regime: Regime, params: BoundParams, etas: np.ndarray) -> np.ndarray:
    """log Π_{s=t+1}^{T} a_s for t = 1..T, where a_s is the regime's per-step factor."""
    if regime == Regime.CONVEX:
        return np.zeros(len(etas))
    if regime == Regime.STRONGLY_CONVEX:
        factors = 1.0 - etas * params.mu / 2.0
        if np.any(factors < 0):
            raise DomainError("eta_t * mu / 2 exceeds 1; contraction factor negative")
        with np.errstate(divide="ignore"):
            logs = np.log(factors)
    else:
        logs = np.log1p(params.beta * etas)
    suffix = np.cumsum(logs[::-1])[::-1]
    return np.concatenate((suffix[1:], [0.0]))


def _log_weighted_sum(log_weights: np.ndarray, coefficients: np.ndarray) -> float:
    """log Σ_t exp(log_weights_t)·coefficients_t for nonnegative coefficients."""
    mask = coefficients > 0
    if not np.any(mask):
        return -math.inf
    return float(logsumexp(log_weights[mask], b=coefficients[mask]))


def _exp(log_value: float) -> float:
    return math.exp(log_value) if log_value < LOG_MAX else math.inf


def _log_add(*terms: float) -> float:
    finite = [term for term in terms if term != -math.inf]
    return float(logsumexp(finite)) if finite else -math.inf


def _log(value: float) -> float:
    return math.log(value) if value > 0 else -math.inf


def hit_weights(table: np.ndarray, coefficients: np.ndarray, n: int) -> np.ndarray:
    """H[r, k] = Σ_t c_t·1[j_t(r) = k] for a zero-based (T, m) index table."""
    table = np.asarray(table)
    T, m = table.shape
    weights = np.zeros((m, n))
    nodes = np.broadcast_to(np.arange(m), (T, m))
    np.add.at(weights, (nodes, table), np.broadcast_to(coefficients[:T, None], (T, m)))
    return weights


@dataclass
class _Decomposition:
    """The two pieces of a stability direct sum, in the log domain.

    `log_first` is log Σ_t π_t η_t S_t and `log_second` is log Σ_t π_t η_t.
    """

    log_carry: np.ndarray
    etas: np.ndarray
    sums: np.ndarray
    log_first: float
    log_second: float


def _decompose(regime: Regime, params: BoundParams, stationary: bool = False) -> _Decomposition:
    etas = params.etas()
    if stationary:
        sums = np.full(len(etas), params.eta / (1.0 - params.lam))
    else:
        sums = inner_sums(etas, params.lam)
    log_carry = _log_carry(regime, params, etas)
    return _Decomposition(
        log_carry=log_carry,
        etas=etas,
        sums=sums,
        log_first=_log_weighted_sum(log_carry, etas * sums),
        log_second=_log_weighted_sum(log_carry, etas),
    )


def _direct_log(parts: _Decomposition, params: BoundParams, second_scale: float) -> float:
    L2 = params.L**2
    return _log_add(
        _log(4.0 * params.beta * L2) + parts.log_first,
        _log(second_scale * L2) + parts.log_second,
    )


def _trace_values(
    regime: Regime, params: BoundParams, parts: _Decomposition, table: np.ndarray
) -> tuple[dict[str, float], np.ndarray]:
    """Per-(r,k) ε matrix for a sampled index table and its aggregates."""
    T = params.T
    if table.shape != (T, params.m):
        raise ValidationError(f"index table has shape {table.shape}, expected ({T}, {params.m})")
    with np.errstate(over="ignore"):
        carry = np.exp(parts.log_carry)
        first = 4.0 * params.beta * params.L**2 * float(np.sum(carry * parts.etas * parts.sums))
        eps = first + (2.0 * params.L**2 / params.m) * hit_weights(table, carry * parts.etas, params.n)
        delta_sq = float(np.mean(eps**2))
    return {
        "delta_from_trace": float(eps.mean()),
        "delta_sq": delta_sq,
        "rms": math.sqrt(delta_sq),
        "eps_uniform": float(eps.max()),
    }, eps


def _finish(
    theorem: str,
    regime: Regime,
    params: BoundParams,
    values: dict[str, float],
    log_value: float,
    precondition_met: bool,
    table: np.ndarray | None,
    parts: _Decomposition,
    notes: list[str] | None = None,
) -> BoundReport:
    values["log_value"] = log_value
    values["value"] = _exp(log_value)
    log_domain = values["value"] == math.inf
    if log_domain:
        logger.warning(f"{theorem} bound exceeds the float range; reporting log value {log_value:.6g}")
    eps = None
    if table is not None:
        trace_values, eps = _trace_values(regime, params, parts, np.asarray(table))
        values.update(trace_values)
    return BoundReport(
        theorem=theorem,
        values=values,
        precondition_met=precondition_met,
        params=params.to_dict(),
        eps=eps,
        log_domain=log_domain,
        notes=notes or [],
    )


def convex_delta(
    params: BoundParams,
    indicator_traces: np.ndarray | None = None,
    variant: str = "c-lambda",
) -> BoundReport:
    """Δ_rk for convex losses: 4βL²Σ_t η_t S_t + (2L²/mn)Σ_t η_t.

    Closed forms: constant η gives 2L²ηT(2ηβ/(1−λ) + 1/mn); η_t = 1/(t+1) gives
    2L²(2βC_λT/(T+1) + ln(T+1)/mn), or 2L²(2βT/(T+1) + ln(T+1)/mn) with variant="unit".
    `value` is `closed_form` when the schedule has one and the direct sum `general` otherwise;
    only `general` is exact for short horizons (T=1 gives 2L²η₁/(mn)).

    Args:
        params: bound parameters
        indicator_traces: zero-based (T, m) sample table; adds the per-(r,k) ε matrix,
            Δ²_rk, its square root and the realized uniform value
        variant: "c-lambda" or "unit", the constant in front of the consensus term (η_t = 1/(t+1) only)
    """
    regime = Regime.CONVEX
    parts = _decompose(regime, params)
    log_general = _direct_log(parts, params, 2.0 / params.mn)
    values = {"general": _exp(log_general)}
    log_value = log_general
    L2, T, lam, beta = params.L**2, params.T, params.lam, params.beta
    kind = params.schedule.kind
    if kind == StepKind.CONSTANT:
        eta = params.eta
        closed = 2.0 * L2 * eta * T * (2.0 * eta * beta / (1.0 - lam) + 1.0 / params.mn)
        values["closed_form"] = closed
        values["stationary"] = _exp(_direct_log(_decompose(regime, params, True), params, 2.0 / params.mn))
        log_value = _log(closed)
    elif kind == StepKind.INV_T:
        C = 1.0 if variant == "unit" else c_lambda_or_one(lam)
        closed = 2.0 * L2 * (2.0 * beta * C * T / (T + 1) + math.log(T + 1) / params.mn)
        values["closed_form"] = closed
        log_value = _log(closed)
    cap = check_cap(params.schedule, regime, beta, T)
    return _finish(
        "convex", regime, params, values, log_value, cap.met, indicator_traces, parts, [f"variant={variant}"]
    )


def strongly_convex_delta(
    params: BoundParams, indicator_traces: np.ndarray | None = None
) -> BoundReport:
    """Δ_rk for μ-strongly convex losses.

    Theorem form 4βL²Σ_t η_tΠ_tS_t + 4L²/(mnμ), product form with second term
    (2L²/mn)Σ_t η_tΠ_t, Π_t = Π_{s>t}(1 − η_sμ/2). Constant η closes to
    (4L²/μ)(2ηβ/(1−λ) + 1/mn); η_t = 2/(μ(t+1)) to 16βL²C_λ(ln T + 1)/(Tμ²) + 4L²/(μmn).
    """
    regime = Regime.STRONGLY_CONVEX
    mu = params.mu
    if mu <= 0:
        raise DomainError("strongly convex bound needs mu > 0")
    parts = _decompose(regime, params)
    L2, T, lam, beta = params.L**2, params.T, params.lam, params.beta
    log_first = _log(4.0 * beta * L2) + parts.log_first
    log_theorem = _log_add(log_first, _log(4.0 * L2 / (params.mn * mu)))
    log_product = _direct_log(parts, params, 2.0 / params.mn)
    values = {"general": _exp(log_theorem), "general_product": _exp(log_product)}
    log_value = log_theorem
    kind = params.schedule.kind
    if kind == StepKind.CONSTANT:
        eta = params.eta
        closed = (4.0 * L2 / mu) * (2.0 * eta * beta / (1.0 - lam) + 1.0 / params.mn)
        stationary = _decompose(regime, params, True)
        values["closed_form"] = closed
        values["stationary"] = _exp(
            _log_add(_log(4.0 * beta * L2) + stationary.log_first, _log(4.0 * L2 / (params.mn * mu)))
        )
        values["residual"] = (4.0 * L2 / mu) * (2.0 * eta * beta / (1.0 - lam)) * (1.0 - eta * mu / 2.0) ** T
        log_value = _log(closed)
    elif kind == StepKind.INV_T_MU and T >= 1:
        C = c_lambda_or_one(lam)
        closed = 16.0 * beta * L2 * C * (math.log(T) + 1.0) / (T * mu**2) + 4.0 * L2 / (mu * params.mn)
        values["closed_form"] = closed
        log_value = _log(closed)
    cap = check_cap(params.schedule, regime, beta, T)
    return _finish("strongly-convex", regime, params, values, log_value, cap.met, indicator_traces, parts)


def nonconvex_delta(params: BoundParams, indicator_traces: np.ndarray | None = None) -> BoundReport:
    """Δ_rk for β-smooth nonconvex losses, with expansion factors Π_{s>t}(1 + βη_s).

    Constant η closes to 2L²(2η/(1−λ) + 1/(mnβ))(1+βη)^T; η_t = 1/(t+1) to
    4L²(T+1)^β(4C_λ + 1/(βmn)); η_t = 1/(β(t+1)) to 4L²(T+1)(2C_λ + 1/(βmn)).
    """
    regime = Regime.NONCONVEX
    parts = _decompose(regime, params)
    L2, T, lam, beta = params.L**2, params.T, params.lam, params.beta
    log_general = _direct_log(parts, params, 2.0 / params.mn)
    values = {"general": _exp(log_general)}
    log_value = log_general
    kind = params.schedule.kind
    if kind == StepKind.CONSTANT:
        eta = params.eta
        scale = 2.0 * L2 * (2.0 * eta / (1.0 - lam) + 1.0 / (params.mn * beta))
        log_value = _log(scale) + T * math.log1p(beta * eta)
        values["closed_form"] = _exp(log_value)
        values["stationary"] = _exp(_direct_log(_decompose(regime, params, True), params, 2.0 / params.mn))
        values["residual"] = scale
    elif kind == StepKind.INV_T:
        C = c_lambda_or_one(lam)
        log_value = _log(4.0 * L2 * (4.0 * C + 1.0 / (beta * params.mn))) + beta * math.log(T + 1)
        values["closed_form"] = _exp(log_value)
    elif kind == StepKind.INV_T_BETA:
        C = c_lambda_or_one(lam)
        closed = 4.0 * L2 * (T + 1) * (2.0 * C + 1.0 / (beta * params.mn))
        values["closed_form"] = closed
        log_value = _log(closed)
    return _finish("nonconvex", regime, params, values, log_value, True, indicator_traces, parts)


def _step_factors(regime: Regime, params: BoundParams, etas: np.ndarray) -> np.ndarray:
    if regime == Regime.CONVEX:
        return np.ones(len(etas))
    if regime == Regime.STRONGLY_CONVEX:
        return 1.0 - etas * params.mu / 2.0
    return 1.0 + params.beta * etas


def per_step_envelope(
    regime: Regime | str,
    params: BoundParams,
    indicator_hits: Any = (),
    injection: float | None = None,
) -> np.ndarray:
    """Weight-space envelope e_1..e_{T+1} of a stability recursion.

    e_1 = 0 and e_{t+1} = a_t e_t + 4η_tβL·S_t + (2η_tL/m)·1[t ∈ hits], where a_t is 1,
    (1 − η_tμ/2) or (1 + βη_t) for the convex, strongly convex and nonconvex regimes.

    Args:
        regime: stability regime
        params: bound parameters
        indicator_hits: 1-based steps at which node r drew index k
        injection: replaces the 0/1 hit indicator by a constant weight (1/n gives the
            expectation over sampling)
    """
    regime = Regime(regime)
    if regime not in STABILITY_REGIMES:
        raise ValidationError(f"no stability envelope for regime {regime.value}")
    etas = params.etas()
    sums = inner_sums(etas, params.lam)
    factors = _step_factors(regime, params, etas)
    if injection is None:
        hits = np.zeros(params.T)
        for t in indicator_hits:
            if not 1 <= int(t) <= params.T:
                raise ValidationError(f"hit step {t} outside 1..{params.T}")
            hits[int(t) - 1] = 1.0
    else:
        hits = np.full(params.T, injection)
    drift = 4.0 * etas * params.beta * params.L * sums + (2.0 * etas * params.L / params.m) * hits
    envelope = np.zeros(params.T + 1)
    with np.errstate(over="ignore"):
        for t in range(params.T):
            envelope[t + 1] = factors[t] * envelope[t] + drift[t]
    return envelope


def eps_from_hits(regime: Regime | str, params: BoundParams, indicator_hits: Any) -> float:
    """The theorem's ε_rk on one indicator trace: L times the terminal envelope value."""
    return float(params.L * per_step_envelope(regime, params, indicator_hits)[-1])


def avg_weight_delta(
    params: BoundParams,
    regime: Regime | str = Regime.CONVEX,
    indicator_traces: np.ndarray | None = None,
) -> BoundReport:
    """Δ_rk of the stepsize-weighted average output w̄^{T+1}.

    The general form is L·Σ_{t=1}^{T+1} η_t ē_t / Σ_{t=1}^{T+1} η_t with ē the expected
    envelope (hit weight 1/n). Closed forms: convex constant 2L²ηT(ηβ/(1−λ) + 1/mn), convex
    η_t = 1/(t+1) 4L²βC_λ + L²ln(T+2)/(mn), nonconvex constant
    (4L²/((1−λ)β) + 2L²/(mnβ²η²))(1+βη)^{T+1}/(T+1).
    """
    regime = Regime(regime)
    etas = params.etas(params.T + 1)
    total = etas.sum()
    expected = per_step_envelope(regime, params, injection=1.0 / params.n)
    general = float(params.L * np.dot(etas, expected) / total) if total > 0 else 0.0
    values = {"general": general}
    log_value = _log(general)
    L2, T, lam, beta = params.L**2, params.T, params.lam, params.beta
    kind = params.schedule.kind
    if regime == Regime.CONVEX and kind == StepKind.CONSTANT:
        eta = params.eta
        closed = 2.0 * L2 * eta * T * (eta * beta / (1.0 - lam) + 1.0 / params.mn)
        values["closed_form"] = closed
        log_value = _log(closed)
    elif regime == Regime.CONVEX and kind == StepKind.INV_T:
        closed = 4.0 * L2 * beta * c_lambda_or_one(lam) + L2 * math.log(T + 2) / params.mn
        values["closed_form"] = closed
        log_value = _log(closed)
    elif regime == Regime.NONCONVEX and kind == StepKind.CONSTANT and params.eta > 0:
        eta = params.eta
        scale = 4.0 * L2 / ((1.0 - lam) * beta) + 2.0 * L2 / (params.mn * beta**2 * eta**2)
        log_value = _log(scale) + (T + 1) * math.log1p(beta * eta) - math.log(T + 1)
        values["closed_form"] = _exp(log_value)
    met = check_cap(params.schedule, regime, beta, T).met
    parts = _decompose(regime, params)
    return _finish(f"average-{regime.value}", regime, params, values, log_value, met, indicator_traces, parts)


def delta_for(regime: Regime | str, params: BoundParams, indicator_traces: np.ndarray | None = None) -> BoundReport:
    """Dispatch to the final-iterate stability bound of a regime."""
    regime = Regime(regime)
    handlers = {
        Regime.CONVEX: convex_delta,
        Regime.STRONGLY_CONVEX: strongly_convex_delta,
        Regime.NONCONVEX: nonconvex_delta,
    }
    if regime not in handlers:
        raise ValidationError(f"no stability bound for regime {regime.value}")
    return handlers[regime](params, indicator_traces)


def generalization_bound(M: float, mn: int, delta_conf: float, delta_sq_rms: float) -> float:
    """M·√log(1/δ)/√(mn) + [Δ²]^{1/2}·log(mn)·log(1/δ) with the universal constant set to 1.

    The value is a shape, not an absolute bound.
    """
    if mn < 2:
        raise DomainError(f"generalization bound needs mn >= 2, got {mn}")
    if not 0.0 < delta_conf < 1.0:
        raise DomainError(f"delta_conf must lie in (0, 1), got {delta_conf}")
    log_inv = math.log(1.0 / delta_conf)
    return M * math.sqrt(log_inv) / math.sqrt(mn) + delta_sq_rms * math.log(mn) * log_inv


def generalization_envelope(params: BoundParams, indicator_traces: np.ndarray) -> dict[str, float]:
    """The two terms bounding [Δ²_rk]^{1/2} for constant η.

    consensus: 4√2·L²η²βT/(1−λ); sampling: (2√2·L²η/m)·√((1/n)Σ_k(Σ_t I[j_t(r)=k])²)
    averaged over nodes r.
    """
    eta = params.eta
    table = np.asarray(indicator_traces)
    counts = hit_weights(table, np.ones(len(table)), params.n)
    per_node = np.sqrt(np.mean(counts**2, axis=1))
    root2 = math.sqrt(2.0)
    L2 = params.L**2
    return {
        "consensus": 4.0 * root2 * L2 * eta**2 * params.beta * params.T / (1.0 - params.lam),
        "sampling": float(2.0 * root2 * L2 * eta / params.m * per_node.mean()),
    }


def uniform_eps_bound(params: BoundParams) -> float:
    """Expected-form uniform stability 4βL²Σ_tη_tS_t + (2L²/mn)Σ_tη_t.

    For constant η this is 2L²(2η²βT/(1−λ) + ηT/mn).
    """
    if params.schedule.is_constant:
        eta = params.eta
        return 2.0 * params.L**2 * (
            2.0 * eta**2 * params.beta * params.T / (1.0 - params.lam) + eta * params.T / params.mn
        )
    return convex_delta(params).values["general"]


def realized_uniform(params: BoundParams, indicator_traces: np.ndarray) -> float:
    """4βL²Σ_tη_tS_t + (2L²/m)·max_{r,k} Σ_t η_t I[j_t(r)=k] on one sample table."""
    etas = params.etas()
    first = 4.0 * params.beta * params.L**2 * float(np.dot(etas, inner_sums(etas, params.lam)))
    hits = hit_weights(np.asarray(indicator_traces), etas, params.n)
    return first + 2.0 * params.L**2 / params.m * float(hits.max())


def compare_pointwise_uniform(aggregate: Any) -> dict[str, Any]:
    """Ordering Δ_rk ≤ [Δ²_rk]^{1/2} ≤ realized ε_uniform of a swept aggregate."""
    return {
        "delta_mean": aggregate.delta_mean,
        "rms": aggregate.rms,
        "eps_uniform": aggregate.eps_uniform,
        "power_mean_ordered": aggregate.delta_mean <= aggregate.rms * (1.0 + 1e-12),
        "rms_below_uniform": aggregate.rms <= aggregate.eps_uniform,
    }


def _require_sigma(params: BoundParams) -> float:
    if params.sigma is None:
        raise DomainError("optimization bounds need sigma")
    return params.sigma


def opt_rhs_constant(params: BoundParams, delta_conf: float | None = None) -> BoundReport:
    """High-probability bound on (η/3)Σ_{t=1}^{T+1}‖∇R_S(w^t)‖² for constant η ≤ 1/(3β)."""
    sigma = _require_sigma(params)
    delta = params.delta_conf if delta_conf is None else delta_conf
    eta, L2, beta, lam = params.eta, params.L**2, params.beta, params.lam
    horizon = params.T + 1
    log_term = math.log(2.0 / delta)
    terms = [
        2.0 * log_term * max(eta * L2, sigma**2 / beta),
        1.5 * beta * L2 * horizon * eta**4,
        1.5 * beta * sigma**2 * horizon * eta**2,
        12.0 * L2 * beta * log_term,
        6.0 * beta**3 * L2 * horizon * eta**4 / (1.0 - lam) ** 2,
        2.0 * beta * L2 * eta**2 * horizon / (1.0 - lam),
    ]
    values = {f"term_{index}": term for index, term in enumerate(terms, start=1)}
    values["value"] = sum(terms)
    met = check_cap(params.schedule, Regime.OPTIMIZATION, beta, params.T).met
    return BoundReport("optimization-constant", values, met, params.to_dict())


def opt_error(params: BoundParams, delta_conf: float | None = None) -> float:
    """Optimization-error bound: opt_rhs_constant / ((4ηγ/3)(T+1))."""
    if params.gamma <= 0:
        raise DomainError("optimization error needs gamma > 0")
    rhs = opt_rhs_constant(params, delta_conf).value
    return rhs / (4.0 * params.eta * params.gamma / 3.0 * (params.T + 1))


def opt_rhs_decreasing(params: BoundParams, delta_conf: float | None = None) -> BoundReport:
    """Bound on Σ_{t=1}^{T} t‖∇R_S(w^t)‖² under η_t = 2/(γ(t+1))."""
    sigma = _require_sigma(params)
    if params.gamma <= 0:
        raise DomainError("decreasing optimization bound needs gamma > 0")
    delta = params.delta_conf if delta_conf is None else delta_conf
    T, L2, beta, gamma = params.T, params.L**2, params.beta, params.gamma
    C = c_lambda_or_one(params.lam)
    log_term = math.log(2.0 / delta)
    terms = [
        16.0 * T * log_term * max(L2, 4.0 * sigma**2),
        96.0 * beta * L2 * sigma**2 / gamma * math.sqrt(2.0 * T * log_term),
        384.0 * beta**3 * L2 * C**2 * T / (gamma**3 * (T + 1)),
        24.0 * beta * sigma**2 * T / gamma,
        32.0 * beta * L2 * C * T / gamma,
    ]
    values = {f"term_{index}": term for index, term in enumerate(terms, start=1)}
    values["value"] = sum(terms)
    met = params.schedule.kind == StepKind.INV_T_GAMMA
    return BoundReport("optimization-decreasing", values, met, params.to_dict())


def local_bound(
    regime: Regime | str,
    topology: TopologySchedule,
    params: BoundParams,
    r: int,
    indicator_hits: Any = None,
    indicator_traces: np.ndarray | None = None,
) -> BoundReport:
    """Local-model (node r) stability bounds from the diagonal of the product chain Q^{T:t}.

    Q^t is P^t (convex), P^t − (η_tμ/2)I (strongly convex) or P^t with every diagonal entry
    but the r-th raised by η_tβ (nonconvex). Reports the mean-over-k form
    (2L²/n)Σ_t Q^{T:t}_rr η_t and, with hits, the per-(r,k) form 2L²Σ_t Q^{T:t}_rr η_t 1[hit]
    and the weight-space divergence bound 2LΣ_t Q^{T:t}_rr η_t 1[hit]. Under gossip-then-grad a
    kick at step t is not mixed by Q^t, so `divergence_after_gossip` uses Q^{T:t+1} (Q^{T:T+1} = I).

    Raises:
        ShiftError: strongly convex shift exceeds a diagonal entry
    """
    regime = Regime(regime)
    etas = params.etas()
    if regime == Regime.CONVEX:
        shift = None
        cap_regime = Regime.LOCAL_CONVEX
    elif regime == Regime.STRONGLY_CONVEX:

        def shift(P: GossipMatrix, t: int) -> np.ndarray:
            return shifted_strongly_convex(P, etas[t - 1], params.mu)

        cap_regime = Regime.LOCAL_STRONGLY_CONVEX
    elif regime == Regime.NONCONVEX:

        def shift(P: GossipMatrix, t: int) -> np.ndarray:
            return shifted_nonconvex(P, etas[t - 1], params.beta, r)

        cap_regime = None
    else:
        raise ValidationError(f"no local bound for regime {regime.value}")

    diagonals = chain_diagonals(topology, params.T, r, shift)
    weighted = diagonals * etas
    L, L2 = params.L, params.L**2
    values = {"mean_over_k": float(2.0 * L2 / params.n * weighted.sum())}
    values["value"] = values["mean_over_k"]
    if indicator_hits is not None:
        mask = np.zeros(params.T)
        for t in indicator_hits:
            mask[int(t) - 1] = 1.0
        hit_sum = float(np.dot(weighted, mask))
        values["per_rk"] = 2.0 * L2 * hit_sum
        values["divergence"] = 2.0 * L * hit_sum
        after_gossip = np.append(diagonals[1:], 1.0) * etas
        values["divergence_after_gossip"] = 2.0 * L * float(np.dot(after_gossip, mask))
    if indicator_traces is not None:
        table = np.asarray(indicator_traces)
        per_k = np.zeros(params.n)
        np.add.at(per_k, table[:, r - 1], weighted)
        values["local_delta_sq"] = float(4.0 * L2**2 / params.n * np.sum(per_k**2))
    met = True
    if cap_regime is not None:
        met = check_cap(params.schedule, cap_regime, params.beta, params.T, topology).met
    return BoundReport(f"local-{regime.value}", values, met, {**params.to_dict(), "r": r})

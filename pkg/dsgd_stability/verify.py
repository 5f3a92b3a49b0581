"""
Acceptance suite: fifteen numbered criteria, each a named check returning pass/fail with a
deterministic detail payload.

The `full` profile runs the acceptance grid; `quick` shrinks seeds and horizons so the
suite fits in a test run. Criterion 8 reuses the sweeps of criteria 5-7 when they ran in the
same suite.
"""

import asyncio
import logging
import math
import threading
import time
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import scipy.linalg
from scipy.stats import linregress

from . import bounds
from .config import canonical_json, config_hash
from .engine import StepSchedule, consensus_bound, run
from .errors import ValidationError
from .experiment import build_dataset, build_run, gather_limited, run_experiment_async, sweep_seed
from .losses import (
    LossModel,
    empirical_grad,
    empirical_risk,
    exact_variance,
    loss_grad,
    minimizer_oracle,
)
from .models import ExperimentConfig, LossFamily, Regime, TopologyKind
from .report import Report
from .rng import index_table
from .stability import NeighborSpec, coupled_base, local_recursion_excess, local_trace
from .topology import build_topology

logger = logging.getLogger(__name__)

RECURSION_SLACK = 1e-9
REGRESSION_RTOL = 1e-10


@dataclass(frozen=True)
class Profile:
    """Grid sizes for one run of the suite."""

    name: str
    pairs: int
    lemma_horizon: int
    consensus_seeds: int
    consensus_T: int
    stability_seeds: int
    stability_grid: tuple[tuple[int, int], ...]
    convex_T: int
    strong_T: int
    nonconvex_T: int
    regression_draws: int
    opt_seeds: int
    decreasing_Ts: tuple[int, ...]
    decreasing_seeds: int
    scaling_seeds: int
    local_seeds: int
    local_T: int
    variance_points: int
    variance_draws: int


PROFILES = {
    "full": Profile(
        name="full",
        pairs=10_000,
        lemma_horizon=10_000,
        consensus_seeds=20,
        consensus_T=500,
        stability_seeds=10,
        stability_grid=((2, 8), (2, 16), (4, 8), (4, 16)),
        convex_T=200,
        strong_T=200,
        nonconvex_T=100,
        regression_draws=100,
        opt_seeds=100,
        decreasing_Ts=(64, 128, 256, 512, 1024),
        decreasing_seeds=20,
        scaling_seeds=10,
        local_seeds=10,
        local_T=200,
        variance_points=10,
        variance_draws=100_000,
    ),
    "quick": Profile(
        name="quick",
        pairs=1_000,
        lemma_horizon=1_000,
        consensus_seeds=3,
        consensus_T=100,
        stability_seeds=2,
        stability_grid=((2, 4),),
        convex_T=40,
        strong_T=40,
        nonconvex_T=30,
        regression_draws=20,
        opt_seeds=10,
        decreasing_Ts=(64, 128, 256, 512),
        decreasing_seeds=8,
        scaling_seeds=3,
        local_seeds=2,
        local_T=40,
        variance_points=3,
        variance_draws=20_000,
    ),
}


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: dict[str, Any]
    seconds: float = 0.0

    def to_record(self) -> dict[str, Any]:
        return {
            "criterion": self.number,
            "name": self.name,
            "passed": self.passed,
            "detail": canonical_json(self.detail),
        }


@dataclass
class SuiteContext:
    """Profile plus results shared between criteria of one suite run."""

    profile: Profile
    sweeps: dict[int, list[dict[str, Any]]] = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)


def _run_section(
    family: str,
    *,
    m: int,
    n: int,
    T: int,
    eta: float | dict[str, Any],
    mu: float = 0.0,
    radius: float = 2.0,
    projected: bool = False,
    topology: dict[str, Any] | None = None,
    update_order: str = "gossip-then-grad",
) -> dict[str, Any]:
    schedule = eta if isinstance(eta, dict) else {"kind": "constant", "eta": eta}
    return {
        "loss": {"family": family, "mu": mu, "domain_radius": radius, "feature_bound": 1.0},
        "data": {"m": m, "n": n, "dim": 5, "seed": 7},
        "topology": topology or {"kind": "ring"},
        "schedule": schedule,
        "T": T,
        "projected": projected,
        "update_order": update_order,
    }


def check_topology(ctx: SuiteContext) -> tuple[bool, dict[str, Any]]:
    """Complete graphs have λ = 0 exactly; ring(4) has λ = 1/3 against an eigvals oracle."""
    complete = {m: build_topology(TopologyKind.COMPLETE, m).lam for m in (2, 4, 8)}
    ring = build_topology(TopologyKind.RING, 4)
    spectrum = np.sort(np.abs(scipy.linalg.eigvals(ring.entries)))[::-1]
    oracle = float(spectrum[1])
    passed = all(value == 0.0 for value in complete.values()) and (
        abs(ring.lam - 1.0 / 3.0) <= 1e-12 and abs(oracle - 1.0 / 3.0) <= 1e-12
    )
    return passed, {"complete": {str(m): v for m, v in complete.items()}, "ring4": ring.lam, "oracle": oracle}


def _gradient_map_excess(model: LossModel, eta: float, count: int, rng: np.random.Generator) -> np.ndarray:
    """‖G(w) − G(v)‖ − ‖w − v‖ for random pairs in the domain ball and random samples."""
    radius = model.domain_radius or 1.0

    def ball(size: int) -> np.ndarray:
        points = rng.standard_normal((size, model.dim))
        points /= np.linalg.norm(points, axis=1, keepdims=True)
        return points * radius * rng.random((size, 1)) ** (1.0 / model.dim)

    w, v = ball(count), ball(count)
    x = rng.standard_normal((count, model.dim))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    if model.family == LossFamily.QUADRATIC:
        y = rng.uniform(-1.0, 1.0, count)
    else:
        y = rng.choice([-1.0, 1.0], count)
    gw = w - eta * loss_grad(model, w, x, y)
    gv = v - eta * loss_grad(model, v, x, y)
    return np.linalg.norm(gw - gv, axis=1) - np.linalg.norm(w - v, axis=1)


def check_nonexpansive(ctx: SuiteContext) -> tuple[bool, dict[str, Any]]:
    """Gradient steps are non-expansive for η ≤ 2/β and contract by (1 − ημ/2) for η ≤ 1/β."""
    rng = np.random.default_rng(2024)
    detail: dict[str, Any] = {}
    passed = True
    families = [
        LossModel(LossFamily.LOGISTIC, 5, 2.0, 1.0),
        LossModel(LossFamily.RIDGE_LOGISTIC, 5, 2.0, 1.0, mu=0.1),
        LossModel(LossFamily.QUADRATIC, 5, 2.0, 1.0, mu=1.0),
    ]
    for model in families:
        eta = 2.0 / model.constants().beta
        excess = _gradient_map_excess(model, eta, ctx.profile.pairs, rng)
        violations = int(np.count_nonzero(excess > RECURSION_SLACK))
        detail[model.family.value] = violations
        passed &= violations == 0

    model = families[1]
    eta = 1.0 / model.constants().beta
    radius = model.domain_radius
    w = rng.uniform(-1, 1, (ctx.profile.pairs, model.dim)) * radius / math.sqrt(model.dim)
    v = rng.uniform(-1, 1, (ctx.profile.pairs, model.dim)) * radius / math.sqrt(model.dim)
    x = rng.standard_normal((ctx.profile.pairs, model.dim))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    y = rng.choice([-1.0, 1.0], ctx.profile.pairs)
    gap = np.linalg.norm((w - eta * loss_grad(model, w, x, y)) - (v - eta * loss_grad(model, v, x, y)), axis=1)
    limit = (1.0 - eta * model.mu / 2.0) * np.linalg.norm(w - v, axis=1) + RECURSION_SLACK
    contraction = int(np.count_nonzero(gap > limit))
    detail["ridge-logistic-contraction"] = contraction
    return passed and contraction == 0, detail


def check_c_lambda(ctx: SuiteContext) -> tuple[bool, dict[str, Any]]:
    lams = [round(0.1 * i, 1) for i in range(1, 10)]
    violations = bounds.c_lambda_violations(lams, ctx.profile.lemma_horizon)
    return not violations, {"violations": len(violations), "horizon": ctx.profile.lemma_horizon}


def check_consensus(ctx: SuiteContext) -> tuple[bool, dict[str, Any]]:
    """Measured consensus error of state t+1 stays below 2√m·L·Σ_q η_q λ^{t−q}."""
    profile = ctx.profile
    detail: dict[str, Any] = {}
    passed = True
    for kind in ("ring", "complete"):
        section = _run_section("logistic", m=4, n=16, T=profile.consensus_T, eta=0.1, topology={"kind": kind})
        config = ExperimentConfig.from_dict({"run": section})
        dataset = build_dataset(config.run)
        violations = 0
        for seed in range(profile.consensus_seeds):
            run_config = build_run(config.run, seed, dataset)
            trajectory = run(run_config)
            L = run_config.model.constants().L
            lam = run_config.topology.lam
            for t in range(1, run_config.T + 1):
                bound = consensus_bound(t, run_config.schedule, lam, L, run_config.m)
                violations += int(trajectory.consensus[t] > bound + 1e-12)
        detail[kind] = violations
        passed &= violations == 0
    return passed, detail


STABILITY_CASES = {
    5: {"family": "logistic", "eta": 0.1, "horizon": "convex_T"},
    6: {"family": "ridge-logistic", "mu": 0.1, "eta": 0.5, "projected": True, "horizon": "strong_T"},
    7: {"family": "saturating-nonconvex", "eta": 0.05, "horizon": "nonconvex_T"},
}


def _stability_sweeps(ctx: SuiteContext, number: int) -> list[dict[str, Any]]:
    """Full (r, k) sweeps over the profile's (m, n) grid and seeds for criterion 5, 6 or 7."""
    with ctx.lock:
        if number in ctx.sweeps:
            return ctx.sweeps[number]
    case = STABILITY_CASES[number]
    profile = ctx.profile
    summaries = []
    for m, n in profile.stability_grid:
        section = _run_section(
            case["family"],
            m=m,
            n=n,
            T=getattr(profile, case["horizon"]),
            eta=case["eta"],
            mu=case.get("mu", 0.0),
            projected=case.get("projected", False),
        )
        config = ExperimentConfig.from_dict(
            {
                "kind": "twin",
                "run": section,
                "twin": {"full_sweep": True, "eval_pool": 32},
                "seeds": list(range(profile.stability_seeds)),
            }
        )
        dataset = build_dataset(config.run)
        for seed in config.seeds:
            _, summary = sweep_seed(config, seed, dataset)
            summaries.append({"m": m, "n": n, "seed": seed, **summary})
    with ctx.lock:
        ctx.sweeps[number] = summaries
    return summaries


def _envelope_detail(summaries: list[dict[str, Any]]) -> tuple[bool, dict[str, Any]]:
    violations = sum(summary["envelope_violations"] for summary in summaries)
    return violations == 0, {"sweeps": len(summaries), "envelope_violations": violations}


def check_convex_recursion(ctx: SuiteContext) -> tuple[bool, dict[str, Any]]:
    return _envelope_detail(_stability_sweeps(ctx, 5))


def check_strongly_convex(ctx: SuiteContext) -> tuple[bool, dict[str, Any]]:
    """Contraction envelope, measured Δ below the closed form, closed form free of T."""
    summaries = _stability_sweeps(ctx, 6)
    passed, detail = _envelope_detail(summaries)
    above = 0
    for summary in summaries:
        lam = build_topology(TopologyKind.RING, summary["m"]).lam
        params = _strong_params(summary["m"], summary["n"], ctx.profile.strong_T, lam)
        closed = bounds.strongly_convex_delta(params).values["closed_form"]
        above += int(summary["delta_mean"] > closed + RECURSION_SLACK)
    short = _strong_closed_form(200)
    long = _strong_closed_form(2000)
    detail.update({"above_closed_form": above, "closed_T200": short, "closed_T2000": long})
    return passed and above == 0 and short == long, detail


def _strong_params(m: int, n: int, T: int, lam: float) -> bounds.BoundParams:
    """Bound inputs for the criterion-6 sweeps, with L, β and μ taken from the loss model."""
    case = STABILITY_CASES[6]
    model = LossModel(LossFamily(case["family"]), 5, domain_radius=2.0, feature_bound=1.0, mu=case["mu"])
    c = model.constants()
    return bounds.BoundParams(
        L=c.L, beta=c.beta, mu=c.mu, m=m, n=n, T=T, lam=lam, schedule=StepSchedule.constant(case["eta"])
    )


def _strong_closed_form(T: int) -> float:
    params = _strong_params(4, 16, T, build_topology(TopologyKind.RING, 4).lam)
    return bounds.strongly_convex_delta(params).values["closed_form"]


def check_nonconvex_recursion(ctx: SuiteContext) -> tuple[bool, dict[str, Any]]:
    return _envelope_detail(_stability_sweeps(ctx, 7))


def check_ordering(ctx: SuiteContext) -> tuple[bool, dict[str, Any]]:
    """RMS ≤ realized uniform ε and direct ≤ surrogate on every sweep of criteria 5-7."""
    unordered = 0
    direct = 0
    total = 0
    for number in STABILITY_CASES:
        for summary in _stability_sweeps(ctx, number):
            total += 1
            unordered += int(not summary["ordering"]["rms_below_uniform"])
            direct += summary["direct_above_surrogate"]
    return unordered == 0 and direct == 0, {
        "sweeps": total,
        "rms_above_uniform": unordered,
        "direct_above_surrogate": direct,
    }


def _random_params(rng: np.random.Generator, schedule: StepSchedule | None = None, **fixed: Any) -> bounds.BoundParams:
    beta = fixed.pop("beta", float(rng.uniform(0.5, 2.0)))
    eta = float(rng.uniform(0.01, 1.0)) / beta
    values = {
        "L": float(rng.uniform(0.5, 2.0)),
        "beta": beta,
        "m": int(rng.integers(1, 9)),
        "n": int(rng.integers(1, 51)),
        "T": int(rng.integers(1, 301)),
        "lam": float(rng.choice([0.0, rng.uniform(0.0, 0.95)])),
        "schedule": schedule or StepSchedule.constant(eta),
    }
    values.update(fixed)
    return bounds.BoundParams(**values)


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= REGRESSION_RTOL * max(abs(a), abs(b), 1e-300)


def _dominates(closed: float, general: float) -> bool:
    return closed >= general * (1.0 - 1e-12)


def check_regression(ctx: SuiteContext) -> tuple[bool, dict[str, Any]]:
    """Closed forms against direct sums, plus the three spot values."""
    rng = np.random.default_rng(99)
    failures: dict[str, int] = {}

    def tally(name: str, ok: bool) -> None:
        failures[name] = failures.get(name, 0) + int(not ok)

    for _ in range(ctx.profile.regression_draws):
        params = _random_params(rng)
        convex = bounds.convex_delta(params).values
        tally("convex", _close(convex["closed_form"], convex["stationary"]))
        tally("convex-dominates", _dominates(convex["closed_form"], convex["general"]))
        average = bounds.avg_weight_delta(params).values
        tally("average-convex", _dominates(average["closed_form"], average["general"]))

        strong = _random_params(rng)
        strong = bounds.BoundParams(**{**_fields(strong), "mu": float(rng.uniform(0.01, 1.0)) * strong.beta})
        values = bounds.strongly_convex_delta(strong).values
        tally("strongly-convex", _close(values["closed_form"], values["stationary"] + values["residual"]))
        tally("strongly-convex-dominates", _dominates(values["closed_form"], values["general"]))

        nonconvex = _random_params(rng)
        values = bounds.nonconvex_delta(nonconvex).values
        tally("nonconvex", _close(values["closed_form"], values["stationary"] + values["residual"]))
        tally("nonconvex-dominates", _dominates(values["closed_form"], values["general"]))
        if nonconvex.eta <= 1.0:
            values = bounds.avg_weight_delta(nonconvex, Regime.NONCONVEX).values
            tally("average-nonconvex", _dominates(values["closed_form"], values["general"]))

        decreasing = _random_params(rng, StepSchedule.inv_t())
        values = bounds.convex_delta(decreasing).values
        tally("convex-inv-t", _dominates(values["closed_form"], values["general"]))
        values = bounds.avg_weight_delta(decreasing).values
        tally("average-inv-t", _dominates(values["closed_form"], values["general"]))
        capped = bounds.BoundParams(**{**_fields(decreasing), "beta": min(decreasing.beta, 4.0)})
        values = bounds.nonconvex_delta(capped).values
        tally("nonconvex-inv-t", _dominates(values["closed_form"], values["general"]))

        mu = float(rng.uniform(0.05, 1.0))
        values = bounds.strongly_convex_delta(
            _random_params(rng, StepSchedule.inv_t_mu(mu), mu=mu)
        ).values
        tally("strongly-convex-inv-t-mu", _dominates(values["closed_form"], values["general"]))
        beta = float(rng.uniform(1.0, 2.0))
        values = bounds.nonconvex_delta(_random_params(rng, StepSchedule.inv_t_beta(beta), beta=beta)).values
        tally("nonconvex-inv-t-beta", _dominates(values["closed_form"], values["general"]))

    spots = _spot_values()
    spot_ok = (
        abs(spots["convex"] - 6.2) <= 1e-9
        and abs(spots["strongly-convex"] - 60.4) <= 1e-9
        and abs(spots["nonconvex"] - 1.6081) <= 1e-4
    )
    passed = spot_ok and not any(failures.values())
    return passed, {"failures": failures, "spots": spots}


def _fields(params: bounds.BoundParams) -> dict[str, Any]:
    return {
        "L": params.L,
        "beta": params.beta,
        "mu": params.mu,
        "gamma": params.gamma,
        "M": params.M,
        "sigma": params.sigma,
        "m": params.m,
        "n": params.n,
        "T": params.T,
        "lam": params.lam,
        "schedule": params.schedule,
        "delta_conf": params.delta_conf,
    }


def _spot_values() -> dict[str, float]:
    common = {"L": 1.0, "beta": 1.0, "m": 4, "n": 25, "lam": 1.0 / 3.0}
    convex = bounds.BoundParams(**common, T=100, schedule=StepSchedule.constant(0.1))
    strong = bounds.BoundParams(**common, T=100, mu=0.1, schedule=StepSchedule.constant(0.5))
    nonconvex = bounds.BoundParams(**common, T=10, schedule=StepSchedule.constant(0.1))
    return {
        "convex": bounds.convex_delta(convex).value,
        "strongly-convex": bounds.strongly_convex_delta(strong).value,
        "nonconvex": bounds.nonconvex_delta(nonconvex).value,
    }


def check_optimization(ctx: SuiteContext) -> tuple[bool, dict[str, Any]]:
    """(η/3)Σ‖∇R_S(w^t)‖² ≤ opt_rhs_constant in at least 90% of seeded runs."""
    mu = 0.1
    beta = 0.25 + mu
    eta = 1.0 / (3.0 * beta)
    section = _run_section("ridge-logistic", m=4, n=16, T=99, eta=eta, mu=mu, radius=1.0 / mu)
    config = ExperimentConfig.from_dict({"run": section})
    dataset = build_dataset(config.run)
    covered = 0
    slack = []
    seeds = ctx.profile.opt_seeds
    for seed in range(seeds):
        run_config = build_run(config.run, seed, dataset)
        trajectory = run(run_config)
        model = run_config.model
        grads = np.array([empirical_grad(model, dataset, w) for w in trajectory.averages])
        measured = eta / 3.0 * float(np.sum(grads**2))
        sigma = math.sqrt(max(exact_variance(model, dataset, w) for w in trajectory.averages))
        constants = model.constants()
        params = bounds.BoundParams(
            L=constants.L, beta=constants.beta, gamma=constants.gamma, sigma=sigma, m=4, n=16, T=99,
            lam=run_config.topology.lam, schedule=run_config.schedule, delta_conf=0.1,
        )
        rhs = bounds.opt_rhs_constant(params).value
        covered += int(measured <= rhs)
        slack.append(rhs - measured)
    needed = math.ceil(0.9 * seeds)
    return covered >= needed, {"covered": covered, "seeds": seeds, "min_slack": float(min(slack))}


def check_decreasing_rate(ctx: SuiteContext) -> tuple[bool, dict[str, Any]]:
    """Median optimization error under η_t = 2/(γ(t+1)) decays with log-log slope ≤ −0.8."""
    mu = 1.0
    gamma = mu / 2.0
    schedule = {"kind": "inv-t-gamma", "gamma": gamma}
    medians = []
    for T in ctx.profile.decreasing_Ts:
        section = _run_section(
            "ridge-logistic", m=4, n=16, T=T, eta=schedule, mu=mu, radius=10.0, projected=True
        )
        config = ExperimentConfig.from_dict({"run": section})
        dataset = build_dataset(config.run)
        model = build_run(config.run, 0, dataset).model
        optimum = minimizer_oracle(model, dataset).risk
        errors = []
        for seed in range(ctx.profile.decreasing_seeds):
            trajectory = run(build_run(config.run, seed, dataset))
            errors.append(empirical_risk(model, dataset, trajectory.output) - optimum)
        medians.append(float(np.median(errors)))
    fit = linregress(np.log(ctx.profile.decreasing_Ts), np.log(np.maximum(medians, 1e-300)))
    return bool(fit.slope <= -0.8), {"slope": float(fit.slope), "medians": medians}


def check_sampling_scaling(ctx: SuiteContext) -> tuple[bool, dict[str, Any]]:
    """Sampling term of the generalization envelope scales like (mn)^{-1/2} at η = 1/√T, T = mn."""
    sizes = []
    values = []
    for m in (2, 4, 8):
        for n in (16, 32, 64):
            T = m * n
            params = bounds.BoundParams(
                L=1.0, beta=0.25, m=m, n=n, T=T, lam=0.0, schedule=StepSchedule.constant(1.0 / math.sqrt(T))
            )
            terms = [
                bounds.generalization_envelope(params, index_table(seed, "twin-shared", m, T, n))["sampling"]
                for seed in range(ctx.profile.scaling_seeds)
            ]
            sizes.append(m * n)
            values.append(float(np.mean(terms)))
    fit = linregress(np.log(sizes), np.log(values))
    return bool(abs(fit.slope + 0.5) <= 0.1), {"slope": float(fit.slope)}


def check_local(ctx: SuiteContext) -> tuple[bool, dict[str, Any]]:
    """Node r's divergence follows δ^{t+1} ≼ P^tδ^t + 2η_tL·1[hit]·e_r at every step and stays
    below 2LΣ_t P^{T:t+1}_rr η_t 1[hit] at the end, on an alternating gossip-then-grad schedule."""
    topology = {"schedule": "periodic-cycle", "members": [{"kind": "ring"}, {"kind": "complete"}]}
    section = _run_section("logistic", m=4, n=8, T=ctx.profile.local_T, eta=0.1, topology=topology)
    config = ExperimentConfig.from_dict({"run": section})
    dataset = build_dataset(config.run)
    bound_violations = 0
    recursion_violations = 0
    positions = 0
    for seed in range(ctx.profile.local_seeds):
        run_config = build_run(config.run, seed, dataset)
        constants = run_config.model.constants()
        base = coupled_base(run_config)
        params = bounds.BoundParams(
            L=constants.L, beta=constants.beta, m=4, n=8, T=run_config.T,
            lam=run_config.topology.lam, schedule=run_config.schedule,
        )
        for r in range(1, 5):
            for k in range(1, 9):
                local = local_trace(run_config, NeighborSpec(r, k, seed=seed), base)
                report = bounds.local_bound(Regime.CONVEX, run_config.topology, params, r, local.hits)
                bound_violations += int(
                    local.component[-1] > report.values["divergence_after_gossip"] + RECURSION_SLACK
                )
                excess = local_recursion_excess(local, run_config, constants.L)
                recursion_violations += int(np.count_nonzero(excess > RECURSION_SLACK))
                positions += 1
    passed = bound_violations == 0 and recursion_violations == 0
    return passed, {
        "positions": positions,
        "bound_violations": bound_violations,
        "recursion_violations": recursion_violations,
    }


DETERMINISM_CRITERIA = (1, 3, 5, 9, 13, 15)


def check_determinism(ctx: SuiteContext) -> tuple[bool, dict[str, Any]]:
    """Identical criterion payloads and sweep reports across reruns and worker counts."""
    suites = [
        asyncio.run(run_suite(ctx.profile.name, list(DETERMINISM_CRITERIA), jobs))
        for jobs in (1, 8, 1)
    ]
    records = [canonical_json([result.to_record() for result in results]) for results in suites]
    sweep = ExperimentConfig.from_dict(
        {
            "kind": "sweep",
            "run": _run_section("logistic", m=2, n=4, T=20, eta=0.1, topology={"kind": "complete"}),
            "twin": {"eval_pool": 8},
            "sweep": {"grid": {"m": [2, 3], "eta": [0.05, 0.1]}},
            "seeds": [0, 1],
        }
    )
    payloads = []
    cells = 0
    for jobs in (1, 8, 1):
        reports = asyncio.run(run_experiment_async(sweep, jobs))
        cells = len(reports)
        payloads.append([report.payload() for report in reports])
    across_jobs = records[0] == records[1] and payloads[0] == payloads[1]
    rerun = records[0] == records[2] and payloads[0] == payloads[2]
    return across_jobs and rerun, {
        "across_jobs": across_jobs,
        "rerun": rerun,
        "criteria": list(DETERMINISM_CRITERIA),
        "cells": cells,
    }


def check_variance(ctx: SuiteContext) -> tuple[bool, dict[str, Any]]:
    """exact_variance within three standard errors of a Monte Carlo estimate."""
    section = _run_section("logistic", m=4, n=16, T=0, eta=0.1)
    config = ExperimentConfig.from_dict({"run": section})
    dataset = build_dataset(config.run)
    model = build_run(config.run, 0, dataset).model
    rng = np.random.default_rng(15)
    misses = 0
    z_scores = []
    for _ in range(ctx.profile.variance_points):
        w = rng.uniform(-1.0, 1.0, model.dim)
        grads = loss_grad(model, w, dataset.features, dataset.labels)
        full = grads.reshape(-1, model.dim).mean(axis=0)
        picks = rng.integers(dataset.n, size=(ctx.profile.variance_draws, dataset.m))
        sampled = grads[np.arange(dataset.m), picks].mean(axis=1) - full
        squares = np.sum(sampled**2, axis=1)
        estimate = squares.mean()
        error = squares.std(ddof=1) / math.sqrt(len(squares))
        z = abs(estimate - exact_variance(model, dataset, w)) / error
        z_scores.append(float(z))
        misses += int(z > 3.0)
    return misses == 0, {"misses": misses, "max_z": max(z_scores)}


Check = Callable[[SuiteContext], tuple[bool, dict[str, Any]]]

CRITERIA: dict[int, tuple[str, Check]] = {
    1: ("topology-spectral", check_topology),
    2: ("non-expansive-steps", check_nonexpansive),
    3: ("c-lambda-lemma", check_c_lambda),
    4: ("consensus-lemma", check_consensus),
    5: ("convex-recursion", check_convex_recursion),
    6: ("strongly-convex-recursion", check_strongly_convex),
    7: ("nonconvex-recursion", check_nonconvex_recursion),
    8: ("pointwise-uniform-ordering", check_ordering),
    9: ("closed-form-regression", check_regression),
    10: ("optimization-high-probability", check_optimization),
    11: ("decreasing-step-rate", check_decreasing_rate),
    12: ("sampling-term-scaling", check_sampling_scaling),
    13: ("local-model", check_local),
    14: ("determinism", check_determinism),
    15: ("variance-estimator", check_variance),
}

DEPENDENT = (8, 14)


def run_criterion(number: int, ctx: SuiteContext) -> CriterionResult:
    name, check = CRITERIA[number]
    started = time.perf_counter()
    passed, detail = check(ctx)
    seconds = time.perf_counter() - started
    logger.info(f"Criterion {number} ({name}): {'pass' if passed else 'FAIL'} in {seconds:.1f}s")
    return CriterionResult(number, name, bool(passed), detail, seconds)


async def run_suite(
    profile: str = "full",
    criteria: list[int] | None = None,
    jobs: int | None = None,
) -> list[CriterionResult]:
    """Run the selected criteria (all by default), independent ones concurrently.

    Returns:
        Results ordered by criterion number.
    """
    if profile not in PROFILES:
        raise ValidationError(f"unknown verify profile {profile!r}", [", ".join(PROFILES)])
    selected = sorted(set(criteria or CRITERIA))
    unknown = [number for number in selected if number not in CRITERIA]
    if unknown:
        raise ValidationError("unknown criteria", [str(number) for number in unknown])
    ctx = SuiteContext(PROFILES[profile])
    first = [number for number in selected if number not in DEPENDENT]
    second = [number for number in selected if number in DEPENDENT]
    results = await gather_limited(lambda number: run_criterion(number, ctx), first, jobs)
    results += await gather_limited(lambda number: run_criterion(number, ctx), second, jobs)
    return sorted(results, key=lambda result: result.number)


def suite_report(config: ExperimentConfig, results: list[CriterionResult]) -> Report:
    report = Report(kind="verify-suite", config=config.to_dict(), config_hash=config_hash(config))
    report.records = [result.to_record() for result in results]
    report.metrics = {
        "profile": config.verify.profile,
        "passed": [result.number for result in results if result.passed],
        "failed": [result.number for result in results if not result.passed],
    }
    return report

"""
Experiment driver: turns an ExperimentConfig into runs, twin sweeps, bound evaluations
and acceptance checks, and packages the results as Reports.

Independent units of work (seeds, neighbor positions, sweep cells) are fanned out on worker
threads under a semaphore of `jobs` slots; results are always collected in submission
order, so report payloads do not depend on `jobs`.
"""

import asyncio
import itertools
import json
import logging
import os
import time
from collections.abc import Awaitable, Callable, Iterable
from typing import Any, TypeVar

import numpy as np

from . import bounds
from .config import apply_overrides, check_regime, config_hash
from .dataset import PartitionedDataset, generate_synthetic, ingest_libsvm
from .engine import RunConfig, StepSchedule, check_cap, consensus_bound, observed_grad_norm, run
from .errors import ConfigError, LabError
from .losses import LossModel, empirical_risk
from .models import (
    ExperimentConfig,
    ExperimentKind,
    LabelRule,
    LossFamily,
    Regime,
    RunSection,
    SampleRole,
)
from .report import Report
from .rng import derive_seed, index_table
from .stability import (
    NeighborSpec,
    StabilityTrace,
    aggregate,
    coupled_base,
    pointwise_eps,
    twin_run,
)
from .topology import build_schedule

logger = logging.getLogger(__name__)

T_ = TypeVar("T_")
ENVELOPE_SLACK = 1e-9

SWEEP_ALIASES = {
    "m": "run.data.m",
    "n": "run.data.n",
    "dim": "run.data.dim",
    "T": "run.T",
    "eta": "run.schedule.eta",
    "mu": "run.loss.mu",
    "topology": "run.topology.kind",
    "weighting": "run.topology.weighting",
    "family": "run.loss.family",
    "seed": "seeds",
}
TOPOLOGY_MEMBER_FIELDS = ("run.topology.kind", "run.topology.weighting", "run.topology.degree")


def default_jobs() -> int:
    return os.cpu_count() or 1


async def gather_limited(
    func: Callable[[T_], Any],
    items: Iterable[T_],
    jobs: int | None = None,
) -> list[Any]:
    """Run `func(item)` on worker threads with at most `jobs` in flight.

    Results come back in submission order. Every failure is logged; the first one is
    re-raised once all units have finished.
    """
    semaphore = asyncio.Semaphore(jobs or default_jobs())

    async def run_with_semaphore(item: T_) -> Any:
        async with semaphore:
            return await asyncio.to_thread(func, item)

    tasks: list[Awaitable[Any]] = [run_with_semaphore(item) for item in items]
    results = await asyncio.gather(*tasks, return_exceptions=True)
    failures = [result for result in results if isinstance(result, BaseException)]
    for failure in failures:
        logger.error(f"Work unit failed: {failure!r}")
    if failures:
        raise failures[0]
    return results


def build_dataset(section: RunSection) -> PartitionedDataset:
    """Synthetic draw or libsvm ingestion as the data section declares."""
    data = section.data
    if data.source == "libsvm":
        return ingest_libsvm(data.path, data.m, data.n, section.loss.feature_bound, data.dim)  # type: ignore[arg-type]
    rule = data.label_rule
    if rule is None:
        rule = LabelRule.LINEAR_NOISE if section.loss.family == LossFamily.QUADRATIC else LabelRule.SIGN_FLIP
    return generate_synthetic(
        data.m,
        data.n,
        data.dim,
        section.loss.feature_bound,
        label_rule=rule,
        seed=data.seed,
        flip_noise=data.flip_noise,
        noise=data.noise,
        label_bound=section.loss.label_bound,
    )


def build_run(
    section: RunSection,
    seed: int,
    dataset: PartitionedDataset | None = None,
    role: SampleRole = SampleRole.PRIMARY,
) -> RunConfig:
    """RunConfig for one seed; the dataset is shared across seeds, the sampling stream is not."""
    dataset = dataset if dataset is not None else build_dataset(section)
    model = LossModel.from_config(section.loss, dataset.dim)
    constants = model.constants()
    return RunConfig(
        model=model,
        dataset=dataset,
        schedule=StepSchedule.from_config(section.schedule, constants),
        topology=build_schedule(section.topology, dataset.m),
        T=section.T,
        update_order=section.update_order,
        projected=section.projected,
        master_seed=seed,
        initial_w=np.array(section.initial_w, dtype=float) if section.initial_w else None,
        stride=section.stride,
        role=role,
        regime=section.regime,
    )


def stability_regime(section: RunSection) -> Regime:
    """The stability recursion a run is checked against."""
    if section.regime in (Regime.CONVEX, Regime.STRONGLY_CONVEX, Regime.NONCONVEX):
        return section.regime
    if section.loss.family == LossFamily.SATURATING_NONCONVEX:
        return Regime.NONCONVEX
    if section.regime == Regime.LOCAL_STRONGLY_CONVEX or (
        section.projected and section.loss.mu > 0
    ):
        return Regime.STRONGLY_CONVEX
    return Regime.CONVEX


def bound_params_for(
    config: RunConfig, delta_conf: float = 0.1, sigma: float | None = None
) -> bounds.BoundParams:
    constants = config.model.constants()
    return bounds.BoundParams(
        L=constants.L,
        beta=constants.beta,
        mu=constants.mu,
        gamma=constants.gamma,
        M=constants.M,
        sigma=sigma,
        m=config.m,
        n=config.dataset.n,
        T=config.T,
        lam=config.topology.lam,
        schedule=config.schedule,
        delta_conf=delta_conf,
    )


def precondition_flags(config: RunConfig) -> dict[str, bool]:
    """Stepsize-cap flags of every regime the run's loss family can be checked against."""
    beta = config.model.constants().beta
    regimes = [Regime.NONCONVEX]
    if config.model.convex:
        regimes += [Regime.CONVEX, Regime.LOCAL_CONVEX]
    if config.model.strongly_convex:
        regimes += [Regime.STRONGLY_CONVEX, Regime.OPTIMIZATION, Regime.LOCAL_STRONGLY_CONVEX]
    flags = {}
    for regime in regimes:
        report = check_cap(config.schedule, regime, beta, config.T, config.topology)
        flags[regime.value] = report.met
    return flags


def _base_report(config: ExperimentConfig, kind: str) -> Report:
    return Report(kind=kind, config=config.to_dict(), config_hash=config_hash(config))


def _single_run(config: RunConfig) -> tuple[list[dict[str, Any]], dict[str, Any]]:
    trajectory = run(config)
    constants = config.model.constants()
    lam = config.topology.lam
    records = []
    within = True
    for position, t in enumerate(trajectory.steps):
        t = int(t)
        bound = consensus_bound(t - 1, config.schedule, lam, constants.L, config.m) if t > 1 else 0.0
        measured = float(trajectory.consensus[position])
        within &= measured <= bound + 1e-12
        records.append(
            {
                "seed": config.master_seed,
                "t": t,
                "consensus": measured,
                "consensus_bound": bound,
                "average_norm": float(np.linalg.norm(trajectory.averages[position])),
                "risk": empirical_risk(config.model, config.dataset, trajectory.averages[position]),
            }
        )
    summary = {
        "final_risk": records[-1]["risk"],
        "final_consensus": records[-1]["consensus"],
        "consensus_within_bound": within,
        "analytic_L": constants.L,
        "max_grad_norm": observed_grad_norm(config, trajectory),
    }
    if trajectory.weighted_average is not None:
        summary["weighted_average_risk"] = empirical_risk(
            config.model, config.dataset, trajectory.weighted_average
        )
    return records, summary


async def _run_single(config: ExperimentConfig, jobs: int | None) -> list[Report]:
    report = _base_report(config, "single-run")
    dataset = build_dataset(config.run)
    runs = [build_run(config.run, seed, dataset) for seed in config.seeds]
    results = await gather_limited(_single_run, runs, jobs)
    for run_config, (records, summary) in zip(runs, results, strict=True):
        report.records.extend(records)
        report.metrics[f"seed_{run_config.master_seed}"] = summary
    report.preconditions = precondition_flags(runs[0])
    return [report]


def _replacement(config: ExperimentConfig) -> tuple[np.ndarray, float] | None:
    explicit = config.twin.replacement
    if explicit is None:
        return None
    return np.array(explicit["x"], dtype=float), float(explicit["y"])


def _twin_records(
    trace: StabilityTrace, envelope: np.ndarray, seed: int
) -> list[dict[str, Any]]:
    records = trace.records()
    for record in records:
        record["seed"] = seed
        record["envelope"] = float(envelope[record["t"] - 1])
    return records


def envelope_violations(trace: StabilityTrace, envelope: np.ndarray) -> int:
    """Steps at which the measured divergence exceeds the envelope by more than 1e-9."""
    return int(np.count_nonzero(trace.divergence > envelope + ENVELOPE_SLACK))


async def _run_twin(config: ExperimentConfig, jobs: int | None) -> list[Report]:
    if config.twin.full_sweep:
        return [await _run_twin_sweep(config, jobs)]
    report = _base_report(config, "twin")
    dataset = build_dataset(config.run)
    regime = stability_regime(config.run)
    spec_args = {"replacement": _replacement(config), "seed": config.twin.replacement_seed}

    def one(seed: int) -> tuple[StabilityTrace, np.ndarray, dict[str, Any]]:
        run_config = build_run(config.run, seed, dataset)
        spec = NeighborSpec(config.twin.r, config.twin.k, **spec_args)
        trace = twin_run(run_config, spec)
        pool = dataset.draw_pool(config.twin.eval_pool, derive_seed(config.twin.replacement_seed, "eval-pool"))
        eps = pointwise_eps(trace, run_config.model, dataset, pool, config.twin.gradient)
        params = bound_params_for(run_config, config.bounds.delta_conf)
        envelope = bounds.per_step_envelope(regime, params, trace.hits)
        summary = {
            "hits": trace.hits.tolist(),
            "first_hit": trace.first_hit,
            "final_divergence": float(trace.divergence[-1]),
            "eps": eps.to_dict(),
            "eps_bound": float(params.L * envelope[-1]),
            "envelope_violations": envelope_violations(trace, envelope),
        }
        if config.twin.local:
            local = bounds.local_bound(
                Regime.CONVEX, run_config.topology, params, config.twin.r, trace.hits
            )
            summary["local"] = {
                "divergence": float(trace.node_divergence[-1, config.twin.r - 1]),
                "bound": local.values["divergence"],
                "precondition_met": local.precondition_met,
            }
        return trace, envelope, summary

    results = await gather_limited(one, config.seeds, jobs)
    for seed, (trace, envelope, summary) in zip(config.seeds, results, strict=True):
        report.records.extend(_twin_records(trace, envelope, seed))
        report.metrics[f"seed_{seed}"] = summary
    report.metrics["regime"] = regime.value
    report.preconditions = precondition_flags(build_run(config.run, config.seeds[0], dataset))
    return [report]


def sweep_seed(
    config: ExperimentConfig, seed: int, dataset: PartitionedDataset
) -> tuple[list[dict[str, Any]], dict[str, Any]]:
    """Every (r, k) twin for one seed, sequentially, with per-position bounds."""
    run_config = build_run(config.run, seed, dataset)
    regime = stability_regime(config.run)
    params = bound_params_for(run_config, config.bounds.delta_conf)
    base = coupled_base(run_config)
    pool = dataset.draw_pool(config.twin.eval_pool, derive_seed(config.twin.replacement_seed, "eval-pool"))
    surrogate = np.zeros((dataset.m, dataset.n))
    direct = np.zeros((dataset.m, dataset.n))
    records = []
    violations = 0
    direct_excess = 0
    for r in range(1, dataset.m + 1):
        for k in range(1, dataset.n + 1):
            trace = twin_run(run_config, NeighborSpec(r, k, seed=config.twin.replacement_seed), base)
            eps = pointwise_eps(trace, run_config.model, dataset, pool, config.twin.gradient)
            envelope = bounds.per_step_envelope(regime, params, trace.hits)
            violations += envelope_violations(trace, envelope)
            direct_excess += int(eps.direct > eps.surrogate + 1e-9)
            surrogate[r - 1, k - 1] = eps.surrogate
            direct[r - 1, k - 1] = eps.direct
            records.append(
                {
                    "seed": seed,
                    "r": r,
                    "k": k,
                    "hits": int(trace.hits.size),
                    "first_hit": trace.first_hit,
                    "final_divergence": float(trace.divergence[-1]),
                    "eps_surrogate": eps.surrogate,
                    "eps_direct": eps.direct,
                    "eps_bound": float(params.L * envelope[-1]),
                }
            )
    stats = aggregate(surrogate)
    theorem = bounds.delta_for(regime, params, base.indices)
    summary = {
        **stats.to_dict(),
        "direct": aggregate(direct).to_dict(),
        "ordering": bounds.compare_pointwise_uniform(stats),
        "envelope_violations": violations,
        "direct_above_surrogate": direct_excess,
        "eps_mean_by_node": surrogate.mean(axis=1).tolist(),
        "bound": theorem.value,
        "bound_precondition_met": theorem.precondition_met,
        "generalization_shape": (
            bounds.generalization_bound(params.M, params.mn, params.delta_conf, stats.rms)
            if params.mn >= 2
            else None
        ),
    }
    return records, summary


async def _run_twin_sweep(config: ExperimentConfig, jobs: int | None) -> Report:
    report = _base_report(config, "twin-sweep")
    dataset = build_dataset(config.run)
    results = await gather_limited(lambda seed: sweep_seed(config, seed, dataset), config.seeds, jobs)
    for seed, (records, summary) in zip(config.seeds, results, strict=True):
        report.records.extend(records)
        report.metrics[f"seed_{seed}"] = summary
    report.metrics["regime"] = stability_regime(config.run).value
    report.preconditions = precondition_flags(build_run(config.run, config.seeds[0], dataset))
    return report


def _bound_params(config: ExperimentConfig) -> tuple[bounds.BoundParams, LossModel]:
    section = config.run
    overrides = config.bounds.overrides
    model = LossModel.from_config(section.loss, section.data.dim)
    constants = model.constants()
    m = int(overrides.get("m", section.data.m))
    n = int(overrides.get("n", section.data.n))
    T = int(overrides.get("T", section.T))
    if "eta" in overrides:
        schedule = StepSchedule.constant(overrides["eta"])
    else:
        schedule = StepSchedule.from_config(section.schedule, constants)
    lam = overrides["lam"] if "lam" in overrides else build_schedule(section.topology, m).lam
    params = bounds.BoundParams(
        L=float(overrides.get("L", constants.L)),
        beta=float(overrides.get("beta", constants.beta)),
        mu=float(overrides.get("mu", constants.mu)),
        gamma=float(overrides.get("gamma", constants.gamma)),
        M=float(overrides.get("M", constants.M)),
        sigma=overrides.get("sigma", config.bounds.sigma),
        m=m,
        n=n,
        T=T,
        lam=float(lam),
        schedule=schedule,
        delta_conf=config.bounds.delta_conf,
    )
    return params, model


def evaluate_bounds(config: ExperimentConfig) -> Report:
    """Evaluate the requested regimes' bounds, with trace-based values for the first seed."""
    report = _base_report(config, "bound-eval")
    params, _ = _bound_params(config)
    table = index_table(config.seeds[0], SampleRole.TWIN_SHARED, params.m, params.T, params.n)
    results: list[bounds.BoundReport] = []
    for regime in config.bounds.regimes:
        if regime == Regime.CONVEX:
            results.append(bounds.convex_delta(params, table, config.bounds.variant))
            results.append(bounds.avg_weight_delta(params, Regime.CONVEX))
        elif regime == Regime.STRONGLY_CONVEX:
            results.append(bounds.strongly_convex_delta(params, table))
        elif regime == Regime.NONCONVEX:
            results.append(bounds.nonconvex_delta(params, table))
            results.append(bounds.avg_weight_delta(params, Regime.NONCONVEX))
        elif regime == Regime.OPTIMIZATION:
            if params.sigma is None:
                report.metrics["optimization"] = "skipped: sigma not set"
                continue
            if params.schedule.is_constant:
                constant = bounds.opt_rhs_constant(params)
                if params.gamma > 0:
                    constant.values["opt_error"] = bounds.opt_error(params)
                results.append(constant)
            else:
                results.append(bounds.opt_rhs_decreasing(params))
        else:
            local_regime = Regime.CONVEX if regime == Regime.LOCAL_CONVEX else Regime.STRONGLY_CONVEX
            topology = build_schedule(config.run.topology, params.m)
            hits = np.flatnonzero(table[:, config.twin.r - 1] == config.twin.k - 1) + 1
            results.append(
                bounds.local_bound(local_regime, topology, params, config.twin.r, hits, table)
            )
    for result in results:
        report.preconditions[result.theorem] = result.precondition_met
        report.metrics[result.theorem] = result.to_dict()
        for quantity, value in result.values.items():
            report.records.append(
                {
                    "theorem": result.theorem,
                    "quantity": quantity,
                    "value": value,
                    "precondition_met": result.precondition_met,
                }
            )
    if params.schedule.is_constant:
        report.metrics["uniform_expected"] = bounds.uniform_eps_bound(params)
        report.metrics["uniform_realized"] = bounds.realized_uniform(params, table)
        if params.mn >= 2 and "rms" in report.metrics.get("convex", {}).get("values", {}):
            rms = report.metrics["convex"]["values"]["rms"]
            report.metrics["generalization_shape"] = bounds.generalization_bound(
                params.M, params.mn, params.delta_conf, rms
            )
            report.metrics["generalization_envelope"] = bounds.generalization_envelope(params, table)
    return report


def sweep_cells(config: ExperimentConfig) -> list[tuple[dict[str, Any], ExperimentConfig]]:
    """Cross the sweep grid into (settings, cell config) pairs."""
    grid = config.sweep.grid
    if not grid:
        raise ConfigError("sweep needs a non-empty grid", path="sweep.grid")
    axes = list(grid)
    base = config.to_dict()
    base["kind"] = ExperimentKind.SWEEP.value
    cells = []
    for values in itertools.product(*(grid[axis] for axis in axes)):
        settings = dict(zip(axes, values, strict=True))
        assignments = []
        member_fields = {}
        data = base
        for axis, value in settings.items():
            target = SWEEP_ALIASES.get(axis, axis)
            if target == "seeds":
                data = {**data, "seeds": [value] if isinstance(value, int) else value}
                continue
            if target in TOPOLOGY_MEMBER_FIELDS:
                member_fields[target.rsplit(".", 1)[1]] = value
                continue
            assignments.append(f"{target}={json.dumps(value)}")
        data = apply_overrides(data, assignments)
        # canonical configs list topologies under `members`; a field applies to each member
        for member in data["run"]["topology"]["members"]:
            member.update(member_fields)
        data["sweep"] = {"grid": {}}
        try:
            cell = ExperimentConfig.from_dict(data)
        except (ValueError, TypeError) as e:
            raise ConfigError(f"sweep cell {settings}: {e}", path="sweep.grid") from e
        check_regime(cell, path="sweep.grid")
        cells.append((settings, cell))
    return cells


def _sweep_cell(item: tuple[int, dict[str, Any], ExperimentConfig]) -> Report:
    index, settings, cell = item
    started = time.perf_counter()
    report = _base_report(cell, "sweep")
    dataset = build_dataset(cell.run)
    for seed in cell.seeds:
        _, summary = sweep_seed(cell, seed, dataset)
        report.records.append(
            {
                "cell": index,
                "seed": seed,
                "settings": json.dumps(settings, sort_keys=True),
                "delta_mean": summary["delta_mean"],
                "rms": summary["rms"],
                "eps_uniform": summary["eps_uniform"],
                "bound": summary["bound"],
                "precondition_met": summary["bound_precondition_met"],
            }
        )
        report.metrics[f"seed_{seed}"] = summary
    report.metrics["settings"] = settings
    report.preconditions = precondition_flags(build_run(cell.run, cell.seeds[0], dataset))
    report.wall_clock_seconds = time.perf_counter() - started
    return report


async def _run_sweep(config: ExperimentConfig, jobs: int | None) -> list[Report]:
    cells = sweep_cells(config)
    logger.info(f"Sweeping {len(cells)} grid cells")
    items = [(index, settings, cell) for index, (settings, cell) in enumerate(cells, start=1)]
    return await gather_limited(_sweep_cell, items, jobs)


async def _run_bounds(config: ExperimentConfig, jobs: int | None) -> list[Report]:
    return [evaluate_bounds(config)]


async def _run_verify(config: ExperimentConfig, jobs: int | None) -> list[Report]:
    from .verify import run_suite, suite_report

    results = await run_suite(config.verify.profile, config.verify.criteria, jobs)
    return [suite_report(config, results)]


HANDLERS: dict[ExperimentKind, Callable[[ExperimentConfig, int | None], Awaitable[list[Report]]]] = {
    ExperimentKind.SINGLE_RUN: _run_single,
    ExperimentKind.TWIN: _run_twin,
    ExperimentKind.BOUND_EVAL: _run_bounds,
    ExperimentKind.SWEEP: _run_sweep,
    ExperimentKind.VERIFY_SUITE: _run_verify,
}


async def run_experiment_async(config: ExperimentConfig, jobs: int | None = None) -> list[Report]:
    """Execute the config's experiment kind and return its reports.

    Raises:
        LabError: any module error, annotated with the experiment kind
    """
    jobs = jobs or config.jobs
    started = time.perf_counter()
    logger.info(f"Running {config.kind.value} experiment with {jobs or default_jobs()} jobs")
    try:
        reports = await HANDLERS[config.kind](config, jobs)
    except LabError as e:
        where = f"{config.kind.value} experiment (config {config_hash(config)[:12]}"
        where += f", {config.source})" if config.source else ")"
        e.add_context(where)
        logger.exception(f"{where} failed")
        raise
    elapsed = time.perf_counter() - started
    for report in reports:
        if not report.wall_clock_seconds:
            report.wall_clock_seconds = elapsed
    return reports


def run_experiment(config: ExperimentConfig, jobs: int | None = None) -> list[Report]:
    """Synchronous entry point around run_experiment_async."""
    return asyncio.run(run_experiment_async(config, jobs))

"""
Command-line entry point: `dsgd-lab <command> [options]`.

Commands map onto experiment kinds (`run`, `twin`, `bounds`, `sweep`, `verify`) plus two
helpers: `topology` prints a gossip matrix and its spectral quantity, `gen-data` writes a
synthetic dataset in libsvm format.
"""

import argparse
import json
import logging
import sys
from collections.abc import Callable

from . import __version__
from .config import load_config
from .dataset import generate_synthetic, write_libsvm
from .errors import CriterionFailure, exit_code_for
from .experiment import run_experiment
from .models import ExperimentKind, LabelRule, TopologyKind, Weighting
from .report import emit_report
from .topology import build_topology, spectral_gap

logger = logging.getLogger(__name__)

EXPERIMENT_COMMANDS = {
    "run": ExperimentKind.SINGLE_RUN,
    "twin": ExperimentKind.TWIN,
    "bounds": ExperimentKind.BOUND_EVAL,
    "sweep": ExperimentKind.SWEEP,
    "verify": ExperimentKind.VERIFY_SUITE,
}


def _formats(value: str) -> list[str]:
    formats = [item.strip() for item in value.split(",") if item.strip()]
    unknown = sorted(set(formats) - {"csv", "json"})
    if unknown:
        raise argparse.ArgumentTypeError(f"unknown format(s): {', '.join(unknown)}")
    return formats


def _criteria(value: str) -> list[int]:
    try:
        return [int(item) for item in value.split(",") if item.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"criteria must be comma-separated integers: {value}") from e


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dsgd-lab",
        description="Stability and generalization experiments for decentralized SGD",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="-v for progress, -vv for per-run detail"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    experiment = argparse.ArgumentParser(add_help=False)
    experiment.add_argument("--config", help="JSON or YAML experiment config")
    experiment.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config leaf by dotted path (repeatable)",
    )
    experiment.add_argument("--out", help="report directory (default: output.directory)")
    experiment.add_argument("--format", type=_formats, help="comma-separated: csv,json")
    experiment.add_argument("--jobs", type=int, help="worker threads (default: logical cores)")
    experiment.add_argument("--seed", type=int, help="run a single seed instead of config seeds")

    for name, kind in EXPERIMENT_COMMANDS.items():
        sub = commands.add_parser(name, parents=[experiment], help=f"{kind.value} experiment")
        if name == "twin":
            sub.add_argument("--full-sweep", action="store_true", help="every (r, k) position")
        if name == "verify":
            sub.add_argument("--profile", choices=["quick", "full"], help="acceptance grid size")
            sub.add_argument("--criteria", type=_criteria, help="comma-separated criterion numbers")

    topology = commands.add_parser("topology", help="build a gossip matrix and print its λ")
    topology.add_argument("--kind", default="ring", choices=[k.value for k in TopologyKind if k.value != "explicit"])
    topology.add_argument("--m", type=int, default=4, help="number of nodes")
    topology.add_argument("--weighting", default="metropolis", choices=[w.value for w in Weighting])
    topology.add_argument("--degree", type=int, help="degree for random-regular graphs")
    topology.add_argument("--seed", type=int, default=0, help="seed for random-regular graphs")
    topology.add_argument("--matrix", action="store_true", help="include the matrix entries")

    data = commands.add_parser("gen-data", help="write a synthetic dataset in libsvm format")
    data.add_argument("--m", type=int, default=4)
    data.add_argument("--n", type=int, default=16)
    data.add_argument("--dim", type=int, default=5)
    data.add_argument("--B", type=float, default=1.0, help="feature norm bound")
    data.add_argument("--label-rule", default="sign-flip", choices=[r.value for r in LabelRule])
    data.add_argument("--flip-noise", type=float, default=0.1)
    data.add_argument("--seed", type=int, default=0)
    data.add_argument("--out", required=True, help="output file")
    return parser


def cmd_experiment(args: argparse.Namespace) -> int:
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seeds=[{args.seed}]")
    if getattr(args, "full_sweep", False):
        overrides.append("twin.full_sweep=true")
    if getattr(args, "profile", None):
        overrides.append(f"verify.profile={args.profile}")
    if getattr(args, "criteria", None):
        overrides.append(f"verify.criteria={json.dumps(args.criteria)}")
    config = load_config(args.config, overrides, EXPERIMENT_COMMANDS[args.command])
    if args.out:
        config.output.directory = args.out
    if args.format:
        config.output.formats = args.format

    reports = run_experiment(config, args.jobs)
    for report in reports:
        for path in emit_report(report, config.output.directory, config.output.formats):
            print(path)

    if config.kind == ExperimentKind.VERIFY_SUITE:
        failed = [f"{record['criterion']} ({record['name']})" for record in reports[0].records if not record["passed"]]
        for record in reports[0].records:
            print(f"{'PASS' if record['passed'] else 'FAIL'}  {record['criterion']:>2}  {record['name']}")
        if failed:
            raise CriterionFailure(failed)
    return 0


def cmd_topology(args: argparse.Namespace) -> int:
    gossip = build_topology(args.kind, args.m, args.weighting, args.degree, args.seed)
    summary = {
        "kind": args.kind,
        "m": gossip.m,
        "weighting": args.weighting,
        "lambda": spectral_gap(gossip),
        "one_minus_lambda": 1.0 - gossip.lam,
        "min_diagonal": gossip.min_diagonal,
    }
    if args.matrix:
        summary["matrix"] = gossip.entries.tolist()
    print(json.dumps(summary, indent=2))
    return 0


def cmd_gen_data(args: argparse.Namespace) -> int:
    dataset = generate_synthetic(
        args.m, args.n, args.dim, args.B, label_rule=args.label_rule, seed=args.seed, flip_noise=args.flip_noise
    )
    print(write_libsvm(dataset, args.out))
    return 0


COMMANDS: dict[str, Callable[[argparse.Namespace], int]] = {
    **{name: cmd_experiment for name in EXPERIMENT_COMMANDS},
    "topology": cmd_topology,
    "gen-data": cmd_gen_data,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except Exception as e:
        if isinstance(e, CriterionFailure):
            logger.error(str(e))
        else:
            logger.error(f"{args.command} failed: {e}")
            logger.debug("Traceback", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())

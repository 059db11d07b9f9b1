import argparse
import logging
import re
import sys
from dataclasses import replace
from pathlib import Path
from typing import Dict, Optional, Sequence

import numpy as np

from agent.maddpg import train
from cli.console import Reporter, setup_logging
from harness.artifacts import ArtifactError, ArtifactStore, read_csv
from harness.config import LabConfig, load_lab_config
from harness.evaluate import evaluate, expand_policies
from harness.manifest import load_manifest, manifest_text
from harness.metrics import METRICS_HEADER, MetricsError, summary_text
from harness.scenarios import SCALES, ScenarioSet, generate_scenarios
from policy.executor import LEARNED, ExecutionError, run_execution, split_policy
from tinynn.checkpoint import CheckpointError, load_params, save_params
from tinynn.mlp import ShapeError
from tinynn.optim import NumericalFault
from world.config import ConfigError
from world.trace import TraceRecorder


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_CONFIG = 4
EXIT_NUMERICAL = 5
EXIT_CHECKPOINT = 6
EXIT_METRICS = 7

CURVE_HEADER = ("episode", "mean_utility", "normalized_utility", "critic_loss", "epsilon", "wall_ms")
CURVE_SERIES = ("mean_utility", "normalized_utility", "critic_loss", "epsilon")
TAG_PATTERN = re.compile(r"[A-Za-z0-9_-]+")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swarm-alloc", description="Swarm task-allocation lab")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", type=Path, help="key = value configuration file")
        p.add_argument("--seed", type=int, help="overrides the configured seed")
        p.add_argument("--out", type=Path, default=Path("runs"), help="output directory")

    p = sub.add_parser("train", help="train the shared actor and critic")
    common(p)
    p.add_argument("--episodes", type=int, help="overrides the configured episode count")
    p.add_argument("--checkpoint", type=Path, help="actor checkpoint path (default OUT/actor.tnn)")
    p.add_argument("--timings", action="store_true", help="record wall-clock time per episode")

    p = sub.add_parser("eval", help="evaluate policies over a scenario set")
    common(p)
    p.add_argument(
        "--checkpoint",
        action="append",
        default=[],
        metavar="[TAG=]PATH",
        help="trained actor checkpoint; repeat with TAG=PATH to compare several",
    )
    p.add_argument("--policies", help="comma-separated policy names")
    p.add_argument("--scenarios", type=Path, help="scenario manifest (generated from --seed when absent)")
    p.add_argument("--count", type=int, default=100, help="scenarios to generate without a manifest")
    p.add_argument("--scale", choices=sorted(SCALES), default="small")

    p = sub.add_parser("replay", help="re-run one scenario and dump a JSON-lines trace")
    common(p)
    p.add_argument("--checkpoint", type=Path, help="trained actor checkpoint")
    p.add_argument("--policies", default="greedy", help="the single policy to replay")
    p.add_argument("--scenarios", type=Path, help="scenario manifest")
    p.add_argument("--scenario-id", type=int, default=0)
    p.add_argument("--scale", choices=sorted(SCALES), default="small")

    p = sub.add_parser("gen-scenarios", help="write a scenario manifest")
    common(p)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--scale", choices=sorted(SCALES), default="small")

    p = sub.add_parser("plot-data", help="split a training curve into per-series files")
    p.add_argument("--curve", type=Path, required=True, help="training_curve.csv")
    p.add_argument("--out", type=Path, default=Path("runs/plot"))
    p.add_argument("--window", type=int, default=20, help="moving-average window")
    return parser


def load_config(args: argparse.Namespace) -> LabConfig:
    lab = load_lab_config(getattr(args, "config", None))
    if getattr(args, "seed", None) is not None:
        lab = replace(lab, world=replace(lab.world, seed=args.seed))
    if getattr(args, "episodes", None) is not None:
        trainer = replace(lab.trainer, episodes=args.episodes)
        trainer.validate()
        lab = replace(lab, trainer=trainer)
    return lab


def resolve_scenarios(args: argparse.Namespace, lab: LabConfig) -> ScenarioSet:
    if args.scenarios is not None:
        return load_manifest(args.scenarios)
    return generate_scenarios(lab.world, args.count, lab.world.seed, args.scale)


def cmd_train(args: argparse.Namespace, reporter: Reporter) -> int:
    lab = load_config(args)
    store = ArtifactStore(args.out)
    reporter.banner("train", f"{lab.trainer.episodes} episodes, seed {lab.world.seed}")
    if lab.trainer.episodes == 0:
        reporter.warning("no episodes requested; the checkpoint holds the initial parameters")

    actor, log = train(lab.trainer, lab.world, lab.world.seed, checkpoint_dir=store.root_dir)
    checkpoint = save_params(actor, args.checkpoint or store.path("actor.tnn"))
    rows = [
        (e.episode, e.mean_utility, e.normalized_utility, e.critic_loss, e.epsilon, e.wall_ms if args.timings else 0.0)
        for e in log.entries
    ]
    curve = store.write_csv("training_curve.csv", CURVE_HEADER, rows)
    reporter.success(f"checkpoint written to {checkpoint}")
    reporter.success(f"training curve written to {curve}")
    return EXIT_OK


def checkpoint_paths(values: Sequence[str]) -> Dict[str, Path]:
    """`PATH` is the untagged default checkpoint, `TAG=PATH` a named one."""
    paths: Dict[str, Path] = {}
    for value in values:
        tag, sep, rest = value.partition("=")
        if sep and TAG_PATTERN.fullmatch(tag):
            key, path = tag, rest
        else:
            key, path = "", value
        if key in paths:
            raise ConfigError(f"checkpoint {key or '(untagged)'} given twice")
        paths[key] = Path(path)
    return paths


def cmd_eval(args: argparse.Namespace, reporter: Reporter) -> int:
    lab = load_config(args)
    requested = lab.execution.policy_list if args.policies is None else [p.strip() for p in args.policies.split(",")]
    paths = checkpoint_paths(args.checkpoint)
    policies = expand_policies(requested, list(paths))
    replace(lab.execution, policies=",".join(policies)).validate()

    unmatched = [p for p in policies if split_policy(p)[0] in LEARNED and split_policy(p)[1] not in paths]
    if unmatched:
        raise ExecutionError(f"Policies {', '.join(unmatched)} need --checkpoint")
    actors = {tag: load_params(path) for tag, path in paths.items()}
    scenarios = resolve_scenarios(args, lab)
    reporter.banner("eval", f"{len(scenarios)} scenarios, {', '.join(policies)}")

    report = evaluate(scenarios, policies, actors, lab.execution)
    store = ArtifactStore(args.out)
    metrics = store.write_csv("metrics.csv", METRICS_HEADER, (r.as_tuple() for r in report.rows))
    store.write_text("summary.txt", summary_text(report))
    reporter.divider()
    reporter.metrics_table(report)
    reporter.success(f"metrics written to {metrics}")
    return EXIT_OK


def cmd_replay(args: argparse.Namespace, reporter: Reporter) -> int:
    lab = load_config(args)
    policy = args.policies.strip()
    replace(lab.execution, policies=policy).validate()
    actor = load_params(args.checkpoint) if split_policy(policy)[0] in LEARNED and args.checkpoint else None

    if args.scenarios is not None:
        scenarios = load_manifest(args.scenarios)
    else:
        scenarios = generate_scenarios(lab.world, args.scenario_id + 1, lab.world.seed, args.scale)
    matches = [s for s in scenarios if s.scenario_id == args.scenario_id]
    if not matches:
        raise ConfigError(f"No scenario with id {args.scenario_id}")
    scenario = matches[0]

    world = scenario.build()
    recorder = TraceRecorder()
    recorder.start(world)
    result = run_execution(world, policy, actor, seed=scenario.seed, config=lab.execution, on_step=recorder)
    path = ArtifactStore(args.out).write_jsonl("trace.jsonl", recorder.records)
    reporter.status("REPLAY", f"scenario {scenario.scenario_id}: total utility {result.total_utility:.4f}")
    reporter.success(f"trace written to {path}")
    return EXIT_OK


def cmd_gen_scenarios(args: argparse.Namespace, reporter: Reporter) -> int:
    lab = load_config(args)
    scenarios = generate_scenarios(lab.world, args.count, lab.world.seed, args.scale)
    path = ArtifactStore(args.out).write_text("scenarios.json", manifest_text(scenarios))
    reporter.success(f"{len(scenarios)} scenarios written to {path}")
    return EXIT_OK


def moving_average(values: np.ndarray, window: int) -> np.ndarray:
    """Trailing mean over at most `window` values."""
    if window < 1:
        raise ConfigError(f"window must be >= 1, got {window}")
    sums = np.cumsum(np.insert(values, 0, 0.0))
    idx = np.arange(1, len(values) + 1)
    lo = np.maximum(0, idx - window)
    return (sums[idx] - sums[lo]) / (idx - lo)


def cmd_plot_data(args: argparse.Namespace, reporter: Reporter) -> int:
    rows = read_csv(args.curve)
    store = ArtifactStore(args.out)
    episodes = [int(r["episode"]) for r in rows]
    for name in CURVE_SERIES:
        try:
            values = np.array([float(r[name]) for r in rows], dtype=float)
        except KeyError:
            raise ConfigError(f"{args.curve}: missing column {name!r}") from None
        smoothed = moving_average(values, args.window) if len(values) else values
        store.write_csv(f"{name}.csv", ("episode", name, "smoothed"), zip(episodes, values, smoothed))
    reporter.success(f"{len(CURVE_SERIES)} series written to {store.root_dir}")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "replay": cmd_replay,
    "gen-scenarios": cmd_gen_scenarios,
    "plot-data": cmd_plot_data,
}


def main(argv: Optional[Sequence[str]] = None, reporter: Optional[Reporter] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    setup_logging(args.verbose)
    reporter = reporter or Reporter()
    try:
        return COMMANDS[args.command](args, reporter)
    except (FileNotFoundError, ArtifactError) as e:
        reporter.error(str(e))
        return EXIT_MISSING_FILE
    except ConfigError as e:
        reporter.error(f"configuration: {e}")
        return EXIT_CONFIG
    except NumericalFault as e:
        reporter.error(f"numerical fault: {e}")
        return EXIT_NUMERICAL
    except (CheckpointError, ShapeError) as e:
        reporter.error(f"checkpoint: {e}")
        return EXIT_CHECKPOINT
    except (MetricsError, ExecutionError) as e:
        reporter.error(str(e))
        return EXIT_METRICS
    except Exception as e:
        logger.debug("unhandled failure", exc_info=True)
        reporter.error(f"{type(e).__name__}: {e}")
        return EXIT_OTHER


def run():
    """
    Entry point for the `swarm-alloc` CLI command.
    """
    sys.exit(main(sys.argv[1:]))

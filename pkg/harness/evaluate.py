"""
Batch evaluation: every policy on every scenario from identical initial
worlds, then NATU, NATC and dominance rate per policy.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Dict, List, Mapping, Optional, Sequence, Union

from harness.metrics import MetricsError, MetricsReport, ScenarioRow, build_report, natc, natu, natu_raw
from harness.scenarios import Scenario, ScenarioSet
from policy.executor import LEARNED, TAG_SEP, ExecConfig, run_execution, split_policy
from tinynn.mlp import NetworkParams


logger = logging.getLogger(__name__)

THREADS_ENV = "SWARM_ALLOC_THREADS"


def worker_count(default: int = 1) -> int:
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        logger.warning("Ignoring %s=%r; expected an integer", THREADS_ENV, raw)
        return default


Actors = Union[NetworkParams, Mapping[str, NetworkParams], None]


def actor_table(actors: Actors) -> Dict[str, NetworkParams]:
    """Checkpoints by tag; a bare parameter set is the untagged default ""."""
    if actors is None:
        return {}
    if isinstance(actors, NetworkParams):
        return {"": actors}
    return dict(actors)


def expand_policies(policies: Sequence[str], tags: Sequence[str]) -> List[str]:
    """
    One label per (learned rule, checkpoint tag) pair.

    An untagged learned rule runs once per supplied checkpoint; the default
    checkpoint keeps the plain name. Tagged labels and greedy pass through.
    """
    tags = list(tags) or [""]
    labels: List[str] = []
    for label in policies:
        name, tag = split_policy(label)
        if name in LEARNED and not tag:
            expanded = [name if not t else f"{name}{TAG_SEP}{t}" for t in tags]
        else:
            expanded = [label]
        labels.extend(x for x in expanded if x not in labels)
    return labels


def actor_for(label: str, actors: Mapping[str, NetworkParams]) -> Optional[NetworkParams]:
    name, tag = split_policy(label)
    if name not in LEARNED:
        return None
    if tag not in actors:
        if tag:
            raise MetricsError(f"Policy {label} names checkpoint {tag!r}, which was not supplied")
        return None
    return actors[tag]


def check_checkpoint_fits(actor_params: NetworkParams, scenarios: ScenarioSet) -> None:
    """A checkpoint transfers across robot counts but not across task counts."""
    for scenario in scenarios:
        world = scenario.world
        if actor_params.spec.output_dim != world.n_tasks or actor_params.spec.input_dim != world.obs_dim:
            raise MetricsError(
                f"Checkpoint was trained for {actor_params.spec.output_dim} tasks "
                f"(observation width {actor_params.spec.input_dim}); scenario {scenario.scenario_id} "
                f"has {world.n_tasks} tasks (observation width {world.obs_dim})"
            )


def evaluate_scenario(
    scenario: Scenario,
    policies: Sequence[str],
    actors: Actors = None,
    exec_config: Optional[ExecConfig] = None,
) -> List[ScenarioRow]:
    table = actor_table(actors)
    world0 = scenario.build()
    rows = []
    for policy in policies:
        result = run_execution(
            world0.clone(), policy, actor_for(policy, table), seed=scenario.seed, config=exec_config
        )
        rows.append(
            ScenarioRow(
                scenario_id=scenario.scenario_id,
                policy=policy,
                total_utility=result.total_utility,
                natu_raw=natu_raw(result, world0),
                natu=natu(result, world0),
                natc=natc(result),
            )
        )
    return rows


def evaluate(
    scenarios: ScenarioSet,
    policies: Sequence[str],
    actors: Actors = None,
    exec_config: Optional[ExecConfig] = None,
    workers: Optional[int] = None,
) -> MetricsReport:
    """
    Run all policies on all scenarios; rows come back sorted by scenario id.

    `actors` is one checkpoint or a mapping from tag to checkpoint; each
    learned policy label picks its checkpoint by tag.
    """
    policies = list(policies)
    if not policies:
        raise MetricsError("No policies to evaluate")
    table = actor_table(actors)
    for policy in policies:
        params = actor_for(policy, table)
        if params is not None:
            check_checkpoint_fits(params, scenarios)

    workers = worker_count() if workers is None else max(1, workers)
    rows: List[ScenarioRow] = []
    if workers == 1:
        for scenario in scenarios:
            rows.extend(evaluate_scenario(scenario, policies, table, exec_config))
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            futures = {
                executor.submit(evaluate_scenario, scenario, policies, table, exec_config): scenario
                for scenario in scenarios
            }
            for future in as_completed(futures):
                rows.extend(future.result())

    logger.info("evaluated %d scenarios x %d policies", len(scenarios), len(policies))
    return build_report(rows, policies)

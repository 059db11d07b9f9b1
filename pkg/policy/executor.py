"""
Distributed execution: each free robot decides from its own observation,
the previous targets of the neighbours it sees, the public task state and
a private random stream.

Three decision rules are available:
  lia_maddpg              actor proposal, then deviation-probability improvement
  lia_maddpg_no_improve   actor proposal only
  greedy                  best phi1 * r - d among tasks with free slots
"""

import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from perception.graph import RelatedSet
from tinynn.mlp import NetworkParams, ShapeError, forward
from world.config import ConfigError
from world.env import episode_result, is_done, observe, step
from world.rng import make_stream
from world.types import Action, EpisodeResult, Observation, StepOutcome, WorldState


StepHook = Callable[[WorldState, List[Action], StepOutcome], None]

POLICIES = ("lia_maddpg", "lia_maddpg_no_improve", "greedy")
LEARNED = ("lia_maddpg", "lia_maddpg_no_improve")

# "lia_maddpg@no_lia" runs the learned rule with the checkpoint tagged "no_lia"
TAG_SEP = "@"

DELTA_FLOOR = float(np.finfo(float).tiny)


class ExecutionError(Exception):
    """Raised when a decision rule cannot run as requested."""
    pass


def split_policy(label: str) -> Tuple[str, str]:
    """Split a policy label into its rule name and checkpoint tag (empty when untagged)."""
    name, _, tag = label.partition(TAG_SEP)
    return name.strip(), tag.strip()


@dataclass(frozen=True)
class ExecConfig:
    distance_scale: float = 10.0
    policies: str = "lia_maddpg,greedy"

    def validate(self) -> None:
        if self.distance_scale < 0:
            raise ConfigError(f"distance_scale must be >= 0, got {self.distance_scale}")
        for label in self.policy_list:
            name, tag = split_policy(label)
            if name not in POLICIES:
                raise ConfigError(f"Unknown policy {name!r}; choose from {', '.join(POLICIES)}")
            if tag and name not in LEARNED:
                raise ConfigError(f"Policy {name} takes no checkpoint tag, got {label!r}")

    @property
    def policy_list(self) -> List[str]:
        return [p.strip() for p in self.policies.split(",") if p.strip()]


@dataclass(frozen=True)
class LocalView:
    """Everything one robot may read when it decides."""
    robot_id: int
    position: np.ndarray
    rewards: np.ndarray  # own r_{i,j} row
    task_positions: np.ndarray
    bound_counts: np.ndarray
    capacities: np.ndarray
    neighbor_targets: tuple  # previous-step targets of observed neighbours, None when unknown
    phi1: float
    distance_scale: float

    @property
    def alpha(self) -> int:
        return len(self.neighbor_targets)

    def task_distances(self) -> np.ndarray:
        gaps = self.task_positions - self.position
        return np.hypot(gaps[:, 0], gaps[:, 1]) * self.distance_scale


@dataclass
class ExecContext:
    robot_id: int
    observation: np.ndarray
    alpha: int
    neighbor_targets: tuple
    proposed_task: int
    h_bar: int
    h: int
    rng: np.random.Generator

    @property
    def beta(self) -> int:
        """Observed neighbours whose previous target equals the proposal."""
        return sum(1 for target in self.neighbor_targets if target == self.proposed_task)


def local_view(world: WorldState, related: RelatedSet, distance_scale: float) -> LocalView:
    i = related.robot_id
    return LocalView(
        robot_id=i,
        position=world.robots[i].position.copy(),
        rewards=world.reward_matrix[i].copy(),
        task_positions=world.task_positions(),
        bound_counts=world.bound_counts(),
        capacities=world.capacities(),
        neighbor_targets=tuple(world.robots[k].target for k in related.neighbors),
        phi1=world.config.phi1,
        distance_scale=distance_scale,
    )


def policy_output(actor_params: NetworkParams, observation) -> Action:
    """Argmax of the actor's softmax; ties go to the lowest task index."""
    vector = observation.vector() if isinstance(observation, Observation) else np.asarray(observation)
    probs = forward(actor_params, vector[None, :], mode="eval")[0][0]
    return Action.from_distribution(probs)


def capacity_gap(h_bar: int, h: int) -> int:
    return h_bar - h if h_bar > h else 0


def deviation_probability(ctx: ExecContext) -> float:
    """
    exp(-(h_bar (x) h) * (alpha - beta)), in (0, 1].

    Exponents past the float range are clamped to the smallest positive
    normal float instead of underflowing to zero.
    """
    return max(math.exp(-capacity_gap(ctx.h_bar, ctx.h) * (ctx.alpha - ctx.beta)), DELTA_FLOOR)


def fallback_scores(rewards: Sequence[float], distances: Sequence[float], phi1: float) -> np.ndarray:
    return phi1 * np.asarray(rewards, dtype=float) - np.asarray(distances, dtype=float)


def improved_action(ctx: ExecContext, proposed: Action, view: LocalView) -> Action:
    """With probability delta swap the proposal for the best-scoring task."""
    xi = ctx.rng.random()
    if xi < deviation_probability(ctx):
        scores = fallback_scores(view.rewards, view.task_distances(), view.phi1)
        return Action.one_hot(int(np.argmax(scores)), len(scores))
    return proposed


def greedy_policy(view: LocalView) -> Action:
    """Best phi1 * r - d among tasks with a free slot; all tasks if every one is full."""
    scores = fallback_scores(view.rewards, view.task_distances(), view.phi1)
    open_tasks = view.bound_counts < view.capacities
    if open_tasks.any():
        scores = np.where(open_tasks, scores, -np.inf)
    return Action.one_hot(int(np.argmax(scores)), len(scores))


def run_execution(
    world: WorldState,
    policy: str,
    actor_params: Optional[NetworkParams] = None,
    seed: int = 0,
    config: Optional[ExecConfig] = None,
    rngs: Optional[Sequence[np.random.Generator]] = None,
    on_step: Optional[StepHook] = None,
) -> EpisodeResult:
    """
    Step `world` to completion under one decision rule; `on_step` sees every step.

    `policy` may carry a checkpoint tag; only the rule name matters here.
    """
    config = config or ExecConfig()
    label = policy
    policy, _ = split_policy(label)
    if policy not in POLICIES:
        raise ExecutionError(f"Unknown policy {label!r}")
    if policy in LEARNED:
        if actor_params is None:
            raise ExecutionError(f"Policy {label} needs trained actor parameters")
        if actor_params.spec.input_dim != world.config.obs_dim:
            raise ShapeError(
                f"Checkpoint expects observation width {actor_params.spec.input_dim}, "
                f"scenario produces {world.config.obs_dim}"
            )
    if rngs is None:
        rngs = [make_stream(seed, f"robot-{i}") for i in range(world.n_robots)]

    m = world.n_tasks
    neighbors, observations = observe(world)
    while not is_done(world):
        actions: List[Action] = []
        for robot in world.robots:
            i = robot.robot_id
            if not robot.free:
                actions.append(Action.one_hot(robot.target, m))
                continue
            view = local_view(world, neighbors[i], config.distance_scale)
            if policy == "greedy":
                actions.append(greedy_policy(view))
                continue
            obs = observations[i].vector()
            proposed = policy_output(actor_params, obs)
            if policy == "lia_maddpg":
                j = proposed.task_index
                ctx = ExecContext(
                    robot_id=i,
                    observation=obs,
                    alpha=view.alpha,
                    neighbor_targets=view.neighbor_targets,
                    proposed_task=j,
                    h_bar=int(view.capacities[j]),
                    h=int(view.bound_counts[j]),
                    rng=rngs[i],
                )
                proposed = improved_action(ctx, proposed, view)
            actions.append(proposed)
        outcome = step(world, actions)
        if on_step is not None:
            on_step(world, actions, outcome)
        neighbors, observations = outcome.next_neighbors, outcome.next_observations
    return episode_result(world)

"""
Experience generation: run the shared actor in a world and record joint
transitions together with their aggregated local information.
"""

from typing import Callable, Iterator, List, Tuple, Union

import numpy as np

from agent.replay import TransitionRecord
from perception.aggregation import aggregate_rows, membership
from perception.graph import distance_matrix, related_sets
from tinynn.mlp import NetworkParams, ShapeError, forward
from world.env import episode_result, is_done, observe, step
from world.types import Action, EpisodeResult, WorldState


ActorSource = Union[NetworkParams, Callable[[], NetworkParams]]


def _actor_getter(actor: ActorSource) -> Callable[[], NetworkParams]:
    if isinstance(actor, NetworkParams):
        return lambda: actor
    return actor


def aggregate_all(rel_sets, observations: np.ndarray, distributions: np.ndarray, beta: float):
    """phi_i(o) and phi_i(a) for every robot of one step."""
    n = len(rel_sets)
    members, distances = membership(rel_sets, observations.shape[0])
    return aggregate_rows(
        members,
        distances,
        np.broadcast_to(observations, (n,) + observations.shape),
        np.broadcast_to(distributions, (n,) + distributions.shape),
        beta,
    )


def locked_targets(world: WorldState) -> np.ndarray:
    """Target of every bound robot, -1 for free robots."""
    return np.array([-1 if r.free else r.target for r in world.robots], dtype=int)


def choose_actions(
    world: WorldState,
    actor: NetworkParams,
    observations: np.ndarray,
    epsilon: float,
    rng: np.random.Generator,
) -> List[Action]:
    """
    Epsilon-greedy actions for free robots, repeated one-hots for bound ones.

    An exploring robot stores the one-hot of its random task as its
    distribution; otherwise the actor's softmax row is stored.
    """
    m = world.n_tasks
    free = world.free_mask()
    actions: List[Action] = [None] * world.n_robots  # type: ignore[list-item]
    probs = forward(actor, observations[free], mode="eval")[0] if free.any() else np.zeros((0, m))
    row = 0
    for robot in world.robots:
        i = robot.robot_id
        if not robot.free:
            actions[i] = Action.one_hot(robot.target, m)
            continue
        if rng.random() < epsilon:
            actions[i] = Action.one_hot(int(rng.integers(0, m)), m)
        else:
            actions[i] = Action.from_distribution(probs[row])
        row += 1
    return actions


def iter_transitions(
    world: WorldState,
    actor: ActorSource,
    epsilon: float,
    rng: np.random.Generator,
    beta: float,
) -> Iterator[TransitionRecord]:
    """Step `world` to completion, yielding one record per step."""
    current_actor = _actor_getter(actor)
    if current_actor().spec.input_dim != world.config.obs_dim:
        raise ShapeError(
            f"Actor expects {current_actor().spec.input_dim} inputs, world observations have {world.config.obs_dim}"
        )
    neighbors, obs_list = observe(world)
    observations = np.stack([o.vector() for o in obs_list])

    while not is_done(world):
        active = world.free_mask()
        actions = choose_actions(world, current_actor(), observations, epsilon, rng)
        distributions = np.stack([a.distribution for a in actions])
        task_indices = [a.task_index for a in actions]

        rel = related_sets(neighbors, task_indices, distance_matrix(world.robot_positions()))
        agg_obs, agg_act = aggregate_all(rel, observations, distributions, world.config.beta)

        outcome = step(world, actions)
        next_observations = np.stack([o.vector() for o in outcome.next_observations])
        done = np.zeros(world.n_robots, dtype=bool)
        for robot_id, _, _ in outcome.newly_bound:
            done[robot_id] = True

        yield TransitionRecord(
            observations=observations,
            actions=distributions,
            agg_obs=agg_obs,
            agg_act=agg_act,
            rewards=outcome.rewards,
            next_observations=next_observations,
            next_neighbors=[list(r.neighbors) for r in outcome.next_neighbors],
            next_distances=distance_matrix(world.robot_positions()),
            next_locked=locked_targets(world),
            done=done,
            active=active,
        )
        neighbors, observations = outcome.next_neighbors, next_observations


def rollout_episode(
    world: WorldState,
    policy_params: NetworkParams,
    epsilon: float,
    rng: np.random.Generator,
) -> Tuple[List[TransitionRecord], EpisodeResult]:
    records = list(iter_transitions(world, policy_params, epsilon, rng, world.config.beta))
    return records, episode_result(world)

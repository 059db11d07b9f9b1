"""
Environment dynamics for the swarm task-allocation world.

Tasks drift on a random walk inside the unit arena; free robots steer
toward the task their action selects and bind once within the association
distance. Binding is irreversible: a bound robot rides along with its task
for the rest of the episode.
"""

import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from perception.graph import RelatedSet, neighbor_sets
from world.config import WorldConfig
from world.rng import make_stream
from world.types import (
    Action,
    BindEvent,
    EpisodeResult,
    Observation,
    RobotState,
    StepOutcome,
    TaskState,
    WorldState,
)


logger = logging.getLogger(__name__)

ZERO_DISTANCE = 1e-12


class ActionError(Exception):
    """Raised when an action list does not fit the world."""
    pass


def wrap_angle(angle):
    """Wrap radians into [-pi, pi)."""
    return (np.asarray(angle) + math.pi) % (2.0 * math.pi) - math.pi


def reflect_unit(x: np.ndarray) -> np.ndarray:
    """Fold coordinates back into [0, 1] by mirroring at the arena edges."""
    folded = np.mod(x, 2.0)
    return np.where(folded > 1.0, 2.0 - folded, folded)


def init_world(config: WorldConfig, seed: int) -> WorldState:
    """Sample a fresh world. Identical (config, seed) pairs give identical worlds."""
    config.validate()
    rng = make_stream(seed, "world")
    n, m = config.n_robots, config.n_tasks
    side = config.arena_side_m

    robot_positions = rng.uniform(0.0, 1.0, size=(n, 2))
    task_positions = rng.uniform(0.0, 1.0, size=(m, 2))
    robot_speeds = rng.uniform(config.robot_speed_min, config.robot_speed_max, size=n) / side
    task_speeds = rng.uniform(config.task_speed_min, config.task_speed_max, size=m) / side
    task_headings = rng.uniform(-math.pi, math.pi, size=m)
    reward_matrix = rng.uniform(0.0, 1.0, size=(n, m))

    capacity = config.capacity
    tasks = [
        TaskState(
            task_id=j,
            position=task_positions[j].copy(),
            speed=float(task_speeds[j]),
            heading=float(task_headings[j]),
            capacity=capacity,
        )
        for j in range(m)
    ]
    robots = [
        RobotState(robot_id=i, position=robot_positions[i].copy(), speed=float(robot_speeds[i]))
        for i in range(n)
    ]

    return WorldState(
        t=0,
        tau=config.tau_s,
        tasks=tasks,
        robots=robots,
        reward_matrix=reward_matrix,
        d_bind=config.d_bind,
        max_steps=config.max_steps,
        rng=rng,
        config=config,
    )


def _sync_bound_robots(world: WorldState) -> None:
    for robot in world.robots:
        if not robot.free:
            robot.position = world.tasks[robot.target].position.copy()


def step_tasks(world: WorldState) -> WorldState:
    """Advance every task one interval, reflect at the edges, re-sample headings."""
    for task in world.tasks:
        stride = task.speed * world.tau
        moved = task.position + stride * np.array([math.cos(task.heading), math.sin(task.heading)])
        task.position = reflect_unit(moved)
        task.heading = float(world.rng.uniform(-math.pi, math.pi))
    _sync_bound_robots(world)
    return world


def _check_actions(world: WorldState, actions: Sequence[Optional[Action]]) -> None:
    if len(actions) != world.n_robots:
        raise ActionError(f"Expected {world.n_robots} actions, got {len(actions)}")
    for robot, action in zip(world.robots, actions):
        if action is None:
            if robot.free:
                raise ActionError(f"Free robot {robot.robot_id} has no action")
            continue
        if not 0 <= action.task_index < world.n_tasks:
            raise ActionError(
                f"Robot {robot.robot_id}: task_index {action.task_index} outside [0, {world.n_tasks})"
            )


def step_robots(world: WorldState, actions: Sequence[Optional[Action]]) -> WorldState:
    """
    Move every free robot one stride toward its chosen task, then bind.

    Bound robots ignore their action and stay on their task. The bind events
    of this step are left in `world.last_bind_events`.
    """
    _check_actions(world, actions)

    for robot, action in zip(world.robots, actions):
        if not robot.free:
            continue
        robot.target = action.task_index
        delta = world.tasks[robot.target].position - robot.position
        distance = float(np.hypot(delta[0], delta[1]))
        if distance > ZERO_DISTANCE:
            robot.heading = math.atan2(delta[1], delta[0])
        stride = robot.speed * world.tau
        robot.position = robot.position + stride * np.array(
            [math.cos(robot.heading), math.sin(robot.heading)]
        )
        robot.accumulated_cost += stride

    world.last_bind_events = bind_robots(world)
    _sync_bound_robots(world)
    return world


def bind_robots(world: WorldState) -> List[BindEvent]:
    """Bind free robots within d_bind of their target, in ascending robot id."""
    events: List[BindEvent] = []
    for robot in world.robots:
        if not robot.free or robot.target is None:
            continue
        task = world.tasks[robot.target]
        if np.hypot(*(task.position - robot.position)) > world.d_bind:
            continue
        got_final_reward = task.bound_count < task.capacity
        task.bound_count += 1
        robot.status = 0
        robot.bind_time = world.t
        robot.rewarded = got_final_reward
        robot.position = task.position.copy()
        events.append((robot.robot_id, task.task_id, got_final_reward))
    return events


def reward_components(
    world_before: WorldState,
    actions: Sequence[Optional[Action]],
    bind_events: Sequence[BindEvent],
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Return the (step penalty, capacity term, final reward) vectors.

    The capacity term follows `config.step_reward`: "overload" charges a free
    robot only while its chosen task holds more robots than its capacity,
    "gap" pays the remaining slack on every free step.
    """
    config = world_before.config
    n = world_before.n_robots
    r_dis = np.zeros(n)
    r_step = np.zeros(n)
    r_final = np.zeros(n)
    rewarded = {robot_id: got for robot_id, _, got in bind_events}

    for robot in world_before.robots:
        if not robot.free:
            continue
        i = robot.robot_id
        j = actions[i].task_index
        task = world_before.tasks[j]
        r_dis[i] = -config.phi2_mag
        slack = task.capacity - task.bound_count
        r_step[i] = config.phi3 * (min(0, slack) if config.step_reward == "overload" else slack)
        if rewarded.get(i, False):
            r_final[i] = config.phi1 * world_before.reward_matrix[i, j]
    return r_dis, r_step, r_final


def compute_rewards(
    world_before: WorldState,
    actions: Sequence[Optional[Action]],
    bind_events: Sequence[BindEvent],
) -> np.ndarray:
    r_dis, r_step, r_final = reward_components(world_before, actions, bind_events)
    return r_dis + r_step + r_final


def build_observations(
    world: WorldState,
    robot_ids: Sequence[int],
    neighbor_lists: Sequence[Sequence[int]],
) -> List[Observation]:
    """Local views of several robots, each given its neighbours sorted by distance."""
    alpha_max = world.config.alpha_max
    m = world.n_tasks
    ids = np.asarray(robot_ids, dtype=int)
    k = len(ids)

    positions = world.robot_positions()
    speeds = np.array([r.speed for r in world.robots], dtype=float)
    headings = np.array([r.heading for r in world.robots], dtype=float)
    status = np.array([r.status for r in world.robots], dtype=float)
    previous = np.array([0.0 if r.target is None else r.target / m for r in world.robots])
    me_pos, me_speed, me_heading = positions[ids], speeds[ids], headings[ids]

    self_block = np.column_stack([me_pos[:, 0], me_pos[:, 1], me_speed, me_heading, status[ids]])

    task_pos = world.task_positions()
    task_block = np.empty((k, m, 6))
    task_block[:, :, 0] = task_pos[None, :, 0] - me_pos[:, None, 0]
    task_block[:, :, 1] = task_pos[None, :, 1] - me_pos[:, None, 1]
    task_block[:, :, 2] = np.array([t.speed for t in world.tasks])[None, :] - me_speed[:, None]
    task_block[:, :, 3] = wrap_angle(np.array([t.heading for t in world.tasks])[None, :] - me_heading[:, None])
    task_block[:, :, 4] = world.bound_counts()[None, :]
    task_block[:, :, 5] = world.reward_matrix[ids]

    slots = np.full((k, alpha_max), -1, dtype=int)
    for row, neighbor_ids in enumerate(neighbor_lists):
        chosen = list(neighbor_ids)[:alpha_max]
        slots[row, : len(chosen)] = chosen
    mask = slots >= 0
    other = np.where(mask, slots, 0)
    neighbor_block = np.zeros((k, alpha_max, 5))
    neighbor_block[:, :, 0] = positions[other, 0] - me_pos[:, None, 0]
    neighbor_block[:, :, 1] = positions[other, 1] - me_pos[:, None, 1]
    neighbor_block[:, :, 2] = speeds[other] - me_speed[:, None]
    neighbor_block[:, :, 3] = wrap_angle(headings[other] - me_heading[:, None])
    neighbor_block[:, :, 4] = previous[other]
    neighbor_block[~mask] = 0.0

    return [
        Observation(
            self_block=self_block[row],
            task_block=task_block[row],
            neighbor_block=neighbor_block[row],
            mask=mask[row].astype(float),
        )
        for row in range(k)
    ]


def build_observation(world: WorldState, robot_id: int, neighbor_ids: Sequence[int]) -> Observation:
    """Local view of `robot_id` given its neighbours sorted by distance."""
    return build_observations(world, [robot_id], [neighbor_ids])[0]


def observe(world: WorldState) -> Tuple[List[RelatedSet], List[Observation]]:
    """Neighbour sets and observations of every robot at the current step."""
    neighbors = neighbor_sets(world, world.config.alpha_max)
    observations = build_observations(world, [rel.robot_id for rel in neighbors], [rel.neighbors for rel in neighbors])
    return neighbors, observations


def is_done(world: WorldState) -> bool:
    return world.t >= world.max_steps or not any(r.free for r in world.robots)


def step(world: WorldState, actions: Sequence[Optional[Action]]) -> StepOutcome:
    """One decision interval: move and bind robots, move tasks, score, observe."""
    before = world.snapshot()
    world.t += 1
    step_robots(world, actions)
    events = world.last_bind_events
    step_tasks(world)
    rewards = compute_rewards(before, actions, events)
    neighbors, observations = observe(world)
    if events:
        logger.debug("t=%d bind events %s", world.t, events)
    return StepOutcome(
        rewards=rewards,
        next_observations=observations,
        newly_bound=list(events),
        done=is_done(world),
        next_neighbors=neighbors,
    )


def episode_utilities(world: WorldState) -> np.ndarray:
    """Final reward for rewarded bindings minus movement cost, per robot."""
    utilities = np.zeros(world.n_robots)
    for robot in world.robots:
        gain = world.reward_matrix[robot.robot_id, robot.target] if robot.rewarded else 0.0
        utilities[robot.robot_id] = gain - robot.accumulated_cost
    return utilities


def bind_times(world: WorldState) -> np.ndarray:
    horizon = world.max_steps
    return np.array([horizon if r.bind_time is None else r.bind_time for r in world.robots], dtype=int)


def episode_result(world: WorldState) -> EpisodeResult:
    return EpisodeResult(
        utilities=episode_utilities(world),
        bind_times=bind_times(world),
        rewarded=np.array([r.rewarded for r in world.robots], dtype=bool),
        steps=world.t,
        max_steps=world.max_steps,
    )


def greedy_assignment_value(reward_matrix: np.ndarray, capacities: Sequence[int]) -> float:
    """
    Total final reward of the descending-reward greedy assignment.

    Pairs are taken in descending reward; each robot is used once and each
    task at most `capacities[j]` times. Movement cost is ignored. This is a
    feasible assignment, so it never exceeds `utility_upper_bound`.
    """
    reward_matrix = np.asarray(reward_matrix, dtype=float)
    n, m = reward_matrix.shape
    order = np.argsort(-reward_matrix, axis=None, kind="stable")
    remaining = np.array(capacities, dtype=int).copy()
    used = np.zeros(n, dtype=bool)
    total = 0.0
    assigned = 0
    for flat in order:
        i, j = divmod(int(flat), m)
        if used[i] or remaining[j] <= 0:
            continue
        used[i] = True
        remaining[j] -= 1
        total += reward_matrix[i, j]
        assigned += 1
        if assigned == n:
            break
    return float(total)


def utility_upper_bound(reward_matrix: np.ndarray, capacities: Sequence[int]) -> float:
    """
    Best total final reward any capacity-respecting assignment can collect.

    Each task column is repeated once per slot and the robot-to-slot
    assignment is solved exactly. Movement cost is ignored, so no episode
    can exceed this value.
    """
    reward_matrix = np.asarray(reward_matrix, dtype=float)
    slots = np.repeat(np.arange(reward_matrix.shape[1]), np.asarray(capacities, dtype=int))
    if slots.size == 0:
        return 0.0
    expanded = reward_matrix[:, slots]
    rows, cols = linear_sum_assignment(expanded, maximize=True)
    return float(expanded[rows, cols].sum())

from typing import Sequence, Tuple

import numpy as np
import pytest

from world.config import WorldConfig
from world.rng import make_stream
from world.types import RobotState, TaskState, WorldState


RobotSpec = Tuple[Tuple[float, float], float]
TaskSpec = Tuple[Tuple[float, float], float, float, int]


def build_world(
    robots: Sequence[RobotSpec],
    tasks: Sequence[TaskSpec],
    rewards,
    max_steps: int = 150,
    alpha_max: int = 1,
    seed: int = 0,
    **overrides,
) -> WorldState:
    """
    Hand-placed world in normalized units.

    robots: ((x, y), speed) with speed in arena units per second.
    tasks: ((x, y), speed, heading, capacity).
    """
    config = WorldConfig(
        n_robots=len(robots),
        n_tasks=len(tasks),
        alpha_max=alpha_max,
        max_steps=max_steps,
        seed=seed,
        **overrides,
    )
    return WorldState(
        t=0,
        tau=config.tau_s,
        tasks=[
            TaskState(task_id=j, position=np.array(pos, dtype=float), speed=speed, heading=heading, capacity=cap)
            for j, (pos, speed, heading, cap) in enumerate(tasks)
        ],
        robots=[
            RobotState(robot_id=i, position=np.array(pos, dtype=float), speed=speed)
            for i, (pos, speed) in enumerate(robots)
        ],
        reward_matrix=np.array(rewards, dtype=float),
        d_bind=config.d_bind,
        max_steps=max_steps,
        rng=make_stream(seed, "world"),
        config=config,
    )


@pytest.fixture
def world_factory():
    return build_world


@pytest.fixture
def desk_config() -> WorldConfig:
    return WorldConfig(n_robots=6, n_tasks=2, alpha_max=2, max_steps=20)

"""
Shared types for the swarm world.
"""

from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from world.config import WorldConfig


@dataclass
class TaskState:
    """A moving task. Position in normalized arena units, speed in units/s."""
    task_id: int
    position: np.ndarray
    speed: float
    heading: float
    capacity: int
    bound_count: int = 0


@dataclass
class RobotState:
    """A robot. status is 1 while free and 0 once bound to its target."""
    robot_id: int
    position: np.ndarray
    speed: float
    heading: float = 0.0
    status: int = 1
    target: Optional[int] = None
    bind_time: Optional[int] = None
    accumulated_cost: float = 0.0
    rewarded: bool = False  # bound while its task still had a free slot

    @property
    def free(self) -> bool:
        return self.status == 1


@dataclass
class WorldState:
    t: int
    tau: float
    tasks: List[TaskState]
    robots: List[RobotState]
    reward_matrix: np.ndarray
    d_bind: float
    max_steps: int
    rng: np.random.Generator
    config: WorldConfig
    last_bind_events: List["BindEvent"] = field(default_factory=list)

    @property
    def n_robots(self) -> int:
        return len(self.robots)

    @property
    def n_tasks(self) -> int:
        return len(self.tasks)

    def robot_positions(self) -> np.ndarray:
        return np.array([r.position for r in self.robots], dtype=float).reshape(-1, 2)

    def task_positions(self) -> np.ndarray:
        return np.array([t.position for t in self.tasks], dtype=float).reshape(-1, 2)

    def bound_counts(self) -> np.ndarray:
        return np.array([t.bound_count for t in self.tasks], dtype=int)

    def capacities(self) -> np.ndarray:
        return np.array([t.capacity for t in self.tasks], dtype=int)

    def free_mask(self) -> np.ndarray:
        return np.array([r.free for r in self.robots], dtype=bool)

    def snapshot(self) -> "WorldState":
        """Copy of every task and robot; the random stream is shared, not copied."""
        return replace(
            self,
            tasks=[replace(t, position=t.position.copy()) for t in self.tasks],
            robots=[replace(r, position=r.position.copy()) for r in self.robots],
            reward_matrix=self.reward_matrix.copy(),
            last_bind_events=list(self.last_bind_events),
        )

    def clone(self) -> "WorldState":
        """Independent copy including the random stream state."""
        copy = self.snapshot()
        rng = np.random.default_rng()
        rng.bit_generator.state = self.rng.bit_generator.state
        copy.rng = rng
        return copy


@dataclass
class Observation:
    """Fixed-width local view of one robot."""
    self_block: np.ndarray  # (5,)
    task_block: np.ndarray  # (M, 6)
    neighbor_block: np.ndarray  # (alpha_max, 5)
    mask: np.ndarray  # (alpha_max,)

    @property
    def dim(self) -> int:
        return self.self_block.size + self.task_block.size + self.neighbor_block.size + self.mask.size

    def vector(self) -> np.ndarray:
        return np.concatenate(
            [
                self.self_block,
                self.task_block.ravel(),
                self.neighbor_block.ravel(),
                self.mask.astype(float),
            ]
        )


@dataclass(frozen=True)
class Action:
    task_index: int
    distribution: np.ndarray

    @classmethod
    def from_distribution(cls, distribution: np.ndarray) -> "Action":
        distribution = np.asarray(distribution, dtype=float)
        return cls(task_index=int(np.argmax(distribution)), distribution=distribution)

    @classmethod
    def one_hot(cls, task_index: int, n_tasks: int) -> "Action":
        distribution = np.zeros(n_tasks)
        distribution[task_index] = 1.0
        return cls(task_index=int(task_index), distribution=distribution)


BindEvent = Tuple[int, int, bool]


@dataclass
class StepOutcome:
    rewards: np.ndarray
    next_observations: List[Observation]
    newly_bound: List[BindEvent]
    done: bool
    next_neighbors: list = field(default_factory=list)  # RelatedSets behind next_observations


@dataclass
class EpisodeResult:
    """Per-robot outcome of one finished rollout."""
    utilities: np.ndarray
    bind_times: np.ndarray  # horizon length for robots that never bound
    rewarded: np.ndarray
    steps: int
    max_steps: int

    @property
    def total_utility(self) -> float:
        return float(np.sum(self.utilities))

    @property
    def mean_utility(self) -> float:
        return float(np.mean(self.utilities))

"""
Experience replay for the shared actor and critic.

Each record is one joint environment step. Training draws records and then
reads the rows of a single robot, so the same buffer serves the per-robot
update loop.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np


class BufferNotReady(Exception):
    """Raised when fewer records are stored than a batch needs."""
    pass


@dataclass
class TransitionRecord:
    observations: np.ndarray  # (N, obs_dim)
    actions: np.ndarray  # (N, M) simplex rows
    agg_obs: np.ndarray  # (N, obs_dim)
    agg_act: np.ndarray  # (N, M)
    rewards: np.ndarray  # (N,)
    next_observations: np.ndarray  # (N, obs_dim)
    next_neighbors: List[List[int]]  # neighbour ids per robot at t+1
    next_distances: np.ndarray  # (N, N) robot distances at t+1
    next_locked: np.ndarray  # (N,) task of robots bound at t+1, -1 while free
    done: np.ndarray  # (N,) robot bound at this step
    active: np.ndarray  # (N,) robot free when the step began

    @property
    def n_robots(self) -> int:
        return self.observations.shape[0]


class ReplayBuffer:
    """Fixed-capacity ring; the oldest record is evicted first."""

    def __init__(self, capacity: int = 5000, priority_eps: float = 1e-3, prioritized: bool = False):
        self.capacity = capacity
        self.priority_eps = priority_eps
        self.prioritized = prioritized
        self._records: List[Optional[TransitionRecord]] = [None] * capacity
        self._priorities = np.zeros(capacity)
        self._next = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def _slot(self, index: int) -> int:
        """Ring slot of the index-th oldest record."""
        if not 0 <= index < self._size:
            raise IndexError(index)
        start = (self._next - self._size) % self.capacity
        return (start + index) % self.capacity

    def __getitem__(self, index: int) -> TransitionRecord:
        return self._records[self._slot(index)]

    def records(self) -> List[TransitionRecord]:
        return [self[i] for i in range(self._size)]

    @property
    def max_priority(self) -> float:
        if self._size == 0:
            return 1.0
        return float(max(1.0, self._priorities[: self._size].max()))

    def priorities(self) -> np.ndarray:
        """Stored priorities, oldest record first."""
        start = (self._next - self._size) % self.capacity
        return self._priorities[(start + np.arange(self._size)) % self.capacity]

    def add(self, record: TransitionRecord) -> None:
        """New records enter at the current maximum priority, or 1 without prioritization."""
        priority = self.max_priority if self.prioritized else 1.0
        self._records[self._next] = record
        self._priorities[self._next] = priority
        self._next = (self._next + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def set_priority(self, index: int, priority: float) -> None:
        self._priorities[self._slot(index)] = priority

    def update_priorities(self, indices: Sequence[int], td_errors: Sequence[float]) -> None:
        """Store |TD error| + eps; a record drawn twice keeps its larger error."""
        latest = {}
        for index, error in zip(indices, td_errors):
            latest[int(index)] = max(latest.get(int(index), 0.0), abs(float(error)))
        for index, error in latest.items():
            self.set_priority(index, error + self.priority_eps)


@dataclass
class Batch:
    indices: np.ndarray
    records: List[TransitionRecord]


@dataclass
class RobotRows:
    """One robot's view of a batch, restricted to steps where it was free."""
    robot_id: int
    indices: np.ndarray
    records: List[TransitionRecord]
    observations: np.ndarray
    actions: np.ndarray
    agg_obs: np.ndarray
    agg_act: np.ndarray
    rewards: np.ndarray
    done: np.ndarray

    def __len__(self) -> int:
        return len(self.records)


def sample_batch(buffer: ReplayBuffer, batch_size: int, priority: bool, rng: np.random.Generator) -> Batch:
    """Uniform draw with replacement, or proportional to stored priorities."""
    size = len(buffer)
    if size < batch_size:
        raise BufferNotReady(f"Buffer holds {size} records, batch needs {batch_size}")
    if priority:
        weights = buffer.priorities()
        indices = rng.choice(size, size=batch_size, replace=True, p=weights / weights.sum())
    else:
        indices = rng.integers(0, size, size=batch_size)
    return Batch(indices=np.asarray(indices), records=[buffer[int(i)] for i in indices])


def robot_rows(batch: Batch, robot_id: int) -> RobotRows:
    keep = [k for k, rec in enumerate(batch.records) if rec.active[robot_id]]
    records = [batch.records[k] for k in keep]

    def stack(attr: str) -> np.ndarray:
        if not records:
            return np.zeros((0,))
        return np.stack([getattr(rec, attr)[robot_id] for rec in records])

    return RobotRows(
        robot_id=robot_id,
        indices=batch.indices[keep] if keep else np.zeros(0, dtype=int),
        records=records,
        observations=stack("observations"),
        actions=stack("actions"),
        agg_obs=stack("agg_obs"),
        agg_act=stack("agg_act"),
        rewards=stack("rewards"),
        done=stack("done"),
    )

"""
Perception graph: who each robot sees and who it competes with.

Neighbour sets are the k nearest other robots (k = alpha_max); same-action
sets collect every other robot that picked the same task this step.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, TYPE_CHECKING

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

if TYPE_CHECKING:
    from world.types import WorldState


# Swarms up to this size use a dense distance matrix instead of a KD-tree.
DENSE_LIMIT = 256


@dataclass
class RelatedSet:
    robot_id: int
    neighbors: List[int] = field(default_factory=list)
    same_action: List[int] = field(default_factory=list)
    distances: Dict[int, float] = field(default_factory=dict)

    @property
    def members(self) -> List[int]:
        """Union of neighbours and same-action robots, ascending id."""
        return sorted(set(self.neighbors) | set(self.same_action))


def distance_matrix(positions: np.ndarray) -> np.ndarray:
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    return cdist(positions, positions)


def nearest_neighbors(positions: np.ndarray, k: int) -> List[List[int]]:
    """
    For every point, the ids of the k nearest other points.

    Ordered by ascending distance with ties broken by lower id. The k-th
    distance is found with a tree query and every point inside that radius
    is then re-sorted, so ties at the cut-off resolve by id as well. Small
    swarms sort a dense distance matrix with the same ordering.
    """
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    n = positions.shape[0]
    k = min(k, n - 1)
    if k <= 0:
        return [[] for _ in range(n)]
    if n <= DENSE_LIMIT:
        gaps = positions[None, :, :] - positions[:, None, :]
        dists = np.hypot(gaps[..., 0], gaps[..., 1])
        np.fill_diagonal(dists, np.inf)
        # stable sort keeps equal distances in ascending id
        return np.argsort(dists, axis=1, kind="stable")[:, :k].tolist()

    tree = cKDTree(positions)
    dists, _ = tree.query(positions, k=k + 1)
    dists = np.asarray(dists).reshape(n, k + 1)
    result: List[List[int]] = []
    for i in range(n):
        radius = float(np.max(dists[i]))
        candidates = [j for j in tree.query_ball_point(positions[i], r=radius * (1 + 1e-12) + 1e-15) if j != i]
        gaps = positions[candidates] - positions[i]
        cand_dists = np.hypot(gaps[:, 0], gaps[:, 1])
        order = sorted(range(len(candidates)), key=lambda c: (cand_dists[c], candidates[c]))
        result.append([candidates[c] for c in order[:k]])
    return result


def neighbor_sets(world: "WorldState", alpha_max: int) -> List[RelatedSet]:
    """Related sets with only the neighbour part filled."""
    positions = world.robot_positions()
    neighbors = nearest_neighbors(positions, alpha_max)
    sets = []
    for i, ids in enumerate(neighbors):
        gaps = positions[ids] - positions[i] if ids else np.zeros((0, 2))
        distances = {j: float(d) for j, d in zip(ids, np.hypot(gaps[:, 0], gaps[:, 1]))}
        sets.append(RelatedSet(robot_id=i, neighbors=list(ids), distances=distances))
    return sets


def related_sets(
    neighbors: Sequence[RelatedSet],
    task_indices: Sequence[int],
    distances: np.ndarray,
) -> List[RelatedSet]:
    """
    Fill the same-action part of every related set.

    `task_indices[i]` is robot i's chosen task and `distances` the full
    robot-to-robot distance matrix; same-action members are not capped.
    """
    task_indices = np.asarray(task_indices, dtype=int)
    filled = []
    for rel in neighbors:
        i = rel.robot_id
        same = [int(k) for k in np.flatnonzero(task_indices == task_indices[i]) if k != i]
        members = set(rel.neighbors) | set(same)
        filled.append(
            RelatedSet(
                robot_id=i,
                neighbors=list(rel.neighbors),
                same_action=same,
                distances={k: float(distances[i, k]) for k in sorted(members)},
            )
        )
    return filled

"""
Local information aggregation.

Observations and action distributions of a robot's related set are mixed
with distance-dependent simplex weights w_k = d_k^beta / sum_m d_m^beta,
which turns a variable-size neighbourhood into a fixed-width vector.
"""

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from perception.graph import RelatedSet


D_MIN = 1e-6
DEFAULT_BETA = -1.0


class EmptyRelatedSetError(Exception):
    """Raised when weights are requested for an empty related set."""
    pass


@dataclass
class AggregatedInfo:
    agg_obs: np.ndarray
    agg_act: np.ndarray


def lia_weights(distances: Sequence[float], beta: float = DEFAULT_BETA) -> np.ndarray:
    distances = np.asarray(distances, dtype=float)
    if distances.size == 0:
        raise EmptyRelatedSetError("No related robots to weigh")
    logits = beta * np.log(np.maximum(distances, D_MIN))
    logits -= logits.max()
    weights = np.exp(logits)
    return weights / weights.sum()


def aggregate(
    related: RelatedSet,
    observations: np.ndarray,
    distributions: np.ndarray,
    beta: float = DEFAULT_BETA,
) -> AggregatedInfo:
    """
    Weighted mix of the members' observation rows and action rows.

    Members are summed in ascending id, so the result does not depend on
    the order the set was built in. An empty set yields zero vectors.
    """
    observations = np.asarray(observations, dtype=float)
    distributions = np.asarray(distributions, dtype=float)
    members = [k for k in related.members if k != related.robot_id]
    if not members:
        return AggregatedInfo(
            agg_obs=np.zeros(observations.shape[1]),
            agg_act=np.zeros(distributions.shape[1]),
        )
    weights = lia_weights([related.distances[k] for k in members], beta)
    return AggregatedInfo(
        agg_obs=weights @ observations[members],
        agg_act=weights @ distributions[members],
    )


def aggregate_rows(
    members: np.ndarray,
    distances: np.ndarray,
    observations: np.ndarray,
    distributions: np.ndarray,
    beta: float = DEFAULT_BETA,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    `aggregate` for many robots at once.

    Row b mixes the rows of observations[b] and distributions[b] whose
    `members[b]` flag is set, weighted by `distances[b]`. Rows without
    members give zeros. Shapes: members and distances (B, N), observations
    (B, N, D), distributions (B, N, M).
    """
    members = np.asarray(members, dtype=bool)
    logits = np.where(members, beta * np.log(np.maximum(distances, D_MIN)), -np.inf)
    has_members = members.any(axis=1)
    peak = np.where(has_members, logits.max(axis=1), 0.0)
    weights = np.where(members, np.exp(logits - peak[:, None]), 0.0)
    totals = weights.sum(axis=1, keepdims=True)
    weights = np.divide(weights, totals, out=np.zeros_like(weights), where=totals > 0)
    agg_obs = np.einsum("bn,bnd->bd", weights, observations)
    agg_act = np.einsum("bn,bnm->bm", weights, distributions)
    return agg_obs, agg_act


def membership(related: Sequence[RelatedSet], n_robots: int) -> Tuple[np.ndarray, np.ndarray]:
    """(members, distances) arrays of shape (len(related), n_robots) for `aggregate_rows`."""
    members = np.zeros((len(related), n_robots), dtype=bool)
    distances = np.ones((len(related), n_robots))
    for row, rel in enumerate(related):
        for k in rel.members:
            if k != rel.robot_id:
                members[row, k] = True
                distances[row, k] = rel.distances[k]
    return members, distances

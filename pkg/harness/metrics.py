"""
Evaluation metrics: normalized total utility (NATU), normalized time cost
(NATC) and dominance rate (DR).
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from world.env import utility_upper_bound
from world.types import EpisodeResult, WorldState


logger = logging.getLogger(__name__)

NATU_WARN_LIMIT = 1.05
METRICS_HEADER = ("scenario_id", "policy", "total_utility", "natu_raw", "natu", "natc", "winner")


class MetricsError(Exception):
    """Raised when metrics cannot be computed from the given results."""
    pass


def natu_raw(episode: EpisodeResult, world0: WorldState) -> float:
    """Total utility over the best capacity-respecting reward assignment."""
    bound = utility_upper_bound(world0.reward_matrix, world0.capacities())
    if bound <= 0:
        raise MetricsError("Utility upper bound is zero; NATU is undefined")
    return episode.total_utility / bound


def natu(episode: EpisodeResult, world0: WorldState) -> float:
    """NATU clamped below at 0 for reporting."""
    raw = natu_raw(episode, world0)
    if raw < 0:
        logger.debug("NATU clamped to 0 (raw %.6f)", raw)
        return 0.0
    if raw > NATU_WARN_LIMIT:
        logger.warning("NATU %.4f exceeds %.2f", raw, NATU_WARN_LIMIT)
    return raw


def natc(episode: EpisodeResult, max_steps: Optional[int] = None) -> float:
    """Mean bind time over the horizon; robots that never bound count the full horizon."""
    horizon = episode.max_steps if max_steps is None else max_steps
    times = np.minimum(np.asarray(episode.bind_times, dtype=float), horizon)
    return float(np.mean(times) / horizon)


def scenario_winners(results: Mapping[str, Sequence[float]]) -> List[Optional[str]]:
    """Strictly best policy per scenario, None on a tie for the top."""
    policies = list(results)
    counts = {len(results[p]) for p in policies}
    if len(counts) > 1:
        raise MetricsError(
            "Policies cover different scenario counts: "
            + ", ".join(f"{p}={len(results[p])}" for p in policies)
        )
    if not policies:
        return []
    table = np.array([results[p] for p in policies], dtype=float)
    winners: List[Optional[str]] = []
    for column in table.T:
        best = column.max()
        leaders = np.flatnonzero(column == best)
        winners.append(policies[int(leaders[0])] if len(leaders) == 1 else None)
    return winners


def dominance_rate(results: Mapping[str, Sequence[float]]) -> Dict[str, float]:
    """Share of scenarios each policy wins outright."""
    winners = scenario_winners(results)
    total = len(winners)
    return {p: (sum(1 for w in winners if w == p) / total if total else 0.0) for p in results}


@dataclass
class ScenarioRow:
    scenario_id: int
    policy: str
    total_utility: float
    natu_raw: float
    natu: float
    natc: float
    winner: bool = False

    def as_tuple(self) -> tuple:
        return (
            self.scenario_id,
            self.policy,
            self.total_utility,
            self.natu_raw,
            self.natu,
            self.natc,
            self.winner,
        )


@dataclass
class PolicySummary:
    policy: str
    natu_mean: float
    natu_std: float
    natc_mean: float
    natc_std: float
    dr: float


@dataclass
class MetricsReport:
    rows: List[ScenarioRow] = field(default_factory=list)
    summaries: Dict[str, PolicySummary] = field(default_factory=dict)
    winners: Dict[int, Optional[str]] = field(default_factory=dict)

    @property
    def dominance(self) -> Dict[str, float]:
        return {p: s.dr for p, s in self.summaries.items()}

    def rows_for(self, policy: str) -> List[ScenarioRow]:
        return [r for r in self.rows if r.policy == policy]


def build_report(rows: Sequence[ScenarioRow], policies: Sequence[str]) -> MetricsReport:
    """Tag winners, sort rows by (scenario, policy order) and summarize per policy."""
    order = {p: k for k, p in enumerate(policies)}
    rows = sorted(rows, key=lambda r: (r.scenario_id, order[r.policy]))
    scenario_ids = sorted({r.scenario_id for r in rows})

    totals = {p: [] for p in policies}
    for sid in scenario_ids:
        by_policy = {r.policy: r for r in rows if r.scenario_id == sid}
        for p in policies:
            if p not in by_policy:
                raise MetricsError(f"Scenario {sid} has no result for policy {p}")
            totals[p].append(by_policy[p].total_utility)

    winners = dict(zip(scenario_ids, scenario_winners(totals)))
    for r in rows:
        r.winner = winners[r.scenario_id] == r.policy
    dr = dominance_rate(totals)

    summaries = {}
    for p in policies:
        mine = [r for r in rows if r.policy == p]
        natus = np.array([r.natu for r in mine], dtype=float)
        natcs = np.array([r.natc for r in mine], dtype=float)
        summaries[p] = PolicySummary(
            policy=p,
            natu_mean=float(natus.mean()) if len(mine) else 0.0,
            natu_std=float(natus.std()) if len(mine) else 0.0,
            natc_mean=float(natcs.mean()) if len(mine) else 0.0,
            natc_std=float(natcs.std()) if len(mine) else 0.0,
            dr=dr[p],
        )
    return MetricsReport(rows=list(rows), summaries=summaries, winners=winners)


def summary_text(report: MetricsReport) -> str:
    lines = ["policy natu_mean natu_std natc_mean natc_std dr"]
    for s in report.summaries.values():
        lines.append(
            f"{s.policy} {s.natu_mean:.6f} {s.natu_std:.6f} {s.natc_mean:.6f} {s.natc_std:.6f} {s.dr:.6f}"
        )
    return "\n".join(lines) + "\n"

"""
JSON-lines episode traces: one record per decision interval.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

from world.types import Action, StepOutcome, WorldState


def _round(value: float) -> float:
    return round(float(value), 9)


def initial_record(world: WorldState) -> Dict:
    return {
        "t": world.t,
        "event": "init",
        "tasks": [
            {"id": t.task_id, "x": _round(t.position[0]), "y": _round(t.position[1]), "capacity": t.capacity}
            for t in world.tasks
        ],
        "robots": [
            {"id": r.robot_id, "x": _round(r.position[0]), "y": _round(r.position[1])}
            for r in world.robots
        ],
    }


def step_record(world: WorldState, actions: Sequence[Optional[Action]], outcome: StepOutcome) -> Dict:
    """State after a step, with the actions and rewards that produced it."""
    return {
        "t": world.t,
        "event": "step",
        "actions": [None if a is None else a.task_index for a in actions],
        "rewards": [_round(r) for r in outcome.rewards],
        "bound": [[i, j, bool(got)] for i, j, got in outcome.newly_bound],
        "tasks": [
            {"id": t.task_id, "x": _round(t.position[0]), "y": _round(t.position[1]), "bound": t.bound_count}
            for t in world.tasks
        ],
        "robots": [
            {
                "id": r.robot_id,
                "x": _round(r.position[0]),
                "y": _round(r.position[1]),
                "status": r.status,
                "target": r.target,
            }
            for r in world.robots
        ],
        "done": outcome.done,
    }


@dataclass
class TraceRecorder:
    records: List[Dict] = field(default_factory=list)

    def start(self, world: WorldState) -> None:
        self.records.append(initial_record(world))

    def __call__(self, world: WorldState, actions: Sequence[Optional[Action]], outcome: StepOutcome) -> None:
        self.records.append(step_record(world, actions, outcome))

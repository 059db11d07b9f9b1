"""
Evaluation scenario sets: pinned seeds so every policy starts from the same
initial worlds.
"""

from dataclasses import dataclass, field, replace
from typing import Iterator, List, Tuple

from world.config import ConfigError, WorldConfig
from world.env import init_world
from world.rng import make_stream
from world.types import WorldState


SCALES = {"small": 1, "medium": 2, "large": 3}


@dataclass(frozen=True)
class Scenario:
    scenario_id: int
    seed: int
    world: WorldConfig

    def build(self) -> WorldState:
        return init_world(self.world, self.seed)


@dataclass
class ScenarioSet:
    scale: str = "small"
    scenarios: List[Scenario] = field(default_factory=list)

    def __post_init__(self):
        seeds = [s.seed for s in self.scenarios]
        if len(set(seeds)) != len(seeds):
            raise ConfigError("Scenario seeds must be distinct")

    def __len__(self) -> int:
        return len(self.scenarios)

    def __iter__(self) -> Iterator[Scenario]:
        return iter(self.scenarios)

    def pairs(self) -> List[Tuple[int, WorldConfig]]:
        return [(s.seed, s.world) for s in self.scenarios]


def scaled_config(base: WorldConfig, scale: str) -> WorldConfig:
    """Multiply the robot count by the preset factor; M and alpha_max are kept."""
    if scale not in SCALES:
        raise ConfigError(f"Unknown scale {scale!r}; choose from {', '.join(SCALES)}")
    scaled = replace(base, n_robots=base.n_robots * SCALES[scale])
    scaled.validate()
    return scaled


def generate_scenarios(base: WorldConfig, count: int, seed: int, scale: str = "small") -> ScenarioSet:
    """`count` scenarios with distinct seeds drawn from the "scenarios" stream."""
    if count < 0:
        raise ConfigError(f"count must be >= 0, got {count}")
    world = scaled_config(base, scale)
    rng = make_stream(seed, "scenarios")
    seeds: List[int] = []
    taken = set()
    while len(seeds) < count:
        candidate = int(rng.integers(0, 2**31 - 1))
        if candidate not in taken:
            taken.add(candidate)
            seeds.append(candidate)
    return ScenarioSet(
        scale=scale,
        scenarios=[Scenario(scenario_id=k, seed=s, world=world) for k, s in enumerate(seeds)],
    )

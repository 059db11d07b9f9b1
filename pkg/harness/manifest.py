"""
Scenario manifests: JSON files that pin every evaluation seed and world
configuration so an evaluation can be repeated exactly.
"""

import json
from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict

from harness.scenarios import Scenario, ScenarioSet
from world.config import ConfigError, WorldConfig, field_names


MANIFEST_VERSION = 1


def manifest_dict(scenarios: ScenarioSet) -> Dict[str, Any]:
    return {
        "version": MANIFEST_VERSION,
        "scale": scenarios.scale,
        "scenarios": [
            {"scenario_id": s.scenario_id, "seed": s.seed, "world": asdict(s.world)}
            for s in scenarios
        ],
    }


def manifest_text(scenarios: ScenarioSet) -> str:
    return json.dumps(manifest_dict(scenarios), indent=2, sort_keys=True) + "\n"


def save_manifest(scenarios: ScenarioSet, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(manifest_text(scenarios))
    return path


def _world_from_dict(data: Dict[str, Any], source: str) -> WorldConfig:
    unknown = set(data) - field_names(WorldConfig)
    if unknown:
        raise ConfigError(f"{source}: unknown world keys {sorted(unknown)}")
    try:
        world = WorldConfig(**data)
    except TypeError as e:
        raise ConfigError(f"{source}: {e}") from None
    world.validate()
    return world


def load_manifest(path: Path) -> ScenarioSet:
    """Read a manifest written by `save_manifest`."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Scenario manifest not found: {path}")

    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON ({e.msg})") from None

    try:
        version = data["version"]
        if version != MANIFEST_VERSION:
            raise ConfigError(f"{path}: manifest version {version}, expected {MANIFEST_VERSION}")
        scenarios = [
            Scenario(
                scenario_id=int(entry["scenario_id"]),
                seed=int(entry["seed"]),
                world=_world_from_dict(entry["world"], str(path)),
            )
            for entry in data["scenarios"]
        ]
        return ScenarioSet(scale=str(data["scale"]), scenarios=scenarios)
    except (KeyError, TypeError) as e:
        raise ConfigError(f"{path}: malformed manifest ({e})") from None

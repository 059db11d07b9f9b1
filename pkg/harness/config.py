"""
The lab's single configuration file, routed into its world, trainer and
execution sections.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional

from agent.config import TrainerConfig
from policy.executor import ExecConfig
from world.config import (
    ConfigError,
    WorldConfig,
    build_section,
    field_names,
    parse_config_text,
    read_config_file,
)


SECTIONS = (WorldConfig, TrainerConfig, ExecConfig)


@dataclass(frozen=True)
class LabConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    execution: ExecConfig = field(default_factory=ExecConfig)


def _check_keys(values: Dict[str, str], source: str) -> None:
    known = set()
    for cls in SECTIONS:
        known |= field_names(cls)
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"{source}: unknown key(s) {', '.join(unknown)}")


def lab_config_from_values(values: Dict[str, str], source: str = "<config>") -> LabConfig:
    _check_keys(values, source)
    try:
        return LabConfig(
            world=build_section(WorldConfig, values),
            trainer=build_section(TrainerConfig, values),
            execution=build_section(ExecConfig, values),
        )
    except ConfigError as e:
        raise ConfigError(f"{source}: {e}") from None


def parse_lab_config(text: str, source: str = "<config>") -> LabConfig:
    return lab_config_from_values(parse_config_text(text, source), source)


def load_lab_config(path: Optional[Path] = None) -> LabConfig:
    """Defaults when no path is given, otherwise the file's values over the defaults."""
    if path is None:
        return LabConfig()
    return lab_config_from_values(read_config_file(path), str(path))

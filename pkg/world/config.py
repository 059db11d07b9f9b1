"""
World configuration and the plain-text `key = value` format shared by every
configuration section of the lab.
"""

import math
from dataclasses import dataclass, fields, MISSING
from pathlib import Path
from typing import Any, Dict, Type, TypeVar


T = TypeVar("T")

_TRUE = {"true", "1", "yes", "on"}
_FALSE = {"false", "0", "no", "off"}

# overload: phi3 * min(0, capacity - bound), paid only while a task is over capacity
# gap: phi3 * (capacity - bound) on every free step
STEP_REWARDS = ("overload", "gap")


class ConfigError(Exception):
    """Raised for unreadable, unknown or out-of-range configuration values."""
    pass


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, str]:
    """
    Parse `key = value` lines into a dict of raw strings.

    Blank lines and `#` comments are ignored; a repeated key is an error.
    """
    values: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def read_config_file(path: Path) -> Dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")
    return parse_config_text(path.read_text(encoding="utf-8"), source=str(path))


def _coerce(key: str, raw: str, default: Any) -> Any:
    if isinstance(default, bool):
        lowered = raw.lower()
        if lowered in _TRUE:
            return True
        if lowered in _FALSE:
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
    if isinstance(default, tuple):
        try:
            return tuple(int(part) for part in raw.split(",") if part.strip())
        except ValueError:
            raise ConfigError(f"{key}: expected comma-separated integers, got {raw!r}") from None
    return raw


def field_names(cls: type) -> set:
    return {f.name for f in fields(cls)}


def build_section(cls: Type[T], values: Dict[str, str]) -> T:
    """
    Build a config dataclass from the raw values whose keys it declares.

    Keys the dataclass does not declare are left for other sections.
    """
    kwargs: Dict[str, Any] = {}
    for f in fields(cls):
        if f.name not in values:
            continue
        default = f.default if f.default is not MISSING else f.default_factory()  # type: ignore[misc]
        kwargs[f.name] = _coerce(f.name, values[f.name], default)
    section = cls(**kwargs)
    validate = getattr(section, "validate", None)
    if validate is not None:
        validate()
    return section


@dataclass(frozen=True)
class WorldConfig:
    """Arena, swarm and reward parameters. Lengths in metres, speeds in m/s."""
    n_robots: int = 30
    n_tasks: int = 5
    arena_side_m: float = 1000.0
    tau_s: float = 1.0
    robot_speed_min: float = 2.0
    robot_speed_max: float = 5.0
    task_speed_min: float = 0.5
    task_speed_max: float = 1.0
    d_bind_m: float = 30.0
    alpha_max: int = 10
    max_steps: int = 150
    phi1: float = 10.0
    phi2_mag: float = 0.001
    phi3: float = 1.0
    beta: float = -1.0
    step_reward: str = "overload"
    seed: int = 0

    def validate(self) -> None:
        if self.n_robots < 1:
            raise ConfigError(f"n_robots must be >= 1, got {self.n_robots}")
        if self.n_tasks < 1:
            raise ConfigError(f"n_tasks must be >= 1, got {self.n_tasks}")
        if self.alpha_max < 0:
            raise ConfigError(f"alpha_max must be >= 0, got {self.alpha_max}")
        if self.max_steps < 1:
            raise ConfigError(f"max_steps must be >= 1, got {self.max_steps}")
        for name in ("arena_side_m", "tau_s", "robot_speed_min", "robot_speed_max", "d_bind_m"):
            value = getattr(self, name)
            if not value > 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if self.task_speed_min < 0 or self.task_speed_max < 0:
            raise ConfigError("task speeds must be non-negative")
        if self.robot_speed_min > self.robot_speed_max:
            raise ConfigError("robot_speed_min exceeds robot_speed_max")
        if self.task_speed_min > self.task_speed_max:
            raise ConfigError("task_speed_min exceeds task_speed_max")
        if self.phi2_mag < 0:
            raise ConfigError("phi2_mag is a magnitude and must be >= 0")
        if self.step_reward not in STEP_REWARDS:
            raise ConfigError(f"step_reward must be one of {sorted(STEP_REWARDS)}, got {self.step_reward!r}")

    @property
    def capacity(self) -> int:
        return math.ceil(self.n_robots / self.n_tasks)

    @property
    def d_bind(self) -> float:
        """Association distance in normalized arena units."""
        return self.d_bind_m / self.arena_side_m

    @property
    def obs_dim(self) -> int:
        return observation_dim(self.n_tasks, self.alpha_max)


def observation_dim(n_tasks: int, alpha_max: int) -> int:
    return 5 + 6 * n_tasks + 5 * alpha_max + alpha_max

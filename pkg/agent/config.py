"""
Hyperparameters of the centralized training phase.
"""

from dataclasses import dataclass
from typing import Tuple

from world.config import ConfigError


@dataclass(frozen=True)
class TrainerConfig:
    gamma: float = 0.99
    batch_size: int = 64
    actor_lr: float = 0.001
    critic_lr: float = 0.002
    eta: float = 0.01
    episodes: int = 3000
    buffer_capacity: int = 5000
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_fraction: float = 0.5
    priority: bool = False
    priority_eps: float = 1e-3
    hidden_dims: Tuple[int, ...] = (128, 128)
    residual: bool = True
    batch_norm: bool = False
    use_lia: bool = True
    update_every: int = 1
    checkpoint_every: int = 0
    log_every: int = 10

    def validate(self) -> None:
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError(f"gamma must lie in (0, 1), got {self.gamma}")
        for name in ("eps_start", "eps_end", "eps_decay_fraction", "eta"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {value}")
        for name in ("batch_size", "buffer_capacity", "update_every", "log_every"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.episodes < 0 or self.checkpoint_every < 0:
            raise ConfigError("episodes and checkpoint_every must be >= 0")
        if self.actor_lr <= 0 or self.critic_lr <= 0:
            raise ConfigError("learning rates must be positive")
        if not self.hidden_dims:
            raise ConfigError("hidden_dims needs at least one layer")

    def epsilon_at(self, episode: int, total_episodes: int) -> float:
        """Linear decay from eps_start to eps_end over the first eps_decay_fraction of training."""
        horizon = self.eps_decay_fraction * total_episodes
        if horizon <= 0:
            return self.eps_end
        progress = min(1.0, episode / horizon)
        return self.eps_start + (self.eps_end - self.eps_start) * progress

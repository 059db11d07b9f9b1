"""
Centralized training of the shared actor and the extended-Q critic.

The critic scores robot i from (o_i, a_i, phi_i(o), phi_i(a)) only, where
phi_i mixes the observations and actions of i's locally related robots.
With `use_lia` off the critic sees (o_i, a_i) alone.
"""

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Tuple

import numpy as np

from agent.config import TrainerConfig
from agent.replay import (
    BufferNotReady,
    ReplayBuffer,
    RobotRows,
    robot_rows,
    sample_batch,
)
from agent.rollout import iter_transitions
from perception.aggregation import aggregate_rows
from tinynn.checkpoint import save_params
from tinynn.mlp import MlpSpec, NetworkParams, backward, commit_running_stats, forward, init_params
from tinynn.optim import AdamState, NumericalFault, adam_step, check_finite, soft_update
from world.config import WorldConfig
from world.env import episode_result, init_world, utility_upper_bound
from world.rng import derive_seed, make_stream


logger = logging.getLogger(__name__)


def actor_spec(world_config: WorldConfig, config: TrainerConfig) -> MlpSpec:
    return MlpSpec(
        input_dim=world_config.obs_dim,
        hidden_dims=config.hidden_dims,
        output_dim=world_config.n_tasks,
        residual=config.residual,
        batch_norm=config.batch_norm,
        output_head="softmax",
    )


def critic_input_dim(obs_dim: int, n_tasks: int, use_lia: bool = True) -> int:
    return 2 * (obs_dim + n_tasks) if use_lia else obs_dim + n_tasks


def critic_spec(world_config: WorldConfig, config: TrainerConfig) -> MlpSpec:
    return MlpSpec(
        input_dim=critic_input_dim(world_config.obs_dim, world_config.n_tasks, config.use_lia),
        hidden_dims=config.hidden_dims,
        output_dim=1,
        residual=False,
        batch_norm=False,
        output_head="linear",
    )


def critic_features(obs, act, agg_obs, agg_act, use_lia: bool = True) -> np.ndarray:
    """Critic input rows: own observation and action, then the aggregates."""
    parts = [obs, act, agg_obs, agg_act] if use_lia else [obs, act]
    return np.concatenate([np.atleast_2d(p) for p in parts], axis=1)


def next_actions(rows: RobotRows, next_distributions: np.ndarray) -> np.ndarray:
    """
    Joint actions a' at t+1.

    Free robots take the target actor's distribution; robots already bound
    at t+1 repeat the one-hot of their locked task, as in the rollout.
    """
    locked = np.stack([rec.next_locked for rec in rows.records])  # (B, N)
    actions = next_distributions.copy()
    batch_idx, robot_idx = np.nonzero(locked >= 0)
    actions[batch_idx, robot_idx, :] = 0.0
    actions[batch_idx, robot_idx, locked[batch_idx, robot_idx]] = 1.0
    return actions


def next_aggregates(
    rows: RobotRows,
    next_observations: np.ndarray,
    joint_actions: np.ndarray,
    beta: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    phi_i(o') and phi_i(a') for every row.

    Neighbours come from the stored next-step sets; same-action members are
    recomputed from the task indices of a'.
    """
    i = rows.robot_id
    choices = np.argmax(joint_actions, axis=2)
    members = choices == choices[:, i:i + 1]
    for row, rec in enumerate(rows.records):
        members[row, rec.next_neighbors[i]] = True
    members[:, i] = False
    distances = np.stack([rec.next_distances[i] for rec in rows.records])
    return aggregate_rows(members, distances, next_observations, joint_actions, beta)


def critic_target(
    rows: RobotRows,
    target_actor: NetworkParams,
    target_critic: NetworkParams,
    gamma: float,
    beta: float = -1.0,
    use_lia: bool = True,
) -> np.ndarray:
    """y = r + gamma * G'(o', a', phi(o'), phi(a')), and y = r where the robot bound."""
    if len(rows) == 0:
        return np.zeros(0)
    next_obs = np.stack([rec.next_observations for rec in rows.records])  # (B, N, D)
    b, n, d = next_obs.shape
    probs = forward(target_actor, next_obs.reshape(b * n, d), mode="eval")[0]
    joint = next_actions(rows, probs.reshape(b, n, -1))

    i = rows.robot_id
    own_obs = next_obs[:, i, :]
    own_act = joint[:, i, :]
    if use_lia:
        agg_obs, agg_act = next_aggregates(rows, next_obs, joint, beta)
    else:
        agg_obs = agg_act = None
    q_next = forward(target_critic, critic_features(own_obs, own_act, agg_obs, agg_act, use_lia), mode="eval")[0]
    not_done = 1.0 - rows.done.astype(float)
    return rows.rewards + gamma * not_done * q_next[:, 0]


def critic_update(
    rows: RobotRows,
    critic: NetworkParams,
    adam: AdamState,
    targets: np.ndarray,
    use_lia: bool = True,
):
    """One Adam step on mean (y - q)^2. Returns (critic, adam, loss, td_errors)."""
    features = critic_features(rows.observations, rows.actions, rows.agg_obs, rows.agg_act, use_lia)
    q, tape = forward(critic, features, mode="train")
    td = targets - q[:, 0]
    loss = float(np.mean(td ** 2))
    if not np.isfinite(loss):
        raise NumericalFault(f"Critic loss is {loss}")
    grad_q = (-2.0 * td / len(td))[:, None]
    grads, _ = backward(tape, grad_q, critic)
    critic = commit_running_stats(critic, tape)
    critic, adam = adam_step(critic, grads, adam)
    return critic, adam, loss, td


def actor_update(
    rows: RobotRows,
    actor: NetworkParams,
    adam: AdamState,
    critic: NetworkParams,
    use_lia: bool = True,
):
    """
    Ascend the critic along the actor's softmax output.

    The critic is held fixed; only its input gradient at the action columns
    is passed back into the actor. Returns (actor, adam).
    """
    obs_dim = rows.observations.shape[1]
    pi, actor_tape = forward(actor, rows.observations, mode="train")
    features = critic_features(rows.observations, pi, rows.agg_obs, rows.agg_act, use_lia)
    _, critic_tape = forward(critic, features, mode="eval")
    ones = np.full((len(rows), 1), 1.0 / len(rows))
    _, input_grad = backward(critic_tape, ones, critic)
    grad_pi = input_grad[:, obs_dim:obs_dim + pi.shape[1]]
    check_finite("actor action gradient", grad_pi)
    grads, _ = backward(actor_tape, grad_pi, actor)
    actor = commit_running_stats(actor, actor_tape)
    return adam_step(actor, -grads, adam)


@dataclass
class EpisodeLog:
    episode: int
    mean_utility: float
    normalized_utility: float
    critic_loss: float
    epsilon: float
    wall_ms: float


@dataclass
class TrainingLog:
    entries: List[EpisodeLog] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(e, name) for e in self.entries], dtype=float)


class LiaMaddpgTrainer:
    """Shared actor/critic pair, their targets, optimizers and the replay buffer."""

    def __init__(self, config: TrainerConfig, world_config: WorldConfig, seed: int):
        config.validate()
        world_config.validate()
        self.config = config
        self.world_config = world_config
        self.seed = seed

        init_rng = make_stream(seed, "init")
        self.actor = init_params(actor_spec(world_config, config), init_rng)
        self.critic = init_params(critic_spec(world_config, config), init_rng)
        self.target_actor = self.actor.copy()
        self.target_critic = self.critic.copy()
        self.actor_adam = AdamState.for_params(self.actor, config.actor_lr)
        self.critic_adam = AdamState.for_params(self.critic, config.critic_lr)

        self.buffer = ReplayBuffer(config.buffer_capacity, config.priority_eps, prioritized=config.priority)
        self.replay_rng = make_stream(seed, "replay")
        self.explore_rng = make_stream(seed, "exploration")
        self.episode_rng = make_stream(seed, "episodes")

    def update_robot(self, robot_id: int) -> Optional[float]:
        """Sample a fresh minibatch and update critic then actor on robot_id's rows."""
        cfg = self.config
        batch = sample_batch(self.buffer, cfg.batch_size, cfg.priority, self.replay_rng)
        rows = robot_rows(batch, robot_id)
        if len(rows) == 0:
            return None
        targets = critic_target(
            rows, self.target_actor, self.target_critic, cfg.gamma, self.world_config.beta, cfg.use_lia
        )
        self.critic, self.critic_adam, loss, td = critic_update(
            rows, self.critic, self.critic_adam, targets, cfg.use_lia
        )
        if cfg.priority:
            self.buffer.update_priorities(rows.indices, td)
        self.actor, self.actor_adam = actor_update(rows, self.actor, self.actor_adam, self.critic, cfg.use_lia)
        return loss

    def update_round(self) -> Optional[float]:
        """Per-robot sequential updates followed by one soft target update."""
        if len(self.buffer) < self.config.batch_size:
            return None
        losses = []
        for robot_id in range(self.world_config.n_robots):
            try:
                loss = self.update_robot(robot_id)
            except BufferNotReady:
                return None
            if loss is not None:
                losses.append(loss)
        self.soft_update_targets()
        return float(np.mean(losses)) if losses else None

    def soft_update_targets(self) -> None:
        eta = self.config.eta
        self.target_actor = soft_update(self.target_actor, self.actor, eta)
        self.target_critic = soft_update(self.target_critic, self.critic, eta)

    def run_episode(self, episode: int, total_episodes: int) -> EpisodeLog:
        started = time.perf_counter()
        epsilon = self.config.epsilon_at(episode, total_episodes)
        world = init_world(self.world_config, derive_seed(self.episode_rng))
        losses = []
        transitions = iter_transitions(world, lambda: self.actor, epsilon, self.explore_rng, self.world_config.beta)
        for step_index, record in enumerate(transitions, start=1):
            self.buffer.add(record)
            if step_index % self.config.update_every == 0:
                loss = self.update_round()
                if loss is not None:
                    losses.append(loss)

        result = episode_result(world)
        bound = utility_upper_bound(world.reward_matrix, world.capacities())
        return EpisodeLog(
            episode=episode,
            mean_utility=result.mean_utility,
            normalized_utility=result.total_utility / bound if bound > 0 else 0.0,
            critic_loss=float(np.mean(losses)) if losses else 0.0,
            epsilon=epsilon,
            wall_ms=(time.perf_counter() - started) * 1000.0,
        )

    def save(self, directory: Path, tag: str) -> Path:
        directory = Path(directory)
        save_params(self.critic, directory / f"critic_{tag}.tnn")
        return save_params(self.actor, directory / f"actor_{tag}.tnn")


def train(
    config: TrainerConfig,
    world_config: WorldConfig,
    seed: int,
    checkpoint_dir: Optional[Path] = None,
    on_episode: Optional[Callable[[EpisodeLog], None]] = None,
) -> Tuple[NetworkParams, TrainingLog]:
    """Train for config.episodes episodes and return the live actor and the log."""
    trainer = LiaMaddpgTrainer(config, world_config, seed)
    log = TrainingLog()
    total = config.episodes
    for episode in range(total):
        entry = trainer.run_episode(episode, total)
        log.entries.append(entry)
        if on_episode is not None:
            on_episode(entry)
        if (episode + 1) % config.log_every == 0:
            logger.info(
                "episode %d mean_utility=%.4f normalized=%.4f critic_loss=%.4f epsilon=%.3f",
                episode + 1,
                entry.mean_utility,
                entry.normalized_utility,
                entry.critic_loss,
                entry.epsilon,
            )
        if checkpoint_dir is not None and config.checkpoint_every and (episode + 1) % config.checkpoint_every == 0:
            path = trainer.save(checkpoint_dir, f"ep{episode + 1}")
            logger.debug("checkpoint written to %s", path)
    return trainer.actor, log

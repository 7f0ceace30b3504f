"""Rollout storage and generalized advantage estimation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["RolloutBuffer", "compute_gae", "normalize_advantages"]


@dataclass
class RolloutBuffer:
    """Time-major storage for ``N`` actors over ``T`` steps.

    Per-step arrays are shaped ``(T, N)`` (observations ``(T, N, obs_dim)``).
    ``last_values`` holds ``V(s_T)`` for bootstrapping unfinished episodes.
    """

    obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    last_values: np.ndarray
    advantages: np.ndarray | None = field(default=None)
    returns: np.ndarray | None = field(default=None)

    @classmethod
    def empty(cls, n_steps: int, n_actors: int, obs_dim: int) -> "RolloutBuffer":
        shape = (n_steps, n_actors)
        return cls(
            obs=np.zeros(shape + (obs_dim,)),
            actions=np.zeros(shape),
            log_probs=np.zeros(shape),
            rewards=np.zeros(shape),
            values=np.zeros(shape),
            dones=np.zeros(shape),
            last_values=np.zeros(n_actors),
        )

    def __len__(self) -> int:
        return self.rewards.size

    def flatten(self) -> dict[str, np.ndarray]:
        if self.advantages is None:
            raise RuntimeError("compute_gae() must run before flattening the buffer")
        n = len(self)
        return {
            "obs": self.obs.reshape(n, -1),
            "actions": self.actions.reshape(n),
            "old_log_probs": self.log_probs.reshape(n),
            "advantages": self.advantages.reshape(n),
            "returns": self.returns.reshape(n),
            "values": self.values.reshape(n),
        }


def compute_gae(
    buffer: RolloutBuffer, gamma: float = 0.99, gae_lambda: float = 0.95
) -> tuple[np.ndarray, np.ndarray]:
    """Backward recursion ``A_t = delta_t + gamma * lambda * (1 - done_t) * A_{t+1}``.

    ``delta_t = r_t + gamma * V(s_{t+1}) * (1 - done_t) - V(s_t)``; returns are
    ``A_t + V(s_t)``. Results are also stored on the buffer.
    """
    rewards = buffer.rewards
    if rewards.size == 0:
        raise ValueError("cannot compute advantages of an empty buffer")
    n_steps = rewards.shape[0]
    values, dones = buffer.values, buffer.dones
    advantages = np.zeros_like(rewards)
    running = np.zeros(rewards.shape[1:])
    for t in reversed(range(n_steps)):
        next_values = buffer.last_values if t == n_steps - 1 else values[t + 1]
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_values * live - values[t]
        running = delta + gamma * gae_lambda * live * running
        advantages[t] = running
    returns = advantages + values
    buffer.advantages, buffer.returns = advantages, returns
    return advantages, returns


def normalize_advantages(adv: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    return (adv - adv.mean()) / (adv.std() + eps)

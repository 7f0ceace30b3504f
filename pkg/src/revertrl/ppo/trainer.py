"""Actor-critic PPO training loop.

Each iteration runs ``actors`` task instances for ``rollout_length`` steps
under a frozen snapshot of the policy, estimates advantages with GAE, and
optimises the clipped surrogate for ``epochs_per_update`` epochs of
minibatches. Training repeats over ``restarts`` seeds and keeps the restart
whose best checkpoint scored highest on held-out validation episodes.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from joblib import Parallel, delayed

from ..errors import NumericalError, TrainingAborted
from .gae import RolloutBuffer, compute_gae, normalize_advantages
from .loss import clipped_surrogate_loss
from .network import NetworkParams, gaussian_log_prob, mlp_forward
from .optim import Adam

__all__ = [
    "TrainConfig",
    "LogRow",
    "TrainResult",
    "train",
    "train_seed_range",
    "validation_seed_range",
    "write_training_log",
    "read_training_log",
]

logger = logging.getLogger(__name__)

# Seed namespaces. Training episode k of restart r under seed s uses
# s * TRAIN_SEED_STRIDE + r * RESTART_SEED_STRIDE + k.
TRAIN_SEED_STRIDE = 10**7
RESTART_SEED_STRIDE = 10**6
VALIDATION_SEED_BASE = 10**17
VALIDATION_SEED_STRIDE = 10**4
MAX_TRAIN_SEED = 10**10

LOG_COLUMNS = ("update", "env_steps", "mean_reward", "mean_penalty", "policy_loss", "value_loss", "std")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-5
    clip_ratio: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    epochs_per_update: int = 10
    minibatch_size: int = 250
    actors: int = 4
    rollout_length: int = 1000
    l1_rate: float = 0.01
    l2_rate: float = 0.05
    entropy_coef: float = 0.0
    vf_coef: float = 0.5
    max_grad_norm: float = 0.5
    max_updates: int = 500
    early_stop_patience: int = 50
    restarts: int = 5
    hidden: tuple[int, ...] = (64, 64)
    init_log_std: float = 0.0
    reward_scale: float | None = None
    validation_episodes: int = 4
    smoothing_window: int = 10
    recurrent: bool = False

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.recurrent:
            raise NotImplementedError("the recurrent policy extension is reserved but not built")
        if not 0 < self.gamma <= 1:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if not 0 <= self.gae_lambda <= 1:
            raise ValueError(f"gae_lambda must lie in [0, 1], got {self.gae_lambda}")
        if not self.clip_ratio > 0:
            raise ValueError(f"clip_ratio must be positive, got {self.clip_ratio}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        for name in ("epochs_per_update", "minibatch_size", "actors", "rollout_length", "restarts",
                     "max_updates", "early_stop_patience", "validation_episodes", "smoothing_window"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.minibatch_size > self.actors * self.rollout_length:
            raise ValueError("minibatch_size may not exceed actors * rollout_length")
        if min(self.l1_rate, self.l2_rate, self.entropy_coef, self.vf_coef) < 0:
            raise ValueError("regularisation and loss coefficients must be non-negative")
        if self.reward_scale is not None and not self.reward_scale > 0:
            raise ValueError("reward_scale must be positive")

    @classmethod
    def fast(cls, **overrides) -> "TrainConfig":
        """Desk-scale preset: higher learning rate and a smaller budget."""
        base = dict(learning_rate=3e-4, max_updates=60, early_stop_patience=30, restarts=5)
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass(frozen=True)
class LogRow:
    update: int
    env_steps: int
    mean_reward: float
    mean_penalty: float
    policy_loss: float
    value_loss: float
    std: float
    validation_reward: float = float("nan")


@dataclass
class TrainResult:
    params: NetworkParams
    log: list[LogRow]
    best_restart: int
    restart_logs: list[list[LogRow]]
    restart_validation: list[float]
    seed_ranges: list[tuple[int, int]]
    aborted: list[bool] = field(default_factory=list)

    @property
    def env_steps(self) -> int:
        return self.log[-1].env_steps if self.log else 0


def train_seed_range(seed: int, restarts: int) -> tuple[int, int]:
    lo = seed * TRAIN_SEED_STRIDE
    return lo, lo + restarts * RESTART_SEED_STRIDE


def validation_seed_range(seed: int, n: int) -> tuple[int, int]:
    lo = VALIDATION_SEED_BASE + seed * VALIDATION_SEED_STRIDE
    return lo, lo + n


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < MAX_TRAIN_SEED:
        raise ValueError(f"training seed must lie in [0, {MAX_TRAIN_SEED}), got {seed}")
    return seed


def _validate(params: NetworkParams, tasks: Sequence, seeds: Sequence[int]) -> float:
    """Mean undiscounted episode reward (penalty excluded) of the mean action."""
    obs = np.stack([task.reset(s) for task, s in zip(tasks, seeds)])
    totals = np.zeros(len(tasks))
    live = np.ones(len(tasks), dtype=bool)
    while live.any():
        mean, _ = mlp_forward(params, "pi", obs)
        for a, task in enumerate(tasks):
            if not live[a]:
                continue
            o, _, done, info = task.step(float(mean[a]))
            totals[a] += info["raw_reward"]
            obs[a] = o
            live[a] = not done
    return float(totals.mean())


def _train_restart(make_task: Callable, config: TrainConfig, seed: int, restart: int):
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, restart])))
    n_actors, horizon = config.actors, config.rollout_length
    tasks = [make_task() for _ in range(n_actors)]
    val_tasks = [make_task() for _ in range(config.validation_episodes)]
    val_seeds = list(range(*validation_seed_range(seed, config.validation_episodes)))
    probe = tasks[0]
    if probe.needs_full_episodes and horizon % probe.episode_length:
        raise ValueError("rollout_length must be a multiple of episode_length when penalties are spread over steps")
    scale = config.reward_scale or getattr(probe, "reward_scale", 1.0)

    params = NetworkParams.initialize(probe.obs_dim, config.hidden, rng, config.init_log_std)
    opt = Adam(params, lr=config.learning_rate, max_grad_norm=config.max_grad_norm)

    episode_counter = 0
    base = seed * TRAIN_SEED_STRIDE + restart * RESTART_SEED_STRIDE

    def next_seed() -> int:
        nonlocal episode_counter
        if episode_counter >= RESTART_SEED_STRIDE:
            raise RuntimeError("training episode budget per restart exhausted")
        s = base + episode_counter
        episode_counter += 1
        return s

    obs = np.stack([task.reset(next_seed()) for task in tasks])
    ep_start = np.zeros(n_actors, dtype=int)
    ep_reward = np.zeros(n_actors)
    env_steps = 0
    log: list[LogRow] = []
    best_val, best_params = -math.inf, None
    smoothed_best, since_best = -math.inf, 0
    aborted = False

    for update in range(1, config.max_updates + 1):
        snapshot = params.copy()  # theta_old: read-only during the rollout
        buf = RolloutBuffer.empty(horizon, n_actors, probe.obs_dim)
        finished_rewards, finished_penalties = [], []
        ep_start[:] = 0
        std = math.exp(snapshot.log_std)
        for t in range(horizon):
            mean, _ = mlp_forward(snapshot, "pi", obs)
            value, _ = mlp_forward(snapshot, "vf", obs)
            actions = mean + std * rng.standard_normal(n_actors)
            buf.obs[t] = obs
            buf.actions[t] = actions
            buf.log_probs[t] = gaussian_log_prob(actions, mean, snapshot.log_std)
            buf.values[t] = value
            for a, task in enumerate(tasks):
                o, r, done, info = task.step(float(actions[a]))
                buf.rewards[t, a] = r / scale
                ep_reward[a] += info["raw_reward"]
                if done:
                    buf.dones[t, a] = 1.0
                    adj = task.penalty_adjustments()
                    if adj.any():
                        start = ep_start[a]
                        buf.rewards[start : t + 1, a] -= adj[adj.size - (t + 1 - start) :] / scale
                    finished_rewards.append(ep_reward[a])
                    finished_penalties.append(task.episode_penalty())
                    ep_reward[a] = 0.0
                    o = task.reset(next_seed())
                    ep_start[a] = t + 1
                obs[a] = o
        env_steps += horizon * n_actors
        buf.last_values, _ = mlp_forward(snapshot, "vf", obs)

        compute_gae(buf, config.gamma, config.gae_lambda)
        batch = buf.flatten()
        batch["advantages"] = normalize_advantages(batch["advantages"])
        n = len(buf)
        p_losses, v_losses = [], []
        try:
            for _ in range(config.epochs_per_update):
                order = rng.permutation(n)
                for lo in range(0, n - config.minibatch_size + 1, config.minibatch_size):
                    idx = order[lo : lo + config.minibatch_size]
                    mb = {k: v[idx] for k, v in batch.items()}
                    info = clipped_surrogate_loss(
                        params, mb, config.clip_ratio, config.vf_coef, config.entropy_coef,
                        config.l1_rate, config.l2_rate,
                    )
                    opt.step(params)
                    p_losses.append(info.policy_loss)
                    v_losses.append(info.value_loss)
            params.check_finite()
        except NumericalError as exc:
            logger.warning("restart %d aborted at update %d: %s", restart, update, exc)
            aborted = True
            break

        val = _validate(params, val_tasks, val_seeds)
        if val > best_val:
            best_val, best_params = val, params.copy()
        mean_reward = float(np.mean(finished_rewards)) if finished_rewards else float("nan")
        log.append(
            LogRow(
                update, env_steps, mean_reward,
                float(np.mean(finished_penalties)) if finished_penalties else 0.0,
                float(np.mean(p_losses)), float(np.mean(v_losses)),
                math.exp(params.log_std), val,
            )
        )
        logger.debug("restart %d update %d reward %.1f val %.1f", restart, update, mean_reward, val)

        window = [row.mean_reward for row in log[-config.smoothing_window :]]
        smoothed = float(np.nanmean(window)) if not all(math.isnan(w) for w in window) else -math.inf
        if smoothed > smoothed_best:
            smoothed_best, since_best = smoothed, 0
        else:
            since_best += 1
            if since_best >= config.early_stop_patience:
                break

    return best_params, best_val, log, aborted


def train(
    make_task: Callable[[], object],
    config: TrainConfig | None = None,
    seed: int = 0,
    n_jobs: int = 1,
) -> TrainResult:
    """Train ``config.restarts`` independent policies and keep the best one.

    ``make_task`` must return a fresh task instance on every call (and be
    picklable when ``n_jobs > 1``).
    """
    config = config or TrainConfig()
    seed = _check_seed(seed)
    jobs = [delayed(_train_restart)(make_task, config, seed, r) for r in range(config.restarts)]
    if n_jobs == 1:
        outcomes = [fn(*args, **kw) for fn, args, kw in jobs]
    else:
        outcomes = Parallel(n_jobs=n_jobs)(jobs)

    restart_val = [o[1] for o in outcomes]
    usable = [r for r, o in enumerate(outcomes) if o[0] is not None]
    if not usable:
        raise TrainingAborted("every restart failed before producing a finite checkpoint")
    best = max(usable, key=lambda r: restart_val[r])
    return TrainResult(
        params=outcomes[best][0],
        log=outcomes[best][2],
        best_restart=best,
        restart_logs=[o[2] for o in outcomes],
        restart_validation=restart_val,
        seed_ranges=[train_seed_range(seed, config.restarts),
                     validation_seed_range(seed, config.validation_episodes)],
        aborted=[o[3] for o in outcomes],
    )


def write_training_log(log: Sequence[LogRow], dest: str | Path, header: str | None = None) -> None:
    with open(dest, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        writer = csv.writer(fh)
        writer.writerow(LOG_COLUMNS)
        for row in log:
            writer.writerow(
                [row.update, row.env_steps]
                + [repr(float(getattr(row, c))) for c in LOG_COLUMNS[2:]]
            )


def read_training_log(src: str | Path) -> list[LogRow]:
    rows = []
    with open(src, newline="") as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        for rec in reader:
            rows.append(
                LogRow(int(rec["update"]), int(rec["env_steps"]),
                       *(float(rec[c]) for c in LOG_COLUMNS[2:]))
            )
    return rows

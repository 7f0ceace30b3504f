"""Episodic tasks the PPO trainer can drive.

A task hands out normalised feature vectors and scalar rewards, hiding the
environment's own types. Every episode is identified by an integer seed.
"""
from __future__ import annotations

import math
from typing import Protocol

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .process_sim import OuParams, Params, PricePath, increment_std, simulate, stationary_std
from .trading_env import EnvConfig, TradingEnv
from .validation import check_observations

__all__ = ["Task", "ObservationScaler", "TradingTask", "QuadraticTask"]


class Task(Protocol):
    obs_dim: int
    episode_length: int
    reward_scale: float
    needs_full_episodes: bool

    def reset(self, seed: int) -> np.ndarray: ...

    def step(self, action: float) -> tuple[np.ndarray, float, bool, dict]: ...

    def penalty_adjustments(self) -> np.ndarray: ...


class ObservationScaler(TransformerMixin, BaseEstimator):
    """Maps raw ``(holding, price, prev_price)`` rows to O(1) features.

    Prices become ``log(p / p_e) / s`` where ``s`` is the stationary standard
    deviation of the log price; holdings are divided by ``max_holding``.
    Parameters left as ``None`` are estimated from the data passed to ``fit``.
    """

    def __init__(self, equilibrium_price=None, log_price_std=None, max_holding=10.0):
        self.equilibrium_price = equilibrium_price
        self.log_price_std = log_price_std
        self.max_holding = max_holding

    @classmethod
    def for_process(cls, params: Params, max_holding: float, mode: str = "exact") -> "ObservationScaler":
        std = stationary_std(params, mode="exact" if isinstance(params, OuParams) else mode)
        return cls(params.equilibrium_price, std, max_holding).fit()

    def fit(self, X=None, y=None):
        log_p = None
        if X is not None:
            X = check_observations(X)
            log_p = np.log(X[:, 1:]).ravel()
        if self.equilibrium_price is None:
            if log_p is None:
                raise ValueError("equilibrium_price is unset and no data was given to estimate it")
            self.equilibrium_price_ = float(np.exp(log_p.mean()))
        else:
            self.equilibrium_price_ = float(self.equilibrium_price)
        if self.log_price_std is None:
            if log_p is None:
                raise ValueError("log_price_std is unset and no data was given to estimate it")
            self.log_price_std_ = float(np.std(log_p - math.log(self.equilibrium_price_)))
        else:
            self.log_price_std_ = float(self.log_price_std)
        if not self.log_price_std_ > 0:
            # noiseless processes: fall back to unit scaling
            self.log_price_std_ = 1.0
        return self

    def transform(self, X):
        check_is_fitted(self, "log_price_std_")
        X = check_observations(X)
        out = np.empty_like(X)
        out[:, 0] = X[:, 0] / self.max_holding
        out[:, 1:] = np.log(X[:, 1:] / self.equilibrium_price_) / self.log_price_std_
        return out

    def transform_one(self, holding: float, price: float, prev_price: float) -> np.ndarray:
        # hot path of the rollout loop; skips validation
        pe, s = self.equilibrium_price_, self.log_price_std_
        return np.array(
            [holding / self.max_holding, math.log(price / pe) / s, math.log(prev_price / pe) / s]
        )


class TradingTask:
    """The trading MDP over freshly simulated (or supplied) price paths."""

    obs_dim = 3

    def __init__(
        self,
        process: Params,
        env_config: EnvConfig,
        scaler: ObservationScaler,
        mode: str = "exact",
        reward_scale: float | None = None,
        paths: np.ndarray | None = None,
    ):
        self.process = process
        self.env_config = env_config
        self.scaler = scaler
        self.mode = mode
        self.env = TradingEnv(env_config)
        self.episode_length = env_config.episode_length
        self.needs_full_episodes = env_config.penalty_active and env_config.penalty_placement == "distributed"
        self.paths = None if paths is None else np.asarray(paths, dtype=np.float64)
        self.reward_scale = reward_scale if reward_scale is not None else self.default_reward_scale()

    def default_reward_scale(self) -> float:
        """P&L standard deviation of one step at full holding."""
        cfg = self.env_config
        step_std = increment_std(self.process, self.mode)
        scale = cfg.lot * cfg.max_holding * self.process.equilibrium_price * step_std
        return scale if scale > 0 else 1.0

    def make_path(self, seed: int) -> PricePath:
        if self.paths is not None:
            return PricePath(self.paths[seed % len(self.paths)], self.process, seed, "data")
        return simulate(self.process, self.episode_length, seed, mode=self.mode)

    def _features(self, obs) -> np.ndarray:
        return self.scaler.transform_one(obs.holding, obs.price, obs.prev_price)

    def reset(self, seed: int) -> np.ndarray:
        return self._features(self.env.reset(self.make_path(seed)))

    def step(self, action: float) -> tuple[np.ndarray, float, bool, dict]:
        res = self.env.step(action)
        info = {"pnl": res.pnl, "penalty": res.penalty, "raw_reward": res.reward + res.penalty}
        return self._features(res.next_obs), res.reward, res.done, info

    def penalty_adjustments(self) -> np.ndarray:
        return self.env.penalty_adjustments()

    def episode_penalty(self) -> float:
        return self.env.episode_penalty()


class QuadraticTask:
    """Stateless control problem with reward ``-(a - target)^2`` and unit-length episodes."""

    obs_dim = 1
    needs_full_episodes = False
    reward_scale = 1.0

    def __init__(self, target: float = 1.0, episode_length: int = 1):
        self.target = target
        self.episode_length = episode_length
        self._t = 0

    def reset(self, seed: int) -> np.ndarray:
        self._t = 0
        return np.ones(1)

    def step(self, action: float) -> tuple[np.ndarray, float, bool, dict]:
        self._t += 1
        reward = -((action - self.target) ** 2)
        done = self._t >= self.episode_length
        return np.ones(1), reward, done, {"raw_reward": reward, "penalty": 0.0}

    def penalty_adjustments(self) -> np.ndarray:
        return np.zeros(self.episode_length)

    def episode_penalty(self) -> float:
        return 0.0

"""scikit-learn style front end for training and scoring trading policies."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .eval import DEFAULT_EVAL_SEED_BASE, NetworkPolicy, evaluate
from .ppo import NetworkParams, TrainConfig, train
from .process_sim import ArmaParams, OuParams, Params
from .tasks import ObservationScaler, TradingTask
from .trading_env import EnvConfig
from .validation import check_observations, check_price_paths

__all__ = ["MeanReversionTrader", "TradingTaskFactory"]


@dataclass(frozen=True)
class TradingTaskFactory:
    """Picklable zero-argument constructor of training tasks."""

    process: Params
    env_config: EnvConfig
    reward_scale: float | None = None
    paths: np.ndarray | None = None
    mode: str = "exact"

    def scaler(self) -> ObservationScaler:
        return ObservationScaler.for_process(self.process, self.env_config.max_holding, self.mode)

    def __call__(self) -> TradingTask:
        return TradingTask(self.process, self.env_config, self.scaler(), mode=self.mode,
                           reward_scale=self.reward_scale, paths=self.paths)


class MeanReversionTrader(BaseEstimator):
    """PPO trading agent for a known mean-reverting process.

    ``penalty_weight=0`` trains the plain agent; a positive weight adds the
    mean-reversion monotonicity penalty to every training episode.

    Parameters
    ----------
    process : OuParams or ArmaParams, default=OuParams()
    env_config : EnvConfig, default=EnvConfig()
        Its own penalty settings are overridden by ``penalty`` and ``penalty_weight``.
    train_config : TrainConfig, default=TrainConfig.fast()
    penalty : str, default="mean_reversion"
    penalty_weight : float, default=0.0
    seed : int, default=0
    n_jobs : int, default=1
        Workers for the independent restarts.
    mode : {"exact", "euler"}, default="exact"
        OU discretisation; ignored for ARMA processes.
    """

    def __init__(self, process=None, env_config=None, train_config=None, penalty="mean_reversion",
                 penalty_weight=0.0, seed=0, n_jobs=1, mode="exact"):
        self.process = process
        self.env_config = env_config
        self.train_config = train_config
        self.penalty = penalty
        self.penalty_weight = penalty_weight
        self.seed = seed
        self.n_jobs = n_jobs
        self.mode = mode

    def _resolved(self) -> tuple[Params, EnvConfig, TrainConfig]:
        process = self.process if self.process is not None else OuParams()
        if not isinstance(process, (OuParams, ArmaParams)):
            raise TypeError(f"process must be OuParams or ArmaParams, got {type(process).__name__}")
        env = self.env_config if self.env_config is not None else EnvConfig()
        env = EnvConfig(**{**env.to_dict(), "penalty": self.penalty,
                           "penalty_weight": float(self.penalty_weight)})
        config = self.train_config if self.train_config is not None else TrainConfig.fast()
        return process, env, config

    def fit(self, X=None, y=None):
        """Train the policy.

        ``X`` is an optional ``(n_paths, episode_length + 1)`` array of price
        paths to train on (cycled); by default paths are simulated from
        ``process``. ``y`` is ignored.
        """
        process, env, config = self._resolved()
        paths = None
        if X is not None:
            paths = check_price_paths(X, min_length=env.episode_length + 1)
        factory = TradingTaskFactory(process, env, config.reward_scale, paths, self.mode)
        result = train(factory, config, seed=self.seed, n_jobs=self.n_jobs)
        self.params_ = result.params
        self.scaler_ = factory.scaler()
        self.training_log_ = result.log
        self.restart_logs_ = result.restart_logs
        self.best_restart_ = result.best_restart
        self.seed_ranges_ = result.seed_ranges
        self.n_env_steps_ = result.env_steps
        return self

    @property
    def policy_(self) -> NetworkPolicy:
        check_is_fitted(self, "params_")
        return NetworkPolicy(self.params_, self.scaler_)

    def predict(self, X):
        """Mean trade (in lots, before environment clipping) for raw ``(holding, price, prev_price)`` rows."""
        check_is_fitted(self, "params_")
        return self.policy_.act(check_observations(X))

    def act(self, obs, rng=None, deterministic=True):
        return self.policy_.act(obs, rng=rng, deterministic=deterministic)

    def evaluate(self, n_paths=200, seed_base=DEFAULT_EVAL_SEED_BASE, n_jobs=1):
        process, env, _ = self._resolved()
        return evaluate(self.policy_, process, n_paths=n_paths, env_config=env, seed_base=seed_base,
                        reserved_seeds=self.seed_ranges_, mode=self.mode, n_jobs=n_jobs)

    def score(self, X=None, y=None):
        """Mean annualised Sharpe ratio over held-out simulated paths.

        ``X`` may be an integer path count (default 200).
        """
        n_paths = 200 if X is None else int(X)
        return self.evaluate(n_paths).mean_sharpe

    def save(self, dest: str | Path) -> None:
        check_is_fitted(self, "params_")
        self.params_.save(dest, seed=self.seed, penalty=self.penalty, penalty_weight=self.penalty_weight,
                          equilibrium_price=self.scaler_.equilibrium_price_,
                          log_price_std=self.scaler_.log_price_std_, max_holding=self.scaler_.max_holding,
                          seed_ranges=np.array(self.seed_ranges_, dtype=np.int64).reshape(-1, 2))

    def load(self, src: str | Path) -> "MeanReversionTrader":
        """Restore fitted parameters from a checkpoint written by :meth:`save`."""
        params, meta = NetworkParams.load(src)
        self.params_ = params
        self.scaler_ = ObservationScaler(
            float(meta["equilibrium_price"]), float(meta["log_price_std"]), float(meta["max_holding"])
        ).fit()
        ranges = np.asarray(meta.get("seed_ranges", np.zeros((0, 2))), dtype=np.int64).reshape(-1, 2)
        self.seed_ranges_ = [(int(lo), int(hi)) for lo, hi in ranges]
        return self

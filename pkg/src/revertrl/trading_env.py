"""Single-asset mean-reversion trading MDP.

The agent observes ``(holding, price, previous price)``, submits a trade in
lots, and is paid the mean-variance utility of its P&L net of a linear-impact
transaction cost. With a non-zero penalty weight, the episode's
(price, action) pairs are scored by the mean-reversion function penalty once
the episode ends.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .penalty import get_penalty, mean_reversion_violations, sample_pairs
from .process_sim import PricePath, path_rng

__all__ = [
    "EnvConfig",
    "EnvObservation",
    "TradeAction",
    "StepResult",
    "TradingEnv",
    "transaction_cost",
    "PENALTY_STREAM",
]

# RNG substream of a path's seed reserved for penalty pair sampling
PENALTY_STREAM = 1
PLACEMENTS = ("terminal", "distributed")


@dataclass(frozen=True)
class EnvConfig:
    risk_aversion: float = 1e-4
    tick: float = 0.01
    lot: float = 100.0
    half_spread_ticks: float = 1.0
    max_holding: float = 10.0
    max_trade: float = 5.0
    episode_length: int = 1000
    penalty: str = "mean_reversion"
    penalty_weight: float = 0.0
    penalty_pairs_per_episode: int = 256
    penalty_placement: str = "terminal"

    def __post_init__(self):
        if not self.risk_aversion > 0:
            raise ValueError(f"risk_aversion must be positive, got {self.risk_aversion}")
        if self.tick < 0 or self.lot <= 0 or self.half_spread_ticks < 0:
            raise ValueError("tick and half_spread_ticks must be >= 0 and lot > 0")
        if not self.max_holding > 0 or not self.max_trade > 0:
            raise ValueError("max_holding and max_trade must be positive")
        if self.max_trade > 2 * self.max_holding:
            raise ValueError("max_trade may not exceed 2 * max_holding")
        if self.episode_length < 2:
            raise ValueError(f"episode_length must be >= 2, got {self.episode_length}")
        if self.penalty_weight < 0:
            raise ValueError(f"penalty_weight must be >= 0, got {self.penalty_weight}")
        if self.penalty_pairs_per_episode < 0:
            raise ValueError("penalty_pairs_per_episode must be >= 0")
        if self.penalty_placement not in PLACEMENTS:
            raise ValueError(f"penalty_placement must be one of {PLACEMENTS}")
        get_penalty(self.penalty)

    @property
    def penalty_active(self) -> bool:
        return (
            self.penalty != "none"
            and self.penalty_weight > 0
            and self.penalty_pairs_per_episode > 0
        )

    def to_dict(self) -> dict:
        return asdict(self)


class EnvObservation(NamedTuple):
    holding: float
    price: float
    prev_price: float


class TradeAction(NamedTuple):
    trade: float


class StepResult(NamedTuple):
    next_obs: EnvObservation
    reward: float
    pnl: float
    cost: float
    done: bool
    penalty: float = 0.0


def transaction_cost(trade: float, config: EnvConfig) -> float:
    """Cost of walking a linear book: half-spread plus impact growing one tick per lot."""
    size = abs(trade)
    return config.lot * size * (config.half_spread_ticks * config.tick + config.tick * size / 2.0)


class TradingEnv:
    """Stateful episode over one price path.

    Step ``t`` (1-based) credits the move ``p_t - p_{t-1}`` on the holding
    carried into it, then executes the trade at ``p_t``. The episode ends after
    ``episode_length`` steps. The terminal observation repeats the final price.
    """

    def __init__(self, config: EnvConfig | None = None):
        self.config = config or EnvConfig()
        self._path: PricePath | None = None
        self._t = 0
        self._done = True

    # -- episode lifecycle -------------------------------------------------

    def reset(self, path: PricePath) -> EnvObservation:
        cfg = self.config
        if len(path) < cfg.episode_length + 1:
            raise ValueError(
                f"path has {len(path)} prices; an episode of {cfg.episode_length} steps "
                f"needs at least {cfg.episode_length + 1}"
            )
        self._path = path
        self._prices = path.prices
        self._t = 1
        self._holding = 0.0
        self._done = False
        self._penalty: float | None = None
        self._pair_blame: np.ndarray | None = None
        n = cfg.episode_length
        self.trace = {
            key: np.zeros(n) for key in ("price", "holding", "trade", "action", "pnl", "cost", "reward")
        }
        return self.observation()

    def observation(self) -> EnvObservation:
        t = min(self._t, self.config.episode_length)
        return EnvObservation(self._holding, float(self._prices[t]), float(self._prices[t - 1]))

    @property
    def done(self) -> bool:
        return self._done

    @property
    def step_count(self) -> int:
        return self._t - 1

    def step(self, action: TradeAction | float) -> StepResult:
        if self._path is None:
            raise RuntimeError("reset() must be called before step()")
        if self._done:
            raise RuntimeError("episode is finished; call reset()")
        cfg = self.config
        requested = float(action.trade if isinstance(action, TradeAction) else action)
        if not math.isfinite(requested):
            raise ValueError(f"non-finite trade {requested}")

        t = self._t
        p_now, p_prev = float(self._prices[t]), float(self._prices[t - 1])
        held = self._holding
        trade = min(max(requested, -cfg.max_trade), cfg.max_trade)
        # clip the trade itself so neither bound is broken by rounding
        executed = min(max(trade, -cfg.max_holding - held), cfg.max_holding - held)
        new_holding = min(max(held + executed, -cfg.max_holding), cfg.max_holding)
        cost = transaction_cost(executed, cfg)
        pnl = (p_now - p_prev) * cfg.lot * held - cost
        reward = pnl - 0.5 * cfg.risk_aversion * pnl * pnl

        k = t - 1
        tr = self.trace
        tr["price"][k], tr["holding"][k], tr["trade"][k] = p_now, new_holding, executed
        tr["action"][k], tr["pnl"][k], tr["cost"][k] = requested, pnl, cost

        self._holding = new_holding
        self._t += 1
        done = self._t > cfg.episode_length
        penalty = 0.0
        if done:
            self._done = True
            if cfg.penalty_placement == "terminal":
                penalty = self.episode_penalty()
                reward -= penalty
        tr["reward"][k] = reward
        return StepResult(self.observation(), reward, pnl, cost, done, penalty)

    # -- penalty -----------------------------------------------------------

    def _score_penalty(self) -> None:
        cfg = self.config
        n = cfg.episode_length
        self._pair_blame = np.zeros(n)
        if not cfg.penalty_active:
            self._penalty = 0.0
            return
        rng = path_rng(self._path.seed, PENALTY_STREAM)
        pairs = sample_pairs(n, cfg.penalty_pairs_per_episode, rng)
        fired = mean_reversion_violations(
            self.trace["price"], self.trace["action"], pairs, weak=cfg.penalty == "mean_reversion_weak"
        )
        self._penalty = cfg.penalty_weight * float(fired.sum())
        # half of each firing pair's weight is charged to each of its two steps
        half = 0.5 * cfg.penalty_weight * fired
        np.add.at(self._pair_blame, pairs[:, 0], half)
        np.add.at(self._pair_blame, pairs[:, 1], half)

    def episode_penalty(self) -> float:
        """Weighted mean-reversion penalty of the finished episode."""
        if not self._done or self._path is None:
            raise RuntimeError("the episode penalty is only defined once the episode is done")
        if self._penalty is None:
            self._score_penalty()
        return self._penalty

    def penalty_adjustments(self) -> np.ndarray:
        """Per-step reward deductions for ``distributed`` placement.

        Sums to :meth:`episode_penalty`. Under ``terminal`` placement the whole
        penalty already sits in the last step's reward and this returns zeros.
        """
        total = self.episode_penalty()
        if self.config.penalty_placement == "terminal" or total == 0.0:
            return np.zeros(self.config.episode_length)
        return self._pair_blame.copy()

    # -- export --------------------------------------------------------------

    def write_trace(self, dest: str | Path) -> None:
        n = self.step_count
        tr = self.trace
        with open(dest, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "price", "holding", "trade", "pnl", "cost", "reward"])
            for k in range(n):
                writer.writerow(
                    [k + 1] + [f"{tr[c][k]:.10g}" for c in ("price", "holding", "trade", "pnl", "cost", "reward")]
                )

"""Out-of-sample Monte Carlo evaluation of trading policies."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy import stats
from sklearn.base import BaseEstimator

from .ppo.network import NetworkParams, mlp_forward
from .ppo.trainer import LogRow
from .process_sim import Params, simulate, stationary_std
from .tasks import ObservationScaler
from .trading_env import EnvConfig, TradingEnv
from .validation import check_observations, check_seed_disjoint

__all__ = [
    "ANNUALIZATION",
    "DEFAULT_EVAL_SEED_BASE",
    "Policy",
    "NetworkPolicy",
    "BandPolicy",
    "EvalReport",
    "TTestResult",
    "sharpe",
    "evaluate",
    "t_test",
    "kde",
    "silverman_bandwidth",
    "convergence_steps",
]

# 260 trading days: 260 * mean / (sqrt(260) * std) is about 16 * mean / std
ANNUALIZATION = 16.0
DEFAULT_EVAL_SEED_BASE = 10**18


class Policy(Protocol):
    def act(self, obs: np.ndarray, rng: np.random.Generator | None = None,
            deterministic: bool = True) -> np.ndarray: ...


class NetworkPolicy:
    """A frozen actor network paired with the observation scaler it was trained with."""

    def __init__(self, params: NetworkParams, scaler: ObservationScaler):
        params.check_finite()
        self.params = params
        self.scaler = scaler

    def act(self, obs, rng=None, deterministic=True):
        mean, _ = mlp_forward(self.params, "pi", self.scaler.transform(obs))
        if deterministic:
            return mean
        if rng is None:
            raise ValueError("stochastic actions need an rng")
        return mean + math.exp(self.params.log_std) * rng.standard_normal(mean.shape)


class BandPolicy(BaseEstimator):
    """Threshold rule: full short above ``+band`` stationary deviations, full long below ``-band``.

    Trades move the holding straight to the target (subject to the
    environment's trade limit); inside the band the position is flattened.
    """

    def __init__(self, process=None, band=0.5, max_holding=10.0):
        self.process = process
        self.band = band
        self.max_holding = max_holding

    def fit(self, X=None, y=None):
        if self.process is None:
            raise ValueError("BandPolicy needs the process parameters")
        self.threshold_ = self.band * stationary_std(self.process)
        self.equilibrium_price_ = self.process.equilibrium_price
        return self

    def predict(self, X):
        if not hasattr(self, "threshold_"):
            self.fit()
        X = check_observations(X)
        x = np.log(X[:, 1] / self.equilibrium_price_)
        target = np.where(x > self.threshold_, -self.max_holding,
                          np.where(x < -self.threshold_, self.max_holding, 0.0))
        return target - X[:, 0]

    def act(self, obs, rng=None, deterministic=True):
        return self.predict(obs)


@dataclass(frozen=True)
class EvalReport:
    per_path_sharpe: np.ndarray
    seeds: np.ndarray
    mean_sharpe: float
    std_sharpe: float
    n_paths: int
    n_excluded: int
    pnl_mean: float
    pnl_std: float
    convergence_env_steps: int | None = None

    def __post_init__(self):
        if self.n_paths != len(self.per_path_sharpe):
            raise ValueError("n_paths must equal the number of per-path Sharpe ratios")

    @property
    def valid_sharpe(self) -> np.ndarray:
        return self.per_path_sharpe[np.isfinite(self.per_path_sharpe)]

    def with_convergence(self, steps: int | None) -> "EvalReport":
        return EvalReport(**{**self.__dict__, "convergence_env_steps": steps})

    def write_csv(self, dest: str | Path, header: str | None = None) -> None:
        with open(dest, "w", newline="") as fh:
            if header:
                fh.write(f"# {header}\n")
            writer = csv.writer(fh)
            writer.writerow(["path", "seed", "sharpe"])
            for k, (s, v) in enumerate(zip(self.seeds, self.per_path_sharpe)):
                writer.writerow([k, int(s), "nan" if not np.isfinite(v) else repr(float(v))])


@dataclass(frozen=True)
class TTestResult:
    t_statistic: float
    degrees_of_freedom: float
    direction: str
    p_value: float
    p_value_greater: float


def sharpe(pnl: Sequence[float]) -> float:
    """Annualised Sharpe ratio ``16 * mean / std`` of daily P&L (unbiased std).

    Returns ``nan`` for a zero-variance series; callers treat that as an
    excluded path.
    """
    pnl = np.asarray(pnl, dtype=np.float64)
    if pnl.ndim != 1 or pnl.size < 2:
        raise ValueError("sharpe needs a 1-D series of at least two observations")
    if np.ptp(pnl) == 0.0:
        return float("nan")
    std = float(np.std(pnl, ddof=1))
    return ANNUALIZATION * float(np.mean(pnl)) / std


def _run_paths(policy, process, env_config, seeds, deterministic, mode, rng_seed):
    envs = [TradingEnv(env_config) for _ in seeds]
    obs = np.array([env.reset(simulate(process, env_config.episode_length, int(s), mode=mode))
                    for env, s in zip(envs, seeds)], dtype=np.float64)
    rng = None if deterministic else np.random.default_rng(rng_seed)
    for _ in range(env_config.episode_length):
        trades = policy.act(obs, rng=rng, deterministic=deterministic)
        for k, env in enumerate(envs):
            obs[k] = env.step(float(trades[k])).next_obs
    return np.stack([env.trace["pnl"] for env in envs])


def evaluate(
    policy: Policy,
    process: Params,
    n_paths: int = 1000,
    episode_length: int | None = None,
    seed_base: int = DEFAULT_EVAL_SEED_BASE,
    deterministic: bool = True,
    env_config: EnvConfig | None = None,
    reserved_seeds: Sequence[tuple[int, int]] = (),
    mode: str = "exact",
    n_jobs: int = 1,
    chunk_size: int = 250,
) -> EvalReport:
    """Run ``policy`` over paths seeded ``seed_base + k`` and summarise per-path Sharpe ratios.

    Evaluation never applies a penalty. ``reserved_seeds`` lists half-open seed
    ranges used in training or validation; any overlap is rejected.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    env_config = env_config or EnvConfig()
    if episode_length is not None and episode_length != env_config.episode_length:
        env_config = EnvConfig(**{**env_config.to_dict(), "episode_length": episode_length})
    env_config = EnvConfig(**{**env_config.to_dict(), "penalty_weight": 0.0})
    check_seed_disjoint(seed_base, seed_base + n_paths, list(reserved_seeds))

    seeds = np.arange(n_paths, dtype=np.uint64) + np.uint64(seed_base)
    chunks = [seeds[i : i + chunk_size] for i in range(0, n_paths, chunk_size)]
    # stochastic evaluation: one noise stream per chunk, derived from its first seed
    tasks = [delayed(_run_paths)(policy, process, env_config, c, deterministic, mode, [int(c[0]), 7])
             for c in chunks]
    if n_jobs == 1:
        results = [fn(*a, **kw) for fn, a, kw in tasks]
    else:
        results = Parallel(n_jobs=n_jobs)(tasks)
    pnl = np.concatenate(results, axis=0)

    per_path = np.array([sharpe(row) for row in pnl])
    valid = per_path[np.isfinite(per_path)]
    return EvalReport(
        per_path_sharpe=per_path,
        seeds=seeds,
        mean_sharpe=float(valid.mean()) if valid.size else float("nan"),
        std_sharpe=float(valid.std(ddof=1)) if valid.size > 1 else float("nan"),
        n_paths=n_paths,
        n_excluded=int(n_paths - valid.size),
        pnl_mean=float(pnl.mean()),
        pnl_std=float(pnl.std(ddof=1)) if pnl.size > 1 else 0.0,
    )


def t_test(sample_a: Sequence[float], sample_b: Sequence[float]) -> TTestResult:
    """Welch's unequal-variance t-test of ``mean_b - mean_a``.

    ``p_value`` is two-sided; ``p_value_greater`` tests mean_b > mean_a.
    """
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ValueError("both samples need at least two observations")
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    if va + vb == 0.0:
        raise ValueError("both samples have zero variance")
    diff = b.mean() - a.mean()
    t = float(diff / math.sqrt(va + vb))
    df = float((va + vb) ** 2 / (va**2 / (a.size - 1) + vb**2 / (b.size - 1)))
    if t > 0:
        direction = "b"
    elif t < 0:
        direction = "a"
    else:
        direction = "equal"
    return TTestResult(t, df, direction, float(2.0 * stats.t.sf(abs(t), df)), float(stats.t.sf(t, df)))


def silverman_bandwidth(samples: np.ndarray) -> float:
    samples = np.asarray(samples, dtype=np.float64)
    return 1.06 * float(samples.std(ddof=1)) * samples.size ** (-0.2)


def kde(
    samples: Sequence[float],
    grid: tuple[float, float, int] | int | None = None,
    bandwidth: float | None = None,
    pad: float = 4.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian kernel density estimate on a regular grid.

    ``grid`` is ``(lo, hi, n_points)``, or just a point count, in which case
    the grid spans the data padded by ``pad`` bandwidths on each side.
    """
    x = np.asarray(samples, dtype=np.float64)
    x = x[np.isfinite(x)]
    if x.size < 2:
        raise ValueError("kde needs at least two finite samples")
    h = silverman_bandwidth(x) if bandwidth is None else float(bandwidth)
    if not h > 0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    if grid is None or isinstance(grid, int):
        n_points = 512 if grid is None else grid
        lo, hi = x.min() - pad * h, x.max() + pad * h
    else:
        lo, hi, n_points = grid
    points = np.linspace(lo, hi, int(n_points))
    density = np.zeros_like(points)
    norm = 1.0 / (x.size * h * math.sqrt(2.0 * math.pi))
    for start in range(0, x.size, 4096):
        z = (points[:, None] - x[None, start : start + 4096]) / h
        density += np.exp(-0.5 * z * z).sum(axis=1)
    return points, density * norm


def write_kde_csv(points: np.ndarray, density: np.ndarray, dest: str | Path,
                  header: str | None = None) -> None:
    with open(dest, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        writer = csv.writer(fh)
        writer.writerow(["x", "density"])
        for xv, dv in zip(points, density):
            writer.writerow([repr(float(xv)), repr(float(dv))])


def convergence_steps(log: Sequence[LogRow], window: int = 10, fraction: float = 0.95) -> int:
    """Environment steps at the first update whose next ``window`` updates average
    at least ``fraction`` of the final plateau (mean of the last ``window`` updates).

    For a negative plateau the level is ``plateau - (1 - fraction) * |plateau|``.
    Returns the final step count when that level is never reached (only
    possible when the log holds no finite rewards).
    """
    if len(log) < window:
        raise ValueError(f"training log has {len(log)} updates, fewer than the window of {window}")
    rewards = np.array([row.mean_reward for row in log], dtype=np.float64)
    tail = rewards[-window:]
    if not np.isfinite(tail).any():
        return int(log[-1].env_steps)
    plateau = float(np.nanmean(tail))
    threshold = plateau - (1.0 - fraction) * abs(plateau)
    for u in range(len(log) - window + 1):
        chunk = rewards[u : u + window]
        if np.isfinite(chunk).any() and np.nanmean(chunk) >= threshold:
            return int(log[u].env_steps)
    return int(log[-1].env_steps)

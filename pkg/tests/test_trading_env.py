import csv

import numpy as np
import pytest
from scipy import integrate

from revertrl.eval import BandPolicy, evaluate
from revertrl.penalty import l_mr, sample_pairs
from revertrl.process_sim import OuParams, PricePath, path_rng, simulate_ou
from revertrl.trading_env import (
    PENALTY_STREAM,
    EnvConfig,
    EnvObservation,
    TradeAction,
    TradingEnv,
    transaction_cost,
)


def _path(prices, seed=0):
    return PricePath(np.asarray(prices, dtype=np.float64), OuParams(), seed)


def _short_config(**kw):
    return EnvConfig(**{"episode_length": 5, **kw})


def test_config_invariants():
    with pytest.raises(ValueError):
        EnvConfig(risk_aversion=0.0)
    with pytest.raises(ValueError):
        EnvConfig(max_holding=2.0, max_trade=5.0)
    with pytest.raises(ValueError):
        EnvConfig(episode_length=1)
    with pytest.raises(ValueError):
        EnvConfig(penalty_weight=-1.0)
    with pytest.raises(ValueError):
        EnvConfig(penalty="monotone")
    assert not EnvConfig().penalty_active
    assert EnvConfig(penalty_weight=1.0).penalty_active


def test_reset_contract():
    path = simulate_ou(OuParams(), 1000, seed=4)
    env = TradingEnv()
    obs = env.reset(path)
    assert obs == EnvObservation(0.0, path.prices[1], path.prices[0])
    assert env.reset(path) == obs
    short = simulate_ou(OuParams(), 999, seed=4)
    with pytest.raises(ValueError):
        env.reset(short)


def test_step_requires_reset_and_stops_at_end():
    env = TradingEnv(_short_config())
    with pytest.raises(RuntimeError):
        env.step(0.0)
    env.reset(_path(np.full(6, 50.0)))
    dones = [env.step(0.0).done for _ in range(5)]
    assert dones == [False] * 4 + [True]
    with pytest.raises(RuntimeError):
        env.step(0.0)


@pytest.mark.parametrize("bad", [float("nan"), float("inf")])
def test_non_finite_trade_rejected(bad):
    env = TradingEnv(_short_config())
    env.reset(_path(np.full(6, 50.0)))
    with pytest.raises(ValueError):
        env.step(bad)


def test_transaction_cost_examples():
    cfg = EnvConfig()
    assert transaction_cost(0.0, cfg) == 0.0
    assert transaction_cost(10.0, cfg) == pytest.approx(60.0)


def test_transaction_cost_matches_book_walk_quadrature():
    cfg = EnvConfig()
    for q in (0.5, 1.0, 3.0, 7.25, 10.0):
        # marginal price paid for the u-th lot: half spread plus u ticks of impact
        total, _ = integrate.quad(lambda u: cfg.lot * (cfg.half_spread_ticks * cfg.tick + cfg.tick * u), 0, q)
        assert transaction_cost(q, cfg) == pytest.approx(total, rel=1e-12)


def test_transaction_cost_symmetric_and_positive():
    cfg = EnvConfig()
    q = np.random.default_rng(0).normal(scale=5.0, size=1000)
    for v in q:
        assert transaction_cost(-v, cfg) == transaction_cost(v, cfg)
        assert transaction_cost(v, cfg) > 0


def test_step_flat_book():
    env = TradingEnv(_short_config())
    env.reset(_path([50, 51, 49, 52, 50, 50]))
    res = env.step(0.0)
    assert res.pnl == 0.0 and res.reward == 0.0 and res.cost == 0.0


def test_step_reward_substitution():
    cfg = _short_config(tick=0.0)
    env = TradingEnv(cfg)
    env.reset(_path([50, 50, 51, 51, 51, 51]))
    env.step(1.0)  # buy one lot at 50, costless
    res = env.step(0.0)
    assert res.pnl == pytest.approx(100.0)
    assert res.reward == pytest.approx(99.5)


def test_pnl_uses_holding_carried_into_move():
    cfg = _short_config()
    env = TradingEnv(cfg)
    env.reset(_path([50, 52, 51, 53, 53, 53]))
    first = env.step(5.0)
    # the position opened at t=1 does not earn the first move
    assert first.pnl == pytest.approx(-transaction_cost(5.0, cfg))
    second = env.step(0.0)
    assert second.pnl == pytest.approx((51 - 52) * cfg.lot * 5.0)


def test_holding_bound_any_action_sequence():
    rng = np.random.default_rng(1)
    cfg = EnvConfig(episode_length=300)
    env = TradingEnv(cfg)
    env.reset(simulate_ou(OuParams(), 300, seed=2))
    for _ in range(300):
        res = env.step(TradeAction(float(rng.normal(scale=20.0))))
        assert abs(res.next_obs.holding) <= cfg.max_holding
        assert res.cost >= 0
    assert np.all(np.abs(env.trace["trade"]) <= cfg.max_trade)
    zero = env.trace["trade"] == 0.0
    assert np.all((env.trace["cost"] == 0.0) == zero)


def _replay_wealth(prices, trades, cfg):
    """Independent cash-and-inventory ledger for one episode."""
    cash, shares = 0.0, 0.0
    for t, q in enumerate(trades, start=1):
        cash -= q * cfg.lot * prices[t] + transaction_cost(q, cfg)
        shares += q * cfg.lot
    n = len(trades)
    # marking to market at the last credited price, the final trade's inventory
    # has not yet seen a move
    return cash + shares * prices[n]


def test_wealth_telescopes_over_episode():
    rng = np.random.default_rng(5)
    cfg = EnvConfig(episode_length=400)
    env = TradingEnv(cfg)
    path = simulate_ou(OuParams(volatility=0.1), 400, seed=8)
    env.reset(path)
    for _ in range(400):
        env.step(float(rng.normal(scale=4.0)))
    total = env.trace["pnl"].sum()
    assert total == pytest.approx(_replay_wealth(path.prices, env.trace["trade"], cfg), rel=1e-9, abs=1e-6)


def test_reward_decomposition_identity():
    rng = np.random.default_rng(6)
    cfg = EnvConfig(episode_length=200, penalty_weight=3.0)
    env = TradingEnv(cfg)
    env.reset(simulate_ou(OuParams(), 200, seed=9))
    for _ in range(200):
        res = env.step(float(rng.normal(scale=3.0)))
        rebuilt = res.reward + 0.5 * cfg.risk_aversion * res.pnl**2 + res.penalty
        assert rebuilt == pytest.approx(res.pnl, rel=1e-12, abs=1e-9)
    assert res.penalty == env.episode_penalty() > 0


def _run(cfg, path, policy):
    env = TradingEnv(cfg)
    obs = env.reset(path)
    for _ in range(cfg.episode_length):
        obs = env.step(policy(obs)).next_obs
    return env


def test_episode_penalty_requires_finished_episode():
    env = TradingEnv(_short_config(penalty_weight=1.0))
    env.reset(_path(np.linspace(50, 51, 6)))
    env.step(0.0)
    with pytest.raises(RuntimeError):
        env.episode_penalty()


def test_penalty_disabled_is_zero():
    path = simulate_ou(OuParams(), 1000, seed=3)
    env = _run(EnvConfig(penalty_weight=0.0), path, lambda o: o.price - 50.0)
    assert env.episode_penalty() == 0.0


def test_decreasing_policy_not_penalised():
    path = simulate_ou(OuParams(), 1000, seed=3)
    env = _run(EnvConfig(penalty_weight=1.0), path, lambda o: -(o.price - 50.0))
    assert env.episode_penalty() == 0.0


def test_increasing_policy_brute_force():
    path = simulate_ou(OuParams(), 1000, seed=21)
    assert len(np.unique(path.prices)) == len(path.prices)
    cfg = EnvConfig(penalty_weight=0.01, penalty_pairs_per_episode=100)
    env = _run(cfg, path, lambda o: o.price - 50.0)
    assert env.episode_penalty() == pytest.approx(1.0)
    # brute-force the same pairs through the scalar predicate
    pairs = sample_pairs(1000, 100, path_rng(path.seed, PENALTY_STREAM))
    p, a = env.trace["price"], env.trace["action"]
    assert sum(l_mr(p[i], p[j], a[i], a[j]) for i, j in pairs) == 100


def test_distributed_placement_conserves_penalty():
    path = simulate_ou(OuParams(), 1000, seed=5)
    rng = np.random.default_rng(0)
    noise = rng.normal(size=1000)
    it = iter(noise)
    cfg = EnvConfig(penalty_weight=2.0, penalty_placement="distributed")
    env = _run(cfg, path, lambda o: next(it))
    adj = env.penalty_adjustments()
    assert adj.shape == (1000,)
    assert adj.sum() == pytest.approx(env.episode_penalty())
    # terminal placement puts the same amount into the last reward instead
    it = iter(noise)
    term = _run(EnvConfig(penalty_weight=2.0), path, lambda o: next(it))
    assert term.episode_penalty() == env.episode_penalty()
    assert not term.penalty_adjustments().any()
    assert term.trace["reward"][-1] == pytest.approx(env.trace["reward"][-1] - env.episode_penalty())


def test_model_a_b_equivalence_without_weight():
    path = simulate_ou(OuParams(), 1000, seed=12)
    acts = np.random.default_rng(3).normal(scale=3.0, size=1000)
    runs = []
    for cfg in (EnvConfig(penalty="none"), EnvConfig(penalty="mean_reversion", penalty_weight=0.0),
                EnvConfig(penalty="mean_reversion_weak", penalty_weight=0.0)):
        it = iter(acts)
        runs.append(_run(cfg, path, lambda o: next(it)).trace)
    for other in runs[1:]:
        for key in runs[0]:
            assert runs[0][key].tobytes() == other[key].tobytes()


def test_band_policy_is_profitable():
    process = OuParams()
    report = evaluate(BandPolicy(process).fit(), process, n_paths=1000, seed_base=10**15)
    assert report.pnl_mean > 0
    assert report.mean_sharpe > 0


def test_trace_csv(tmp_path):
    cfg = _short_config()
    env = _run(cfg, _path([50, 51, 50, 49, 50, 51]), lambda o: 1.0)
    dest = tmp_path / "trace.csv"
    env.write_trace(dest)
    with open(dest) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "price", "holding", "trade", "pnl", "cost", "reward"]
    assert len(rows) == 6
    assert [float(r[2]) for r in rows[1:]] == [1, 2, 3, 4, 5]

import math

import numpy as np
import pytest
from scipy import stats

from revertrl.eval import (
    BandPolicy,
    NetworkPolicy,
    convergence_steps,
    evaluate,
    kde,
    sharpe,
    silverman_bandwidth,
    t_test,
    write_kde_csv,
)
from revertrl.ppo import LogRow, NetworkParams
from revertrl.process_sim import ArmaParams, OuParams
from revertrl.tasks import ObservationScaler
from revertrl.trading_env import EnvConfig


def test_sharpe_examples():
    assert sharpe([1.0, -1.0] * 50) == 0.0
    rng = np.random.default_rng(0)
    z = rng.normal(size=500)
    pnl = 1.0 + (z - z.mean()) / z.std(ddof=1)
    assert sharpe(pnl) == pytest.approx(16.0)
    assert math.isnan(sharpe([2.0] * 10))
    with pytest.raises(ValueError):
        sharpe([1.0])


def test_sharpe_scale_invariant_and_sign():
    pnl = np.random.default_rng(1).normal(0.2, 1.0, size=300)
    assert sharpe(3.7 * pnl) == pytest.approx(sharpe(pnl))
    assert sharpe(-pnl) == pytest.approx(-sharpe(pnl))


def test_welch_examples():
    rng = np.random.default_rng(0)
    a = rng.normal(size=1000)
    res = t_test(a, a + 10.0)
    assert res.t_statistic == pytest.approx(10.0 / math.sqrt(2.0 / 1000), rel=0.05)
    assert res.direction == "b"
    assert t_test(a, a).t_statistic == 0.0
    b = rng.normal(0.3, 2.0, size=700)
    assert t_test(a, b).t_statistic == -t_test(b, a).t_statistic


def test_welch_matches_scipy():
    rng = np.random.default_rng(2)
    for _ in range(20):
        a = rng.normal(0, rng.uniform(0.5, 2), size=rng.integers(5, 300))
        b = rng.normal(0.2, rng.uniform(0.5, 2), size=rng.integers(5, 300))
        ours = t_test(a, b)
        ref = stats.ttest_ind(b, a, equal_var=False)
        assert ours.t_statistic == pytest.approx(ref.statistic, rel=1e-10)
        assert ours.p_value == pytest.approx(ref.pvalue, rel=1e-8)
        one = stats.ttest_ind(b, a, equal_var=False, alternative="greater")
        assert ours.p_value_greater == pytest.approx(one.pvalue, rel=1e-8)


def test_kde_single_kernel():
    pts, dens = kde([2.0] * 10, grid=(-2.0, 6.0, 801), bandwidth=0.5)
    assert np.allclose(dens, stats.norm.pdf(pts, loc=2.0, scale=0.5), rtol=1e-12)


def test_kde_standard_normal_at_zero():
    x = np.random.default_rng(3).standard_normal(100_000)
    pts, dens = kde(x, grid=(-0.5, 0.5, 3))
    assert dens[1] == pytest.approx(1.0 / math.sqrt(2 * math.pi), rel=0.05)


def test_kde_integrates_to_one_and_nonnegative():
    rng = np.random.default_rng(4)
    for sample in (rng.normal(size=300), rng.exponential(size=200), rng.normal(3, 0.1, size=50)):
        h = silverman_bandwidth(sample)
        pts, dens = kde(sample, grid=(sample.min() - 3 * h, sample.max() + 3 * h, 4000))
        assert np.all(dens >= 0)
        assert np.trapezoid(dens, pts) == pytest.approx(1.0, abs=1e-3)
        pts, dens = kde(sample)
        assert np.trapezoid(dens, pts) == pytest.approx(1.0, abs=1e-4)


def test_kde_csv(tmp_path):
    pts, dens = kde([0.0, 1.0, 2.0], grid=5)
    dest = tmp_path / "kde.csv"
    write_kde_csv(pts, dens, dest, header="model=A")
    lines = dest.read_text().splitlines()
    assert lines[:2] == ["# model=A", "x,density"]
    assert len(lines) == 7


def _log(rewards, steps_per_update=1000):
    return [LogRow(u + 1, (u + 1) * steps_per_update, r, 0.0, 0.0, 0.0, 1.0) for u, r in enumerate(rewards)]


def test_convergence_step_plateau():
    # plateau reached at update 7
    rewards = [0.0] * 6 + [1.0] * 30
    assert convergence_steps(_log(rewards)) == 7000
    ramp = [min(u / 7.0, 1.0) for u in range(1, 40)]
    assert 5000 <= convergence_steps(_log(ramp)) <= 7000


def test_convergence_flat_and_never():
    assert convergence_steps(_log([5.0] * 20)) == 1000
    assert convergence_steps(_log([-5.0] * 20)) == 1000
    # a late spike is only matched by the final window
    assert convergence_steps(_log([0.0] * 19 + [100.0])) == 11000
    assert convergence_steps(_log([float("nan")] * 12)) == 12000
    with pytest.raises(ValueError):
        convergence_steps(_log([1.0] * 5))


def test_null_policy_excluded():
    params = NetworkParams.zeros_like(NetworkParams.initialize(3, (4,)))
    policy = NetworkPolicy(params, ObservationScaler.for_process(OuParams(), 10.0))
    report = evaluate(policy, OuParams(), n_paths=5, episode_length=50)
    assert report.n_excluded == 5
    assert math.isnan(report.mean_sharpe)
    assert report.pnl_mean == 0.0


def test_band_policy_positive_sharpe_and_deterministic():
    process = OuParams()
    policy = BandPolicy(process).fit()
    a = evaluate(policy, process, n_paths=100)
    b = evaluate(policy, process, n_paths=100)
    assert a.per_path_sharpe.tobytes() == b.per_path_sharpe.tobytes()
    assert a.mean_sharpe > 0
    assert a.seeds[0] == 10**18 and a.seeds[-1] == 10**18 + 99


def test_band_policy_arma():
    process = ArmaParams()
    report = evaluate(BandPolicy(process).fit(), process, n_paths=50, mode="arma")
    assert report.mean_sharpe > 0


def test_band_policy_predict():
    policy = BandPolicy(OuParams(), band=0.5).fit()
    t = policy.threshold_
    X = np.array([[0.0, 50 * math.exp(2 * t), 50.0], [3.0, 50 * math.exp(-2 * t), 50.0], [4.0, 50.0, 50.0]])
    assert policy.predict(X).tolist() == [-10.0, 7.0, -4.0]
    with pytest.raises(ValueError):
        policy.predict(np.array([[0.0, -1.0, 50.0]]))


def test_evaluation_seed_overlap_rejected():
    policy = BandPolicy(OuParams()).fit()
    with pytest.raises(ValueError):
        evaluate(policy, OuParams(), n_paths=10, seed_base=100, reserved_seeds=[(105, 200)])


def test_evaluation_ignores_penalty():
    process = OuParams()
    policy = BandPolicy(process).fit()
    a = evaluate(policy, process, n_paths=10, env_config=EnvConfig(penalty_weight=50.0))
    b = evaluate(policy, process, n_paths=10)
    assert a.per_path_sharpe.tobytes() == b.per_path_sharpe.tobytes()


def test_chunking_and_jobs_do_not_change_results():
    process = OuParams()
    policy = BandPolicy(process).fit()
    a = evaluate(policy, process, n_paths=30, episode_length=100, chunk_size=7)
    b = evaluate(policy, process, n_paths=30, episode_length=100, chunk_size=30, n_jobs=2)
    assert a.per_path_sharpe.tobytes() == b.per_path_sharpe.tobytes()


def test_report_csv(tmp_path):
    process = OuParams()
    report = evaluate(BandPolicy(process).fit(), process, n_paths=4, episode_length=100)
    dest = tmp_path / "report.csv"
    report.write_csv(dest, header="model=band")
    lines = dest.read_text().splitlines()
    assert lines[1] == "path,seed,sharpe"
    assert len(lines) == 6

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from revertrl.process_sim import (
    ArmaParams,
    OuParams,
    PricePath,
    increment_std,
    read_path_csv,
    simulate,
    simulate_arma,
    simulate_ou,
    stationary_std,
    write_path_csv,
)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(reversion_rate=0.0),
        dict(reversion_rate=-0.1),
        dict(volatility=-0.01),
        dict(equilibrium_price=0.0),
    ],
)
def test_ou_params_rejects_invalid(kwargs):
    with pytest.raises(ValueError):
        OuParams(**kwargs)


def test_ou_rejects_zero_horizon():
    with pytest.raises(ValueError):
        simulate_ou(OuParams(), 0, seed=1)


def test_arma_rejects_nonstationary():
    # phi1 = 1 - ar1 = 1.5, phi2 = 0 -> root 1.5 outside the unit circle
    with pytest.raises(ValueError, match="stationary"):
        ArmaParams(ar_coeffs=(-0.5, 0.0))
    with pytest.raises(ValueError):
        ArmaParams(ar_coeffs=(0.1, 1.2))


def test_zero_noise_ou_is_constant():
    params = OuParams(equilibrium_price=50.0, reversion_rate=0.3, volatility=0.0)
    for mode in ("exact", "euler"):
        path = simulate_ou(params, 100, seed=5, mode=mode, x0=0.0)
        assert np.all(path.prices == 50.0)


def test_zero_noise_arma_is_constant():
    params = ArmaParams(ma_coeffs=(0.0, 0.0))
    path = simulate_arma(params, 100, seed=3)
    assert np.all(path.prices == params.equilibrium_price)


@pytest.mark.parametrize("mode", ["exact", "euler"])
def test_ou_determinism(mode):
    a = simulate_ou(OuParams(), 500, seed=123, mode=mode)
    b = simulate_ou(OuParams(), 500, seed=123, mode=mode)
    assert a.prices.tobytes() == b.prices.tobytes()
    c = simulate_ou(OuParams(), 500, seed=124, mode=mode)
    assert not np.array_equal(a.prices, c.prices)


def test_arma_determinism():
    a = simulate_arma(ArmaParams(), 300, seed=9)
    b = simulate_arma(ArmaParams(), 300, seed=9)
    assert a.prices.tobytes() == b.prices.tobytes()


def test_path_length_and_positivity():
    path = simulate_ou(OuParams(volatility=0.5), 1000, seed=0)
    assert len(path) == 1001
    assert np.all(path.prices > 0)


def test_exact_ou_sample_variance_large_t():
    params = OuParams(reversion_rate=0.1, volatility=0.05)
    n = 100_000
    # x at t=60 across independent seeds
    x = np.array([simulate_ou(params, 60, seed=s).log_deviation[-1] for s in range(n)])
    target = params.volatility**2 / (2 * params.reversion_rate)
    assert target == pytest.approx(0.0125)
    var = x.var(ddof=1)
    se = var * math.sqrt(2.0 / (n - 1))
    assert abs(var - target) < 3 * se


def test_arma_degenerates_to_ou_euler():
    ou = OuParams(equilibrium_price=40.0, reversion_rate=0.15, volatility=0.04)
    arma = ArmaParams(equilibrium_price=40.0, ar_coeffs=(0.15, 0.0), ma_coeffs=(0.04, 0.0))
    for seed in (0, 1, 77):
        a = simulate_arma(arma, 400, seed, burn_in=0)
        b = simulate_ou(ou, 400, seed, mode="euler", x0=0.0)
        assert a.prices.tobytes() == b.prices.tobytes()


def _batch_mean_se(x: np.ndarray, n_batches: int = 100) -> float:
    means = x[: x.size // n_batches * n_batches].reshape(n_batches, -1).mean(axis=1)
    return means.std(ddof=1) / math.sqrt(n_batches)


def test_arma_long_run_mean_is_zero():
    params = ArmaParams(ar_coeffs=(0.1, 0.05), ma_coeffs=(0.05, 0.02))
    x = simulate_arma(params, 100_000, seed=2024).log_deviation[1:]
    assert abs(x.mean()) < 3 * _batch_mean_se(x)


@pytest.mark.parametrize(
    "path",
    [
        simulate_ou(OuParams(), 20_000, seed=11),
        simulate_ou(OuParams(), 20_000, seed=11, mode="euler"),
        simulate_arma(ArmaParams(), 20_000, seed=11),
    ],
    ids=["ou-exact", "ou-euler", "arma"],
)
def test_mean_reversion_sign(path):
    x = path.log_deviation
    assert np.corrcoef(x[:-1], np.diff(x))[0, 1] < 0


def test_stationary_std_matches_simulation():
    params = ArmaParams()
    x = simulate_arma(params, 200_000, seed=4).log_deviation
    assert x.std() == pytest.approx(stationary_std(params), rel=0.05)
    assert np.diff(x).std() == pytest.approx(increment_std(params), rel=0.02)
    ou = OuParams()
    y = simulate_ou(ou, 200_000, seed=4).log_deviation
    assert np.diff(y).std() == pytest.approx(increment_std(ou), rel=0.02)
    assert stationary_std(ou) == pytest.approx(math.sqrt(0.0125))


def test_simulate_dispatch():
    assert simulate(OuParams(), 10, 1).mode == "exact"
    assert simulate(ArmaParams(), 10, 1).mode == "arma"
    with pytest.raises(TypeError):
        simulate(object(), 10, 1)


def test_seed_must_fit_64_bits():
    with pytest.raises(ValueError):
        simulate_ou(OuParams(), 10, seed=2**64)
    with pytest.raises(ValueError):
        simulate_ou(OuParams(), 10, seed=-1)


def test_price_path_validates():
    with pytest.raises(ValueError):
        PricePath(np.array([1.0]), OuParams(), 0)
    with pytest.raises(ValueError):
        PricePath(np.array([1.0, -1.0]), OuParams(), 0)


def test_csv_round_trip(tmp_path):
    path = simulate_ou(OuParams(), 50, seed=3)
    dest = tmp_path / "p.csv"
    write_path_csv(path, dest)
    lines = dest.read_text().splitlines()
    assert lines[0] == "t,price"
    assert len(lines) == 52
    assert lines[1].split(",")[1] == f"{path.prices[0]:.10g}"
    np.testing.assert_allclose(read_path_csv(dest), path.prices, rtol=1e-9)


@settings(max_examples=30, deadline=None)
@given(
    lam=st.floats(0.01, 1.5),
    sigma=st.floats(0.0, 0.3),
    seed=st.integers(0, 2**63),
    mode=st.sampled_from(["exact", "euler"]),
)
def test_ou_paths_positive_and_reproducible(lam, sigma, seed, mode):
    params = OuParams(reversion_rate=lam, volatility=sigma)
    a = simulate_ou(params, 30, seed, mode=mode)
    b = simulate_ou(params, 30, seed, mode=mode)
    assert np.all(a.prices > 0)
    assert np.array_equal(a.prices, b.prices)

"""Seeded mean-reverting log-price simulators.

Both processes work on the log deviation ``x_t = log(p_t / p_e)`` with a unit
time step, and emit prices ``p_e * exp(x_t)``. Every path is a pure function
of ``(params, horizon, seed, mode)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Union

import numpy as np

__all__ = [
    "OuParams",
    "ArmaParams",
    "PricePath",
    "path_rng",
    "simulate_ou",
    "simulate_arma",
    "simulate",
    "stationary_std",
    "increment_std",
    "write_path_csv",
    "read_path_csv",
    "ARMA_BURN_IN",
]

ARMA_BURN_IN = 200
_SEED_LIMIT = 2**64


@dataclass(frozen=True)
class OuParams:
    equilibrium_price: float = 50.0
    reversion_rate: float = 0.1
    volatility: float = 0.05

    def __post_init__(self):
        if not self.equilibrium_price > 0:
            raise ValueError(f"equilibrium_price must be positive, got {self.equilibrium_price}")
        if not self.reversion_rate > 0:
            raise ValueError(f"reversion_rate must be positive, got {self.reversion_rate}")
        # zero volatility is the noiseless degenerate case
        if not self.volatility >= 0:
            raise ValueError(f"volatility must be non-negative, got {self.volatility}")

    @property
    def stationary_variance(self) -> float:
        """Variance of the continuous-time stationary law, sigma^2 / (2 lambda)."""
        return self.volatility**2 / (2.0 * self.reversion_rate)


@dataclass(frozen=True)
class ArmaParams:
    """ARMA(2,1) coefficients in the difference form

    ``x_{t+1} = x_t - (ar1 * x_t + ar2 * x_{t-1}) + ma1 * e_t + ma2 * e_{t-1}``.
    """

    equilibrium_price: float = 50.0
    ar_coeffs: tuple[float, float] = (0.1, 0.05)
    ma_coeffs: tuple[float, float] = (0.05, 0.02)

    def __post_init__(self):
        object.__setattr__(self, "ar_coeffs", tuple(float(c) for c in self.ar_coeffs))
        object.__setattr__(self, "ma_coeffs", tuple(float(c) for c in self.ma_coeffs))
        if len(self.ar_coeffs) != 2 or len(self.ma_coeffs) != 2:
            raise ValueError("ar_coeffs and ma_coeffs must each hold two values")
        if not self.equilibrium_price > 0:
            raise ValueError(f"equilibrium_price must be positive, got {self.equilibrium_price}")
        roots = self.characteristic_roots()
        if np.any(np.abs(roots) >= 1.0):
            raise ValueError(
                f"AR coefficients {self.ar_coeffs} are not stationary: "
                f"characteristic roots {roots} must lie strictly inside the unit circle"
            )

    @property
    def phi(self) -> tuple[float, float]:
        """Standard AR(2) coefficients (phi1, phi2) of the level recursion."""
        ar1, ar2 = self.ar_coeffs
        return 1.0 - ar1, -ar2

    def characteristic_roots(self) -> np.ndarray:
        # z^2 - phi1 z - phi2 = 0; stationary iff both roots have modulus < 1
        phi1, phi2 = self.phi
        return np.roots([1.0, -phi1, -phi2])


Params = Union[OuParams, ArmaParams]


@dataclass(frozen=True, eq=False)
class PricePath:
    prices: np.ndarray
    params: Params
    seed: int
    mode: str = "exact"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        prices = np.asarray(self.prices, dtype=np.float64)
        if prices.ndim != 1 or prices.size < 2:
            raise ValueError("a price path needs at least two prices")
        if not np.all(prices > 0):
            raise ValueError("prices must be strictly positive")
        prices.setflags(write=False)
        object.__setattr__(self, "prices", prices)

    def __len__(self) -> int:
        return self.prices.size

    @property
    def log_deviation(self) -> np.ndarray:
        return np.log(self.prices / self.params.equilibrium_price)


def _check_seed(seed) -> int:
    seed = int(seed)
    if not 0 <= seed < _SEED_LIMIT:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def path_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Independent PCG64 substream for one path.

    ``stream`` separates auxiliary draws (e.g. penalty pair sampling) from the
    innovations of the same path.
    """
    seed = _check_seed(seed)
    entropy = seed if stream == 0 else [seed, stream]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def simulate_ou(
    params: OuParams,
    horizon: int,
    seed: int,
    mode: Literal["exact", "euler"] = "exact",
    x0: float | None = None,
) -> PricePath:
    """Simulate an OU log-price path of ``horizon`` steps (``horizon + 1`` prices).

    ``x0=None`` draws the initial state from the stationary law of the chosen
    scheme; a float forces it, and then no initial draw is consumed.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    if mode not in ("exact", "euler"):
        raise ValueError(f"mode must be 'exact' or 'euler', got {mode!r}")
    seed = _check_seed(seed)
    rng = path_rng(seed)
    lam, sigma = params.reversion_rate, params.volatility

    if x0 is None:
        x0 = math.sqrt(params.stationary_variance) * rng.standard_normal()
    eps = rng.standard_normal(horizon)
    x = np.empty(horizon + 1)
    x[0] = x0
    if mode == "exact":
        decay = math.exp(-lam)
        scale = math.sqrt(params.stationary_variance * (1.0 - math.exp(-2.0 * lam)))
        for t in range(horizon):
            x[t + 1] = decay * x[t] + scale * eps[t]
    else:
        # same operation order as the ARMA recursion, so the degenerate case matches exactly
        for t in range(horizon):
            x[t + 1] = x[t] - lam * x[t] + sigma * eps[t]
    return PricePath(params.equilibrium_price * np.exp(x), params, seed, mode)


def simulate_arma(
    params: ArmaParams, horizon: int, seed: int, burn_in: int = ARMA_BURN_IN
) -> PricePath:
    """Simulate an ARMA(2,1) log-price path from a zero warm start.

    The first ``burn_in`` steps are simulated and discarded; the returned path
    holds the following ``horizon + 1`` states.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    if burn_in < 0:
        raise ValueError(f"burn_in must be >= 0, got {burn_in}")
    seed = _check_seed(seed)
    rng = path_rng(seed)
    ar1, ar2 = params.ar_coeffs
    ma1, ma2 = params.ma_coeffs

    n = burn_in + horizon
    eps = rng.standard_normal(n)
    x = np.zeros(n + 1)
    x_prev, e_prev = 0.0, 0.0
    for t in range(n):
        x[t + 1] = x[t] - (ar1 * x[t] + ar2 * x_prev) + ma1 * eps[t] + ma2 * e_prev
        x_prev, e_prev = x[t], eps[t]
    return PricePath(
        params.equilibrium_price * np.exp(x[burn_in:]), params, seed, "arma", {"burn_in": burn_in}
    )


def simulate(params: Params, horizon: int, seed: int, mode: str = "exact") -> PricePath:
    """Dispatch on the parameter type."""
    if isinstance(params, OuParams):
        return simulate_ou(params, horizon, seed, mode=mode)
    if isinstance(params, ArmaParams):
        return simulate_arma(params, horizon, seed)
    raise TypeError(f"unsupported process parameters: {type(params).__name__}")


def _psi_weights(params: Params, mode: str, n_terms: int) -> np.ndarray:
    # moving-average representation x_t = sum_k psi_k e_{t-1-k}
    if isinstance(params, OuParams):
        lam = params.reversion_rate
        if mode == "euler":
            decay, scale = 1.0 - lam, params.volatility
        else:
            decay = math.exp(-lam)
            scale = math.sqrt(params.stationary_variance * (1.0 - math.exp(-2.0 * lam)))
        return scale * decay ** np.arange(n_terms)
    phi1, phi2 = params.phi
    ma1, ma2 = params.ma_coeffs
    psi = np.zeros(n_terms)
    psi[0] = ma1
    psi[1] = phi1 * psi[0] + ma2
    for k in range(2, n_terms):
        psi[k] = phi1 * psi[k - 1] + phi2 * psi[k - 2]
    return psi


def stationary_std(params: Params, mode: str = "exact", n_terms: int = 4000) -> float:
    """Stationary standard deviation of the log deviation x."""
    if isinstance(params, OuParams) and mode == "exact":
        return math.sqrt(params.stationary_variance)
    return float(np.sqrt(np.sum(_psi_weights(params, mode, n_terms) ** 2)))


def increment_std(params: Params, mode: str = "exact", n_terms: int = 4000) -> float:
    """Stationary standard deviation of the one-step change ``x_{t+1} - x_t``."""
    psi = _psi_weights(params, mode, n_terms)
    var = float(np.sum(psi**2))
    lag1 = float(np.sum(psi[:-1] * psi[1:]))
    return math.sqrt(max(2.0 * (var - lag1), 0.0))


def write_path_csv(path: PricePath, dest: str | Path, header: str | None = None) -> None:
    with open(dest, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        writer = csv.writer(fh)
        writer.writerow(["t", "price"])
        for t, p in enumerate(path.prices):
            writer.writerow([t, f"{p:.10g}"])


def read_path_csv(src: str | Path) -> np.ndarray:
    with open(src, newline="") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    if not rows or "price" not in rows[0]:
        raise ValueError(f"{src}: expected a t,price table")
    return np.array([float(r["price"]) for r in rows])

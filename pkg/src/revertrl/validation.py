"""Input validation shared by the estimators and evaluation helpers."""
from __future__ import annotations

import numpy as np
from sklearn.utils import check_array


def check_observations(X) -> np.ndarray:
    """Validate raw observations: 2-D, three columns ``(holding, price, prev_price)``, prices > 0."""
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if X.shape[1] != 3:
        raise ValueError(f"observations need 3 columns (holding, price, prev_price), got {X.shape[1]}")
    if np.any(X[:, 1:] <= 0):
        raise ValueError("prices must be strictly positive")
    return X


def check_price_paths(X, min_length: int = 2) -> np.ndarray:
    """Validate a batch of price paths shaped ``(n_paths, n_prices)``."""
    X = check_array(X, dtype=np.float64, ensure_2d=False)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ValueError("price paths must be a 1-D path or a 2-D (n_paths, n_prices) array")
    if X.shape[1] < min_length:
        raise ValueError(f"paths need at least {min_length} prices, got {X.shape[1]}")
    if np.any(X <= 0):
        raise ValueError("prices must be strictly positive")
    return X


def check_seed_disjoint(lo: int, hi: int, reserved: list[tuple[int, int]]) -> None:
    """Raise if ``[lo, hi)`` overlaps any reserved half-open seed range."""
    for r_lo, r_hi in reserved:
        if lo < r_hi and r_lo < hi:
            raise ValueError(
                f"evaluation seeds [{lo}, {hi}) overlap the training/validation range [{r_lo}, {r_hi})"
            )

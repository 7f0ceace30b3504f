"""Function penalties: 0/1 shape-constraint predicates over (input, action) pairs.

A :class:`PenaltySpec` fires (returns 1) when a policy's action on an input
violates a known constraint. A :class:`CumulativePenaltyConfig` OR-combines
several specs and scales the count of firing pairs by a weight.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "PenaltySpec",
    "CumulativePenaltyConfig",
    "l_mr",
    "l_mr_weak",
    "call_bound_penalty",
    "call_lower_bound",
    "call_upper_bound",
    "convexity_penalty",
    "cumulative_penalty",
    "MEAN_REVERSION",
    "MEAN_REVERSION_WEAK",
    "PENALTIES",
    "get_penalty",
    "sample_pairs",
    "mean_reversion_violations",
]


@dataclass(frozen=True)
class PenaltySpec:
    name: str
    predicate: Callable[[tuple, tuple], int]
    arity: int

    def __post_init__(self):
        if self.arity < 1:
            raise ValueError(f"arity must be >= 1, got {self.arity}")

    def __call__(self, inputs, actions) -> int:
        return int(bool(self.predicate(inputs, actions)))


@dataclass(frozen=True)
class CumulativePenaltyConfig:
    specs: tuple[PenaltySpec, ...]
    weight: float = 1.0

    def __post_init__(self):
        specs = tuple(self.specs)
        object.__setattr__(self, "specs", specs)
        if not specs:
            raise ValueError("at least one penalty spec is required")
        if len({s.arity for s in specs}) != 1:
            raise ValueError(f"specs disagree on arity: {[(s.name, s.arity) for s in specs]}")
        if not self.weight >= 0:
            raise ValueError(f"weight must be non-negative, got {self.weight}")

    @property
    def arity(self) -> int:
        return self.specs[0].arity


def l_mr(p_i: float, p_j: float, a_i: float, a_j: float) -> int:
    """Mean-reversion monotonicity: 1 iff ``(p_i < p_j) XOR (a_i > a_j)``.

    Literal form: equal actions on unequal prices fire in one ordering of the
    pair, and unequal actions on equal prices may fire too.
    """
    return int((p_i < p_j) != (a_i > a_j))


def l_mr_weak(p_i: float, p_j: float, a_i: float, a_j: float) -> int:
    """Tie-tolerant variant: fires only on a strict increase of action with price."""
    return int((p_i < p_j and a_i < a_j) or (p_i > p_j and a_i > a_j))


def call_lower_bound(S: float, tau: float, K: float, r: float, c: float) -> int:
    return int(c < 0 or c < S - K * math.exp(-r * tau))


def call_upper_bound(S: float, tau: float, d: float, c: float) -> int:
    return int(c > S * math.exp(-d * tau))


def call_bound_penalty(S: float, tau: float, K: float, r: float, d: float, c: float) -> int:
    """No-arbitrage bounds on a European call price.

    Fires when ``c < 0``, ``c < S - K exp(-r tau)`` or ``c > S exp(-d tau)``.
    """
    if not (S > 0 and K > 0):
        raise ValueError("S and K must be positive")
    if tau < 0:
        raise ValueError("tau must be non-negative")
    return call_lower_bound(S, tau, K, r, c) | call_upper_bound(S, tau, d, c)


def convexity_penalty(
    S1: float, S2: float, mix: float, c1: float, c2: float, c_mix: float
) -> int:
    """1 iff the value at ``mix*S1 + (1-mix)*S2`` lies strictly above the chord."""
    if not 0.0 < mix < 1.0:
        raise ValueError(f"mix must lie strictly inside (0, 1), got {mix}")
    return int(c_mix > mix * c1 + (1.0 - mix) * c2)


MEAN_REVERSION = PenaltySpec("mean_reversion", lambda p, a: l_mr(p[0], p[1], a[0], a[1]), 2)
MEAN_REVERSION_WEAK = PenaltySpec(
    "mean_reversion_weak", lambda p, a: l_mr_weak(p[0], p[1], a[0], a[1]), 2
)
CALL_LOWER = PenaltySpec("call_lower", lambda i, c: call_lower_bound(i[0], i[1], i[2], i[3], c), 1)
CALL_UPPER = PenaltySpec("call_upper", lambda i, c: call_upper_bound(i[0], i[1], i[4], c), 1)
CONVEXITY = PenaltySpec(
    "convexity", lambda i, c: convexity_penalty(i[0], i[1], i[2], c[0], c[1], c[2]), 2
)

# names selectable from an experiment config; "none" maps to no penalty
PENALTIES: dict[str, PenaltySpec | None] = {
    "none": None,
    "mean_reversion": MEAN_REVERSION,
    "mean_reversion_weak": MEAN_REVERSION_WEAK,
}


def get_penalty(name: str) -> PenaltySpec | None:
    try:
        return PENALTIES[name]
    except KeyError:
        raise ValueError(f"unknown penalty {name!r}; choose from {sorted(PENALTIES)}") from None


def cumulative_penalty(
    pairs: Iterable[tuple[Sequence, Sequence]], config: CumulativePenaltyConfig
) -> float:
    """Weighted count of pairs on which at least one spec fires.

    Each element is ``(inputs, actions)``. Unary specs take a scalar action;
    a spec of arity ``k > 1`` takes at least ``k`` action values.
    """
    count = 0
    for inputs, actions in pairs:
        n_act = 1 if np.ndim(actions) == 0 else len(actions)
        scalar = np.ndim(actions) == 0
        if (config.arity == 1) != scalar or n_act < config.arity:
            raise ValueError(
                f"pair carries {n_act} action value(s) but the specs expect arity {config.arity}"
            )
        count += any(spec(inputs, actions) for spec in config.specs)
    return config.weight * count


def sample_pairs(n: int, n_pairs: int, rng: np.random.Generator) -> np.ndarray:
    """Draw distinct ordered index pairs ``(i, j)``, ``i != j``, uniformly from ``range(n)``.

    Returns an ``(k, 2)`` integer array with ``k = min(n_pairs, n * (n - 1))``.
    """
    if n < 2:
        raise ValueError("need at least two entries to sample a pair")
    total = n * (n - 1)
    flat = rng.choice(total, size=min(n_pairs, total), replace=False)
    i, r = np.divmod(flat, n - 1)
    j = r + (r >= i)
    return np.stack([i, j], axis=1)


def mean_reversion_violations(
    prices: np.ndarray, actions: np.ndarray, pairs: np.ndarray, weak: bool = False
) -> np.ndarray:
    """Vectorised per-pair mean-reversion penalty, 0/1 for each row of ``pairs``."""
    p_i, p_j = prices[pairs[:, 0]], prices[pairs[:, 1]]
    a_i, a_j = actions[pairs[:, 0]], actions[pairs[:, 1]]
    if weak:
        fired = ((p_i < p_j) & (a_i < a_j)) | ((p_i > p_j) & (a_i > a_j))
    else:
        fired = (p_i < p_j) != (a_i > a_j)
    return fired.astype(np.int64)

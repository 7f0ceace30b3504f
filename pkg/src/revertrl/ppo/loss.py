"""Clipped-surrogate PPO objective with analytic gradients."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import NumericalError
from .network import LOG_STD_BOUNDS, NetworkParams, gaussian_log_prob, mlp_backward, mlp_forward

__all__ = ["LossInfo", "clipped_surrogate_loss"]

_ENTROPY_CONST = 0.5 * (1.0 + math.log(2.0 * math.pi))


@dataclass(frozen=True)
class LossInfo:
    total: float
    policy_loss: float
    value_loss: float
    entropy: float
    regularization: float
    clip_fraction: float
    approx_kl: float
    ratio: np.ndarray


def clipped_surrogate_loss(
    params: NetworkParams,
    batch: dict[str, np.ndarray],
    clip_ratio: float = 0.2,
    vf_coef: float = 0.5,
    ent_coef: float = 0.0,
    l1_rate: float = 0.0,
    l2_rate: float = 0.0,
) -> LossInfo:
    """Evaluate the PPO loss on ``batch`` and write its gradient into ``params.grads``.

    loss = -mean(min(r A, clip(r, 1-eps, 1+eps) A))
           + vf_coef * mean((V - R)^2)
           + l1 * mean|W| + l2 * mean W^2
           - ent_coef * entropy

    The regularisers average over every weight entry of both networks
    (biases and ``log_std`` excluded), so the rates do not scale with width.

    ``batch`` needs ``obs``, ``actions``, ``old_log_probs``, ``advantages`` and
    ``returns``. Advantages are used as given (normalise beforehand).
    """
    obs = batch["obs"]
    actions, old_logp = batch["actions"], batch["old_log_probs"]
    adv, returns = batch["advantages"], batch["returns"]
    n = actions.shape[0]
    params.zero_grad()

    raw_log_std = params.arrays["log_std"][0]
    log_std = float(np.clip(raw_log_std, *LOG_STD_BOUNDS))
    inv_var = math.exp(-2.0 * log_std)

    mean, pi_cache = mlp_forward(params, "pi", obs)
    logp = gaussian_log_prob(actions, mean, log_std)
    log_ratio = logp - old_logp
    ratio = np.exp(log_ratio)
    surr_unclipped = ratio * adv
    surr_clipped = np.clip(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio) * adv
    unclipped = surr_unclipped <= surr_clipped
    policy_loss = -float(np.mean(np.minimum(surr_unclipped, surr_clipped)))

    value, vf_cache = mlp_forward(params, "vf", obs)
    err = value - returns
    value_loss = float(np.mean(err * err))

    entropy = log_std + _ENTROPY_CONST
    weight_keys = list(params.weight_keys())
    n_weights = sum(params.arrays[k].size for k in weight_keys)
    reg = 0.0
    for k in weight_keys:
        w = params.arrays[k]
        reg += (l1_rate * float(np.abs(w).sum()) + l2_rate * float(np.sum(w * w))) / n_weights

    total = policy_loss + vf_coef * value_loss + reg - ent_coef * entropy
    if not math.isfinite(total):
        raise NumericalError(
            f"non-finite loss (policy={policy_loss}, value={value_loss}, reg={reg}, log_std={log_std})"
        )

    # d(policy_loss)/d(logp): the clipped branch is constant in the parameters
    d_logp = np.where(unclipped, -ratio * adv / n, 0.0)
    d_mean = d_logp * (actions - mean) * inv_var
    mlp_backward(params, "pi", pi_cache, d_mean)
    z2 = (actions - mean) ** 2 * inv_var
    d_log_std = float(np.sum(d_logp * (z2 - 1.0))) - ent_coef
    lo, hi = LOG_STD_BOUNDS
    params.grads["log_std"][0] = d_log_std if lo <= raw_log_std <= hi else 0.0

    mlp_backward(params, "vf", vf_cache, vf_coef * 2.0 * err / n)

    for k in weight_keys:
        w = params.arrays[k]
        params.grads[k] += (l1_rate * np.sign(w) + 2.0 * l2_rate * w) / n_weights

    for k, g in params.grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for {k}")

    clip_fraction = float(np.mean(np.abs(ratio - 1.0) > clip_ratio))
    approx_kl = float(np.mean((ratio - 1.0) - log_ratio))
    return LossInfo(total, policy_loss, value_loss, entropy, reg, clip_fraction, approx_kl, ratio)

"""Independent reference computations shared by the unit and acceptance tests."""
import numpy as np

from revertrl.ppo import NetworkParams, RolloutBuffer
from revertrl.ppo.loss import clipped_surrogate_loss
from revertrl.ppo.network import gaussian_log_prob, mlp_forward


def gae_oracle(rewards, values, dones, last_values, gamma, lam):
    """Direct double sum A_t = sum_l (gamma*lam)^l delta_{t+l}, truncated at episode ends."""
    T, N = rewards.shape
    nxt = np.vstack([values[1:], last_values[None, :]])
    delta = rewards + gamma * nxt * (1.0 - dones) - values
    adv = np.zeros_like(rewards)
    for a in range(N):
        for t in range(T):
            total, coef = 0.0, 1.0
            for l in range(t, T):
                total += coef * delta[l, a]
                if dones[l, a]:
                    break
                coef *= gamma * lam
            adv[t, a] = total
    return adv


def random_buffer(rng, T=20, N=3, obs_dim=2, p_done=0.1):
    buf = RolloutBuffer.empty(T, N, obs_dim)
    buf.rewards[:] = rng.normal(size=(T, N))
    buf.values[:] = rng.normal(size=(T, N))
    buf.dones[:] = (rng.random((T, N)) < p_done).astype(float)
    buf.last_values[:] = rng.normal(size=N)
    return buf


def max_rel_error(analytic, numeric, floor=1e-6):
    """Relative error per entry; entries where both sides are below ``floor`` are compared absolutely."""
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / scale))


def central_differences(fn, params: NetworkParams, h=1e-5):
    base = params.flat()
    grad = np.zeros_like(base)
    for i in range(base.size):
        up, down = base.copy(), base.copy()
        up[i] += h
        down[i] -= h
        params.set_flat(up)
        f_up = fn()
        params.set_flat(down)
        f_down = fn()
        grad[i] = (f_up - f_down) / (2 * h)
    params.set_flat(base)
    return grad


def min_relu_margin(params, obs, prefix):
    """Smallest |pre-activation| over hidden units: distance to a ReLU kink."""
    h = obs
    margin = np.inf
    n = params.n_layers(prefix)
    for k in range(n - 1):
        z = h @ params.arrays[f"{prefix}.W{k}"] + params.arrays[f"{prefix}.b{k}"]
        margin = min(margin, float(np.min(np.abs(z))))
        h = np.maximum(z, 0.0)
    return margin


def random_loss_instance(rng, obs_dim=3, hidden=(4,), n=16, clip=0.2):
    """A small net and batch whose loss is smooth within +-1e-3 of every parameter.

    Instances too close to a ReLU kink, a clip boundary, or the min() switch
    are redrawn since finite differences are meaningless there.
    """
    while True:
        params = NetworkParams.initialize(obs_dim, hidden, rng, init_log_std=rng.uniform(-1, 0.5),
                                          actor_gain=1.0)
        for k in params.arrays:
            if ".b" in k:
                params.arrays[k] = rng.normal(scale=0.3, size=params.arrays[k].shape)
        params.zero_grad()
        obs = rng.normal(size=(n, obs_dim))
        mean, _ = mlp_forward(params, "pi", obs)
        old_mean = mean + rng.normal(scale=0.1, size=n)
        actions = old_mean + rng.normal(size=n) * np.exp(params.log_std)
        old_logp = gaussian_log_prob(actions, old_mean, params.log_std + rng.normal(scale=0.05))
        batch = {
            "obs": obs,
            "actions": actions,
            "old_log_probs": old_logp,
            "advantages": rng.normal(size=n),
            "returns": rng.normal(size=n),
        }
        logp = gaussian_log_prob(actions, mean, params.log_std)
        ratio = np.exp(logp - old_logp)
        if np.min(np.abs(np.abs(ratio - 1.0) - clip)) < 2e-3:
            continue
        if min(min_relu_margin(params, obs, "pi"), min_relu_margin(params, obs, "vf")) < 1e-3:
            continue
        if min(np.min(np.abs(params.arrays[k])) for k in params.weight_keys()) < 1e-4:
            continue  # |w| kink of the l1 term
        return params, batch


def loss_value(params, batch, **kw):
    return clipped_surrogate_loss(params, batch, **kw).total

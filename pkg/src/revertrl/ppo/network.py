"""Feedforward actor and critic networks with hand-written backpropagation.

Parameters live in one flat, ordered mapping so the optimizer, the
checkpoint format and finite-difference checks can treat them uniformly:

* ``pi.W{k}``, ``pi.b{k}``: actor layers, ReLU hidden units, linear mean output
* ``vf.W{k}``, ``vf.b{k}``: critic layers, same layout, scalar output
* ``log_std``: state-independent log standard deviation of the Gaussian policy
"""
from __future__ import annotations

import io
import math
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from ..errors import NumericalError

__all__ = [
    "LOG_STD_BOUNDS",
    "NetworkParams",
    "policy_forward",
    "mlp_forward",
    "mlp_backward",
    "gaussian_log_prob",
    "CHECKPOINT_VERSION",
]

LOG_STD_BOUNDS = (-5.0, 2.0)
CHECKPOINT_VERSION = 1
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _orthogonal(rng: np.random.Generator, shape: tuple[int, int], gain: float) -> np.ndarray:
    a = rng.standard_normal(shape)
    q, r = np.linalg.qr(a if shape[0] >= shape[1] else a.T)
    q = q * np.sign(np.diag(r))
    if shape[0] < shape[1]:
        q = q.T
    return gain * q[: shape[0], : shape[1]]


@dataclass
class NetworkParams:
    arrays: dict[str, np.ndarray]
    grads: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not self.grads:
            self.zero_grad()

    @classmethod
    def initialize(
        cls,
        obs_dim: int = 3,
        hidden: tuple[int, ...] = (64, 64),
        rng: np.random.Generator | None = None,
        init_log_std: float = 0.0,
        actor_gain: float = 0.01,
    ) -> "NetworkParams":
        rng = rng if rng is not None else np.random.default_rng(0)
        sizes = [obs_dim, *hidden]
        arrays: dict[str, np.ndarray] = {}
        for prefix, out_gain in (("pi", actor_gain), ("vf", 1.0)):
            dims = sizes + [1]
            for k in range(len(dims) - 1):
                gain = math.sqrt(2.0) if k < len(dims) - 2 else out_gain
                arrays[f"{prefix}.W{k}"] = _orthogonal(rng, (dims[k], dims[k + 1]), gain)
                arrays[f"{prefix}.b{k}"] = np.zeros(dims[k + 1])
        arrays["log_std"] = np.array([float(init_log_std)])
        return cls(arrays)

    @classmethod
    def zeros_like(cls, other: "NetworkParams", log_std: float = 0.0) -> "NetworkParams":
        arrays = {k: np.zeros_like(v) for k, v in other.arrays.items()}
        arrays["log_std"][:] = log_std
        return cls(arrays)

    def n_layers(self, prefix: str) -> int:
        return sum(1 for k in self.arrays if k.startswith(f"{prefix}.W"))

    @property
    def obs_dim(self) -> int:
        return self.arrays["pi.W0"].shape[0]

    @property
    def log_std(self) -> float:
        return float(np.clip(self.arrays["log_std"][0], *LOG_STD_BOUNDS))

    def weight_keys(self) -> Iterator[str]:
        return (k for k in self.arrays if ".W" in k)

    def zero_grad(self) -> None:
        self.grads = {k: np.zeros_like(v) for k, v in self.arrays.items()}

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            {k: v.copy() for k, v in self.arrays.items()},
            {k: v.copy() for k, v in self.grads.items()},
        )

    def check_finite(self) -> None:
        for k, v in self.arrays.items():
            if not np.all(np.isfinite(v)):
                raise NumericalError(f"parameter {k} has non-finite entries")

    def flat(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.arrays.values()])

    def flat_grad(self) -> np.ndarray:
        return np.concatenate([self.grads[k].ravel() for k in self.arrays])

    def set_flat(self, vec: np.ndarray) -> None:
        offset = 0
        for k, v in self.arrays.items():
            n = v.size
            self.arrays[k] = vec[offset : offset + n].reshape(v.shape).copy()
            offset += n

    def weight_norm(self) -> float:
        return float(math.sqrt(sum(float(np.sum(self.arrays[k] ** 2)) for k in self.weight_keys())))

    def save(self, dest: str | Path, **meta) -> None:
        """Write an ``.npz`` checkpoint; every array keeps its shape header."""
        entries = {"format_version": np.array(CHECKPOINT_VERSION), **self.arrays}
        entries.update({f"meta.{k}": np.asarray(v) for k, v in meta.items()})
        # fixed member timestamps keep identical checkpoints byte-identical
        with zipfile.ZipFile(dest, "w", compression=zipfile.ZIP_STORED) as zf:
            for name, arr in entries.items():
                buf = io.BytesIO()
                np.lib.format.write_array(buf, np.array(arr, order="C"), allow_pickle=False)
                zf.writestr(zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0)), buf.getvalue())

    @classmethod
    def load(cls, src: str | Path) -> tuple["NetworkParams", dict]:
        with np.load(src, allow_pickle=False) as data:
            version = int(data["format_version"])
            if version != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {version}")
            arrays, meta = {}, {}
            for k in data.files:
                if k == "format_version":
                    continue
                if k.startswith("meta."):
                    meta[k[5:]] = data[k].item() if data[k].ndim == 0 else data[k]
                else:
                    arrays[k] = data[k].astype(np.float64)
        params = cls(arrays)
        params.check_finite()
        return params, meta


def mlp_forward(params: NetworkParams, prefix: str, x: np.ndarray) -> tuple[np.ndarray, list]:
    """Returns the ``(n,)`` output and the cache of layer inputs for backward."""
    n_layers = params.n_layers(prefix)
    h = x
    cache = []
    for k in range(n_layers):
        cache.append(h)
        z = h @ params.arrays[f"{prefix}.W{k}"] + params.arrays[f"{prefix}.b{k}"]
        h = np.maximum(z, 0.0) if k < n_layers - 1 else z
    return h[:, 0], cache


def mlp_backward(params: NetworkParams, prefix: str, cache: list, d_out: np.ndarray) -> None:
    """Accumulate d(loss)/d(params) into ``params.grads`` given d(loss)/d(output)."""
    grad = d_out[:, None]
    for k in reversed(range(len(cache))):
        h_in = cache[k]
        params.grads[f"{prefix}.W{k}"] += h_in.T @ grad
        params.grads[f"{prefix}.b{k}"] += grad.sum(axis=0)
        if k > 0:
            grad = (grad @ params.arrays[f"{prefix}.W{k}"].T) * (h_in > 0)


def gaussian_log_prob(actions: np.ndarray, mean: np.ndarray, log_std: float) -> np.ndarray:
    z = (actions - mean) * math.exp(-log_std)
    return -0.5 * z * z - log_std - _LOG_SQRT_2PI


def policy_forward(params: NetworkParams, obs: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Action mean, action std and state value for a batch of normalised observations."""
    params.check_finite()
    obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
    mean, _ = mlp_forward(params, "pi", obs)
    value, _ = mlp_forward(params, "vf", obs)
    std = np.full_like(mean, math.exp(params.log_std))
    return mean, std, value

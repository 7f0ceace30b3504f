"""From-scratch actor-critic PPO."""
from .gae import RolloutBuffer, compute_gae, normalize_advantages
from .loss import LossInfo, clipped_surrogate_loss
from .network import LOG_STD_BOUNDS, NetworkParams, gaussian_log_prob, policy_forward
from .optim import Adam
from .trainer import LogRow, TrainConfig, TrainResult, read_training_log, train, write_training_log

__all__ = [
    "Adam",
    "LOG_STD_BOUNDS",
    "LogRow",
    "LossInfo",
    "NetworkParams",
    "RolloutBuffer",
    "TrainConfig",
    "TrainResult",
    "clipped_surrogate_loss",
    "compute_gae",
    "gaussian_log_prob",
    "normalize_advantages",
    "policy_forward",
    "read_training_log",
    "train",
    "write_training_log",
]

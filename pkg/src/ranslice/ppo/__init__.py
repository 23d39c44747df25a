"""Actor-critic agent: networks, PPO update, penalty, warm-up and the online agent."""

from .agent import AgentConfig, Snapshot, SnapshotError, TRAIN_LOG_COLUMNS, XSliceAgent
from .algo import (Adam, Hyper, Minibatch, RolloutBuffer, Transition, apply_penalty, gae,
                   gaussian_log_prob, normalize, penalty_triggered, ppo_loss, sample_action,
                   synthetic_batch, update, warmup)
from .networks import (NumericalHealthError, backward, checksum, forward, init_params,
                       policy_forward)

__all__ = [
    "Adam", "AgentConfig", "Hyper", "Minibatch", "NumericalHealthError", "RolloutBuffer",
    "Snapshot", "SnapshotError", "TRAIN_LOG_COLUMNS", "Transition", "XSliceAgent",
    "apply_penalty", "backward", "checksum", "forward", "gae", "gaussian_log_prob",
    "init_params", "normalize", "penalty_triggered", "policy_forward", "ppo_loss",
    "sample_action", "synthetic_batch", "update", "warmup",
]

"""Diffusion-policy soft actor-critic for contract design, plus a Gaussian SAC baseline."""

from covsem.rdsac.buffer import Batch, ReplayBuffer
from covsem.rdsac.critics import CriticPair, bellman_targets, critic_loss
from covsem.rdsac.diffusion import (DiffusionSchedule, PolicyBundle, build_schedule, forward_noise,
                                    reverse_chain, reverse_sample)
from covsem.rdsac.entropy import ENTROPY_FLOOR, entropy_estimate, entropy_tensor
from covsem.rdsac.trainer import (CURVE_COLUMNS, CURVE_SCHEMA_VERSION, Agent, TrainConfig,
                                  TrainingDiverged, TrainResult, actor_loss, diffusion_loss,
                                  eval_states, evaluate, load_agent, make_agent, read_curve,
                                  run_loop, save_agent, seed_streams, train, update, write_curve)
from covsem.rdsac.sac import (GaussianPolicy, SacAgent, make_sac_agent, mean_policy_std,
                              sac_baseline_train)

__all__ = [
    "Batch", "ReplayBuffer", "CriticPair", "bellman_targets", "critic_loss", "DiffusionSchedule",
    "PolicyBundle", "build_schedule", "forward_noise", "reverse_chain", "reverse_sample",
    "ENTROPY_FLOOR", "entropy_estimate", "entropy_tensor", "CURVE_COLUMNS", "CURVE_SCHEMA_VERSION",
    "Agent", "TrainConfig", "TrainingDiverged", "TrainResult", "actor_loss", "diffusion_loss",
    "eval_states", "evaluate", "load_agent", "make_agent", "read_curve", "run_loop", "save_agent",
    "seed_streams", "train", "update", "write_curve", "GaussianPolicy", "SacAgent",
    "make_sac_agent", "mean_policy_std", "sac_baseline_train",
]

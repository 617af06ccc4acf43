"""Styled walking-motion synthesis with a conditional denoising diffusion
model: schedule math, a minimal autodiff substrate, the conditional
denoiser/discriminator pair, motion data handling, training, and a CLI.
"""

__version__ = "0.1.0"

from .autodiff import AdamState, Tape, adam_step, grad_check
from .denoiser import (ConditionPair, DenoiserParams, DiscriminatorParams,
                       denoise, discriminate, timestep_embedding)
from .motion import (BvhParseError, FeatureLayout, MotionClip, NormStats, Skeleton,
                     WalkStyle, compute_norm_stats, detect_foot_contacts,
                     forward_kinematics, normalize, parse_bvh, synthetic_walk,
                     to_features, write_bvh)
from .schedule import (NoiseSchedule, make_linear_schedule, posterior_mean,
                       predict_x0, q_sample, reverse_step, sample_loop)
from .training import (CheckpointError, ConfigError, LossReport, NumericError,
                       TrainConfig, aux_losses, ddpm_loss, discriminator_loss,
                       generator_adv_loss, load_checkpoint, run_training,
                       save_checkpoint, train_step)

__all__ = [
    "AdamState", "Tape", "adam_step", "grad_check",
    "ConditionPair", "DenoiserParams", "DiscriminatorParams",
    "denoise", "discriminate", "timestep_embedding",
    "BvhParseError", "FeatureLayout", "MotionClip", "NormStats", "Skeleton",
    "WalkStyle", "compute_norm_stats", "detect_foot_contacts",
    "forward_kinematics", "normalize", "parse_bvh", "synthetic_walk",
    "to_features", "write_bvh",
    "NoiseSchedule", "make_linear_schedule", "posterior_mean", "predict_x0",
    "q_sample", "reverse_step", "sample_loop",
    "CheckpointError", "ConfigError", "LossReport", "NumericError",
    "TrainConfig", "aux_losses", "ddpm_loss", "discriminator_loss",
    "generator_adv_loss", "load_checkpoint", "run_training", "save_checkpoint",
    "train_step",
]

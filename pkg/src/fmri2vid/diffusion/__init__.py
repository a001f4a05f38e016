"""Latent video diffusion: schedule, latent map, denoiser, guidance, sampling and training."""
from .schedule import NoiseSchedule, q_sample, ddim_step
from .latent import LatentMap, CHANNELS
from .denoiser import DenoiserConfig, VideoDenoiser, DenoiserBlock, key_frames, sc_attention
from .guidance import GuidanceSpec, guided_noise, ddim_sample, model_eps, initial_noise
from .train import (GeneratorConfig, CotrainConfig, TrainCurve, FixedProbe, diffusion_loss,
                    drop_condition, sample_noise, train_generator, freeze_for_cotrain, cotrain_step, cotrain,
                    fmri_negative, unfreeze)

__all__ = [
    "NoiseSchedule", "q_sample", "ddim_step", "LatentMap", "CHANNELS", "DenoiserConfig",
    "VideoDenoiser", "DenoiserBlock", "key_frames", "sc_attention", "GuidanceSpec",
    "guided_noise", "ddim_sample", "model_eps", "initial_noise", "GeneratorConfig",
    "CotrainConfig", "TrainCurve", "FixedProbe", "diffusion_loss", "drop_condition", "sample_noise",
    "train_generator", "freeze_for_cotrain", "cotrain_step", "cotrain", "fmri_negative",
    "unfreeze",
]

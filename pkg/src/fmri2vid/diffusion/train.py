"""Noise-prediction training: caption-conditioned generator, then fMRI co-training."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..encoder.model import FmriModel, sparsify
from ..encoder.train import check_finite
from ..numerics import AdamW, mse, no_grad
from ..numerics.tensor import Tensor, as_tensor
from ..synthdata.dataset import fmri_windows
from .denoiser import VideoDenoiser
from .schedule import NoiseSchedule, q_sample


def drop_condition(cond: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Replace whole conditioning rows by the null (all-zero) condition with probability ``rate``."""
    if rate <= 0:
        return cond
    keep = (rng.random(cond.shape[0]) >= rate).astype(np.float64)
    return cond * Tensor(keep.reshape((-1,) + (1,) * (cond.ndim - 1)))


def sample_noise(shape: tuple[int, ...], rng: np.random.Generator, offset: float = 0.0) -> np.ndarray:
    """Gaussian noise plus an optional per-(clip, channel) constant of std ``offset``.

    The shared component hides the clip's global colour in the noisy latent,
    so the model has to take it from the condition.
    """
    noise = rng.standard_normal(shape)
    if offset > 0:
        n, _, c = shape[:3]
        noise = noise + offset * rng.standard_normal((n, 1, c) + (1,) * (len(shape) - 3))
    return noise


def diffusion_loss(denoiser: VideoDenoiser, z0: np.ndarray, cond, schedule: NoiseSchedule,
                   rng: np.random.Generator | None = None, t=None, noise=None,
                   cond_dropout: float = 0.0, offset_noise: float = 0.0) -> Tensor:
    """Mean squared error between the injected and predicted noise.

    ``t`` and ``noise`` are drawn from ``rng`` unless given; timesteps avoid 0,
    where the noisy latent carries no information about the noise.
    """
    n = z0.shape[0]
    if t is None:
        t = rng.integers(1, schedule.T, size=n)
    if noise is None:
        noise = sample_noise(z0.shape, rng, offset_noise)
    cond = as_tensor(cond)
    if cond_dropout > 0:
        cond = drop_condition(cond, cond_dropout, rng)
    zt = q_sample(schedule, z0, t, noise)
    return mse(denoiser(zt, t, cond), noise)


@dataclass
class FixedProbe:
    """A frozen (items, timesteps, noise) triple; losses on it are comparable across steps."""

    items: np.ndarray
    t: np.ndarray
    noise: np.ndarray

    @classmethod
    def make(cls, n_items: int, size: int, latent_shape, schedule: NoiseSchedule, seed: int,
             offset_noise: float = 0.0) -> "FixedProbe":
        rng = np.random.default_rng([seed, 9])
        items = np.sort(rng.choice(n_items, min(size, n_items), replace=False))
        t = rng.integers(1, schedule.T, size=items.size)
        return cls(items, t, sample_noise((items.size,) + tuple(latent_shape), rng, offset_noise))


@dataclass
class GeneratorConfig:
    steps: int = 400
    batch_size: int = 16
    lr: float = 1e-3
    weight_decay: float = 0.01
    cond_dropout: float = 0.1
    offset_noise: float = 0.5
    probe_size: int = 32
    log_every: int = 25
    seed: int = 0


@dataclass
class TrainCurve:
    train_loss: list = field(default_factory=list)
    probe_loss: list = field(default_factory=list)   # (step, loss)


def train_generator(denoiser: VideoDenoiser, latents: np.ndarray, cond: np.ndarray,
                    schedule: NoiseSchedule, gcfg: GeneratorConfig) -> TrainCurve:
    """Train every denoiser parameter on (latent clip, caption token) pairs."""
    rng = np.random.default_rng([gcfg.seed, 303])
    opt = AdamW(denoiser.parameters(), lr=gcfg.lr, weight_decay=gcfg.weight_decay)
    probe = FixedProbe.make(len(latents), gcfg.probe_size, latents.shape[1:], schedule, gcfg.seed,
                            gcfg.offset_noise)
    curve = TrainCurve()

    def probe_loss() -> float:
        with no_grad():
            return diffusion_loss(denoiser, latents[probe.items], cond[probe.items], schedule,
                                  t=probe.t, noise=probe.noise).item()

    for step in range(gcfg.steps):
        if step % gcfg.log_every == 0:
            curve.probe_loss.append((step, probe_loss()))
        items = rng.choice(len(latents), min(gcfg.batch_size, len(latents)), replace=False)
        loss = diffusion_loss(denoiser, latents[items], cond[items], schedule, rng,
                              cond_dropout=gcfg.cond_dropout, offset_noise=gcfg.offset_noise)
        check_finite(loss.item(), "train-gen", step)
        opt.zero_grad()
        loss.backward()
        opt.step()
        curve.train_loss.append(loss.item())
    curve.probe_loss.append((gcfg.steps, probe_loss()))
    return curve


# -- co-training ---------------------------------------------------------------
@dataclass
class CotrainConfig:
    steps: int = 500
    batch_size: int = 16
    lr: float = 5e-4
    weight_decay: float = 0.01
    cond_dropout: float = 0.1
    sparsify: float = 0.2
    offset_noise: float = 0.5
    probe_size: int = 32
    log_every: int = 25
    window: int = 2
    shift: int = 3
    direction: str = "forward"
    seed: int = 0


def freeze_for_cotrain(fmri_model: FmriModel, denoiser: VideoDenoiser) -> list:
    """Trainable set: the whole fMRI model plus the denoiser's attention layers; all else frozen."""
    attn = {id(p) for p in denoiser.attention_parameters()}
    for p in denoiser.parameters():
        p.requires_grad = id(p) in attn
        p.grad = None
    for p in fmri_model.parameters():
        p.requires_grad = True
    return fmri_model.parameters() + denoiser.attention_parameters()


def unfreeze(module) -> None:
    for p in module.parameters():
        p.requires_grad = True


def cotrain_step(fmri_model: FmriModel, denoiser: VideoDenoiser, windows: np.ndarray, z0: np.ndarray,
                 schedule: NoiseSchedule, rng: np.random.Generator | None = None, t=None, noise=None,
                 cond_dropout: float = 0.0, offset_noise: float = 0.0) -> Tensor:
    """Noise-prediction loss with the fMRI model's token embedding as the condition."""
    cond = fmri_model(windows, rng).unpooled
    return diffusion_loss(denoiser, z0, cond, schedule, rng, t=t, noise=noise,
                          cond_dropout=cond_dropout, offset_noise=offset_noise)


def cotrain(fmri_model: FmriModel, denoiser: VideoDenoiser, train, latents: np.ndarray,
            schedule: NoiseSchedule, ccfg: CotrainConfig) -> TrainCurve:
    rng = np.random.default_rng([ccfg.seed, 404])
    params = freeze_for_cotrain(fmri_model, denoiser)
    opt = AdamW(params, lr=ccfg.lr, weight_decay=ccfg.weight_decay)
    probe = FixedProbe.make(len(latents), ccfg.probe_size, latents.shape[1:], schedule, ccfg.seed,
                           ccfg.offset_noise)
    probe_win = fmri_windows(train.fmri, probe.items, ccfg.shift, ccfg.window, ccfg.direction)
    curve = TrainCurve()

    def probe_loss() -> float:
        fmri_model.eval()
        with no_grad():
            v = cotrain_step(fmri_model, denoiser, probe_win, latents[probe.items], schedule,
                             t=probe.t, noise=probe.noise).item()
        fmri_model.train()
        return v

    fmri_model.train()
    for step in range(ccfg.steps):
        if step % ccfg.log_every == 0:
            curve.probe_loss.append((step, probe_loss()))
        items = rng.choice(len(latents), min(ccfg.batch_size, len(latents)), replace=False)
        win = fmri_windows(train.fmri, items, ccfg.shift, ccfg.window, ccfg.direction)
        win = sparsify(win, ccfg.sparsify, rng)
        loss = cotrain_step(fmri_model, denoiser, win, latents[items], schedule, rng,
                            cond_dropout=ccfg.cond_dropout, offset_noise=ccfg.offset_noise)
        check_finite(loss.item(), "cotrain", step)
        opt.zero_grad()
        loss.backward()
        opt.step()
        curve.train_loss.append(loss.item())
    curve.probe_loss.append((ccfg.steps, probe_loss()))
    fmri_model.eval()
    unfreeze(denoiser)
    return curve


def fmri_negative(fmri_model: FmriModel, windows: np.ndarray) -> np.ndarray:
    """Unpooled embedding ``[1, l, d_c]`` of the element-wise mean fMRI window."""
    windows = np.asarray(windows, dtype=np.float64)
    if windows.shape[0] == 0:
        raise ValueError("cannot average an empty fMRI set")
    was = fmri_model.training
    fmri_model.eval()
    with no_grad():
        out = fmri_model(windows.mean(axis=0, keepdims=True)).unpooled.data
    fmri_model.train(was)
    return out

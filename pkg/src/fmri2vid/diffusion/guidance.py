"""Guided noise estimates and the deterministic sampler."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..numerics.tensor import no_grad
from .schedule import NoiseSchedule, ddim_step

EpsFn = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass
class GuidanceSpec:
    """``positive`` and ``negative`` are ``[n, l, d_c]``; ``negative=None`` means the null condition."""

    positive: np.ndarray
    negative: np.ndarray | None = None
    scale: float = 12.5

    def __post_init__(self):
        if self.scale < 0:
            raise ValueError("guidance scale must be >= 0")


def guided_noise(eps_fn: EpsFn, z: np.ndarray, t, spec: GuidanceSpec,
                 null: np.ndarray | None = None) -> np.ndarray:
    """``eps(z, neg) + s * (eps(z, pos) - eps(z, neg))``.

    With no negative the null condition takes its place.  ``s == 1`` returns
    the conditional estimate itself and equal conditions return the negative
    branch, so those identities hold bit for bit rather than up to rounding.
    """
    pos = np.asarray(spec.positive, dtype=np.float64)
    if spec.negative is None:
        neg = np.zeros_like(pos) if null is None else np.asarray(null, dtype=np.float64)
    else:
        neg = np.broadcast_to(np.asarray(spec.negative, dtype=np.float64), pos.shape)
    if np.array_equal(pos, neg):
        return eps_fn(z, t, neg)
    eps_c = eps_fn(z, t, pos)
    if spec.scale == 1.0:
        return eps_c
    eps_n = eps_fn(z, t, neg)
    return eps_n + spec.scale * (eps_c - eps_n)


def model_eps(denoiser) -> EpsFn:
    def fn(z, t, cond):
        with no_grad():
            return denoiser(z, t, cond).data
    return fn


def initial_noise(shape: tuple[int, ...], seed: int, offset: float = 0.0) -> np.ndarray:
    """One independent stream per item, so a sample never depends on its batch neighbours."""
    from .train import sample_noise
    return np.concatenate([sample_noise((1,) + tuple(shape[1:]), np.random.default_rng([seed, i]), offset)
                           for i in range(shape[0])])


def ddim_sample(eps_fn: EpsFn, spec: GuidanceSpec, shape: tuple[int, ...], schedule: NoiseSchedule,
                steps: int = 50, seed: int = 0, clip: float | None = 1.0,
                null: np.ndarray | None = None, z_init: np.ndarray | None = None,
                offset_noise: float = 0.0) -> np.ndarray:
    """Deterministic sampling of ``shape = (n, F, C, h, w)`` latents."""
    ts = schedule.ddim_timesteps(steps)
    a = schedule.alphas_cum
    z = initial_noise(shape, seed, offset_noise) if z_init is None else np.array(z_init, dtype=np.float64)
    for i, t in enumerate(ts):
        a_prev = a[ts[i + 1]] if i + 1 < len(ts) else 1.0
        eps = guided_noise(eps_fn, z, np.full(shape[0], t), spec, null)
        z, _ = ddim_step(z, eps, a[t], a_prev, clip)
    return z

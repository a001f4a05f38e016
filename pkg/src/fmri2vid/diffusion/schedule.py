"""Linear noise schedule, forward noising and the deterministic DDIM update."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    """``alphas_cum[t] = prod_{k<t} (1 - betas[k])`` so ``alphas_cum[0] == 1`` (clean data)."""

    T: int = 100
    beta_start: float = 1e-3
    beta_end: float = 0.1

    def __post_init__(self):
        if self.T < 2:
            raise ValueError("need at least two timesteps")
        if not 0.0 < self.beta_start < self.beta_end < 1.0:
            raise ValueError("require 0 < beta_start < beta_end < 1")

    @property
    def betas(self) -> np.ndarray:
        return np.linspace(self.beta_start, self.beta_end, self.T)

    @property
    def alphas_cum(self) -> np.ndarray:
        return np.concatenate([[1.0], np.cumprod(1.0 - self.betas)[:-1]])

    def check_t(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.int64)
        if np.any(t < 0) or np.any(t >= self.T):
            raise IndexError(f"timestep out of range [0, {self.T})")
        return t

    def ddim_timesteps(self, steps: int) -> np.ndarray:
        """Descending, strictly decreasing timesteps starting at ``T - 1``."""
        if steps < 1:
            raise ValueError("DDIM needs at least one step")
        if steps > self.T:
            raise ValueError(f"steps={steps} exceeds the {self.T} training timesteps")
        return (np.arange(steps, 0, -1) * (self.T - 1)) // steps


def _bcast(values: np.ndarray, ndim: int) -> np.ndarray:
    return values.reshape(values.shape + (1,) * (ndim - values.ndim))


def q_sample(schedule: NoiseSchedule, z0: np.ndarray, t, noise: np.ndarray) -> np.ndarray:
    """``sqrt(a_t) z0 + sqrt(1 - a_t) noise``; ``t`` is a scalar or one step per leading item."""
    t = schedule.check_t(t)
    a = _bcast(schedule.alphas_cum[t], np.ndim(z0))
    return np.sqrt(a) * z0 + np.sqrt(1.0 - a) * noise


def ddim_step(z: np.ndarray, eps: np.ndarray, a_t: float, a_prev: float,
              clip: float | None = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """One eta=0 update; returns ``(z_prev, x0_estimate)``."""
    x0 = (z - np.sqrt(1.0 - a_t) * eps) / np.sqrt(a_t)
    if clip is not None:
        x0 = np.clip(x0, -clip, clip)
    return np.sqrt(a_prev) * x0 + np.sqrt(1.0 - a_prev) * eps, x0

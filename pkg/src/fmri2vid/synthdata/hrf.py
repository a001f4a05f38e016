from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def double_gamma(t: np.ndarray, peak_delay: float = 6.0, undershoot_delay: float = 16.0,
                 dispersion: float = 0.9, undershoot_ratio: float = 0.35) -> np.ndarray:
    """Glover-style double gamma; the positive lobe peaks exactly at ``peak_delay``."""
    t = np.asarray(t, dtype=np.float64)
    a1 = peak_delay / dispersion
    a2 = undershoot_delay / dispersion
    tp = np.clip(t, 0.0, None)
    pos = (tp / peak_delay) ** a1 * np.exp(-(tp - peak_delay) / dispersion)
    neg = (tp / undershoot_delay) ** a2 * np.exp(-(tp - undershoot_delay) / dispersion)
    return np.where(t > 0, pos - undershoot_ratio * neg, 0.0)


@dataclass
class HrfModel:
    """Sampled hemodynamic response kernel.

    ``dt`` is the sampling interval of the neural drive the kernel is
    convolved with (one video frame at the default 3 FPS).
    """

    dt: float = 1.0 / 3.0
    peak_delay: float = 6.0
    undershoot_delay: float = 16.0
    length: float = 32.0
    kernel: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.dt <= 0 or self.length <= 0:
            raise ValueError("dt and length must be positive")
        n = int(round(self.length / self.dt))
        self.kernel = double_gamma(np.arange(n) * self.dt, self.peak_delay, self.undershoot_delay)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.kernel.size) * self.dt

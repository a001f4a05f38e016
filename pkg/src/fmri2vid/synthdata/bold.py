from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .hrf import HrfModel


@dataclass
class SubjectRecording:
    """BOLD repeats ``[R, T, V]`` on the TR grid."""

    repeats: np.ndarray
    tr_seconds: float = 2.0
    signal_mask: np.ndarray | None = None

    @property
    def voxels(self) -> np.ndarray:
        return self.repeats.mean(axis=0)

    @property
    def n_scans(self) -> int:
        return self.repeats.shape[1]


def convolve_hrf(drive: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Causal per-column discrete convolution, truncated to the input length."""
    return lfilter(kernel, [1.0], np.asarray(drive, dtype=np.float64), axis=0)


def simulate_bold(stimulus_series: np.ndarray, hrf: HrfModel, noise_sigma: float,
                  tr_seconds: float = 2.0, n_repeats: int = 1,
                  rng: np.random.Generator | None = None,
                  signal_mask: np.ndarray | None = None) -> SubjectRecording:
    """Convolve a ``[T_hi, V]`` neural drive with the HRF and sample it every TR.

    Scan ``s`` is the convolved signal at time ``s * tr_seconds``; every
    repeat gets independent Gaussian noise of standard deviation ``noise_sigma``.
    """
    if noise_sigma < 0:
        raise ValueError(f"noise_sigma must be non-negative, got {noise_sigma}")
    drive = np.asarray(stimulus_series, dtype=np.float64)
    if drive.ndim == 1:
        drive = drive[:, None]
    ratio = tr_seconds / hrf.dt
    step = int(round(ratio))
    if abs(ratio - step) > 1e-9 or step < 1:
        raise ValueError(f"TR {tr_seconds}s is not an integer multiple of the drive interval {hrf.dt}s")
    if drive.shape[0] % step:
        raise ValueError(f"drive length {drive.shape[0]} is not a multiple of {step} samples per TR")
    clean = convolve_hrf(drive, hrf.kernel)[::step]
    reps = np.repeat(clean[None], n_repeats, axis=0)
    if noise_sigma > 0:
        rng = np.random.default_rng() if rng is None else rng
        reps = reps + rng.normal(0.0, noise_sigma, size=reps.shape)
    return SubjectRecording(reps, tr_seconds, signal_mask)

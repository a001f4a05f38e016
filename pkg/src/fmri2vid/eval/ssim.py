"""Structural similarity with the canonical Gaussian window."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


@dataclass(frozen=True)
class SsimConfig:
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 1.0

    def __post_init__(self):
        if self.k1 <= 0 or self.k2 <= 0:
            raise ValueError("K1 and K2 must be positive")
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError("window must be a positive odd size")

    def taps(self) -> np.ndarray:
        """Normalised 1-D Gaussian; the 2-D window is its outer product."""
        r = np.arange(self.window) - self.window // 2
        g = np.exp(-(r**2) / (2 * self.sigma**2))
        return g / g.sum()

    def kernel(self) -> np.ndarray:
        g = self.taps()
        return np.outer(g, g)


def _local_mean(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable Gaussian mean over the last two axes, valid positions only."""
    x = sliding_window_view(x, g.size, axis=-2) @ g              # [..., H-w+1, W]
    return sliding_window_view(x, g.size, axis=-1) @ g           # [..., H-w+1, W-w+1]


def ssim_map(a: np.ndarray, b: np.ndarray, cfg: SsimConfig = SsimConfig()) -> np.ndarray:
    """Local SSIM over valid window positions for single-channel images ``[..., H, W]``."""
    g = cfg.taps()
    if a.shape[-2] < cfg.window or a.shape[-1] < cfg.window:
        raise ValueError(f"image {a.shape} smaller than the {cfg.window}x{cfg.window} window")
    c1 = (cfg.k1 * cfg.dynamic_range) ** 2
    c2 = (cfg.k2 * cfg.dynamic_range) ** 2
    mu_a, mu_b = _local_mean(a, g), _local_mean(b, g)
    var_a = _local_mean(a * a, g) - mu_a**2
    var_b = _local_mean(b * b, g) - mu_b**2
    cov = _local_mean(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a, b, cfg: SsimConfig = SsimConfig()) -> float:
    """Mean local SSIM of two frames ``[H, W]`` or ``[H, W, C]``, averaged over channels."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        return float(ssim_map(a, b, cfg).mean())
    if a.ndim != 3:
        raise ValueError("expected [H, W] or [H, W, C] frames")
    maps = ssim_map(np.moveaxis(a, -1, 0), np.moveaxis(b, -1, 0), cfg)
    return float(maps.mean(axis=(1, 2)).mean())


def clip_ssim(pred: np.ndarray, gt: np.ndarray, cfg: SsimConfig = SsimConfig()) -> float:
    """Per-frame SSIM averaged over the frames of one clip ``[F, H, W, C]``."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.ndim != 4:
        raise ValueError(f"expected matching [F, H, W, C] clips, got {pred.shape} and {gt.shape}")
    maps = ssim_map(np.moveaxis(pred, -1, 1), np.moveaxis(gt, -1, 1), cfg)   # [F, C, h, w]
    return float(maps.mean(axis=(2, 3)).mean(axis=1).mean())

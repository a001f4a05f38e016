"""Fixed orthonormal patch pooling between pixels and a 4-channel latent grid.

Each 4x4x3 pixel patch is projected onto four orthonormal vectors: the three
per-channel means and a luminance top-minus-bottom contrast.  Coefficients
are rescaled so every latent channel spans [-1, 1] for pixels in [0, 1].
"""
from __future__ import annotations

import numpy as np

CHANNELS = 4


def _basis(patch: int) -> np.ndarray:
    n = patch * patch
    basis = np.zeros((CHANNELS, patch, patch, 3))
    for c in range(3):
        basis[c, :, :, c] = 1.0 / np.sqrt(n)
    half = patch // 2
    basis[3, :half] = 1.0
    basis[3, half:] = -1.0
    basis[3] /= np.sqrt(n * 3)
    return basis.reshape(CHANNELS, -1)


class LatentMap:
    def __init__(self, patch: int = 4):
        if patch < 2 or patch % 2:
            raise ValueError("patch size must be an even number >= 2")
        self.patch = patch
        self.basis = _basis(patch)                          # [4, patch*patch*3], orthonormal rows
        self.scale = np.abs(self.basis).sum(axis=1)         # max |coefficient| for inputs in [-1, 1]

    def _patches(self, frames: np.ndarray) -> np.ndarray:
        *lead, h, w, c = frames.shape
        k = self.patch
        if h % k or w % k:
            raise ValueError(f"frame {h}x{w} is not a multiple of patch {k}")
        x = frames.reshape(*lead, h // k, k, w // k, k, c)
        nd = len(lead)
        x = np.moveaxis(x, nd + 2, nd + 1)                 # [..., h/k, w/k, k, k, c]
        return x.reshape(*lead, h // k, w // k, k * k * c)

    def encode(self, frames: np.ndarray) -> np.ndarray:
        """Pixels ``[..., H, W, 3]`` in [0, 1] -> latents ``[..., 4, H/p, W/p]``."""
        coef = self._patches(2.0 * np.asarray(frames, dtype=np.float64) - 1.0) @ self.basis.T
        return np.moveaxis(coef / self.scale, -1, -3)

    def decode(self, z: np.ndarray) -> np.ndarray:
        """Latents ``[..., 4, h, w]`` -> pixels ``[..., h*p, w*p, 3]`` (projection onto the basis span)."""
        z = np.moveaxis(np.asarray(z, dtype=np.float64), -3, -1) * self.scale
        flat = z @ self.basis                               # [..., h, w, p*p*3]
        *lead, h, w, _ = flat.shape
        k = self.patch
        x = flat.reshape(*lead, h, w, k, k, 3)
        nd = len(lead)
        x = np.moveaxis(x, nd + 2, nd + 1).reshape(*lead, h * k, w * k, 3)
        return (x + 1.0) / 2.0

    def encode_clips(self, clips: np.ndarray) -> np.ndarray:
        """``[n, F, H, W, 3]`` -> ``[n, F, 4, h, w]``."""
        return self.encode(clips)

"""Frozen stand-ins for pretrained text and image encoders.

Both are fixed random maps built from a pinned seed; nothing here is ever
trained, so their outputs are plain arrays rather than graph tensors.
"""
from __future__ import annotations

import numpy as np

from ..numerics.nn import sinusoidal_embedding
from ..synthdata.scenes import CATALOG_SEED, PAD, VOCAB_SIZE

EMBED_SEED = CATALOG_SEED + 1


def l2_normalize(x: np.ndarray, axis: int = -1, eps: float = 1e-12) -> np.ndarray:
    return x / np.maximum(np.linalg.norm(x, axis=axis, keepdims=True), eps)


class FrozenEmbedder:
    modality = ""

    def __init__(self, dim: int):
        self.dim = dim

    def __call__(self, x) -> np.ndarray:
        return l2_normalize(self.features(x))

    def features(self, x) -> np.ndarray:
        raise NotImplementedError


class FrozenTextEmbedder(FrozenEmbedder):
    """Token table where synonym pairs (ids ``2k`` and ``2k+1``) sit close together."""

    modality = "text"

    def __init__(self, dim: int = 64, token_dim: int = 32, vocab: int = VOCAB_SIZE):
        super().__init__(dim)
        rng = np.random.default_rng([EMBED_SEED, 1])
        base = rng.normal(size=(vocab // 2, dim)).repeat(2, axis=0)
        self.table = base + 0.3 * rng.normal(size=(vocab, dim))
        self.table[PAD] = 0.0
        tok_base = rng.normal(size=(vocab // 2, token_dim)).repeat(2, axis=0)
        self.token_table = (tok_base + 0.3 * rng.normal(size=(vocab, token_dim))) / np.sqrt(token_dim)
        self.token_dim = token_dim
        self.table.setflags(write=False)
        self.token_table.setflags(write=False)

    def features(self, captions) -> np.ndarray:
        captions = np.asarray(captions, dtype=np.int64)
        vecs = self.table[captions]                               # [n, L, dim]
        return vecs.sum(axis=1) / np.maximum((captions != PAD).sum(axis=1, keepdims=True), 1)

    def tokens(self, captions) -> np.ndarray:
        """Per-token conditioning ``[n, L, token_dim]`` (padding stays zero)."""
        captions = np.asarray(captions, dtype=np.int64)
        pos = sinusoidal_embedding(np.arange(captions.shape[1]), self.token_dim) * 0.5
        out = self.token_table[captions] + pos
        return np.where((captions != PAD)[..., None], out, 0.0)


class FrozenImageEmbedder(FrozenEmbedder):
    """Random projection of 4x4-pooled, time-averaged, centred pixels."""

    modality = "image"

    def __init__(self, dim: int = 64, frame_size: int = 32, pool: int = 4):
        super().__init__(dim)
        if frame_size % pool:
            raise ValueError("frame size must be a multiple of the pooling size")
        self.pool = pool
        d_in = (frame_size // pool) ** 2 * 3
        rng = np.random.default_rng([EMBED_SEED, 2])
        self.weight = rng.normal(size=(d_in, dim)) / np.sqrt(d_in)
        self.weight.setflags(write=False)

    def features(self, clips) -> np.ndarray:
        clips = np.asarray(clips, dtype=np.float64)
        if clips.ndim == 4:
            clips = clips[:, None]
        n, f, h, w, c = clips.shape
        k = self.pool
        pooled = clips.reshape(n, f, h // k, k, w // k, k, c).mean(axis=(1, 3, 5))
        return (pooled.reshape(n, -1) - 0.5) @ self.weight

"""Scaled-similarity cross-entropy between fMRI rows and paired text/image rows."""
from __future__ import annotations

import numpy as np

from ..numerics import tensor as T
from ..numerics.tensor import Tensor, as_tensor

MODES = ("full", "text", "image")


def normalize(x: Tensor, eps: float = 1e-12) -> Tensor:
    norm = T.sqrt((x * x).sum(axis=-1, keepdims=True) + eps)
    return x / norm


def clip_loss(a, b, scale: float, symmetric: bool = False) -> Tensor:
    """Cross-entropy of ``scale * a b^T`` against the diagonal (row ``i`` -> column ``i``)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"embedding shapes differ: {a.shape} vs {b.shape}")
    if a.ndim != 2 or a.shape[0] == 0:
        raise ValueError("need a non-empty [n, d] batch")
    if scale <= 0:
        raise ValueError("scale must be positive")
    targets = np.arange(a.shape[0])
    logits = T.matmul(a, T.swapaxes(b, 0, 1)) * scale
    loss = T.cross_entropy(logits, targets)
    if symmetric:
        loss = (loss + T.cross_entropy(T.swapaxes(logits, 0, 1), targets)) * 0.5
    return loss


def trimodal_loss(emb_f, emb_t, emb_i, scale: float = 20.0, mode: str = "full",
                  symmetric: bool = False, l2: bool = True) -> Tensor:
    """Mean of the fMRI-text and fMRI-image losses; ``mode`` keeps one term only."""
    if mode not in MODES:
        raise ValueError(f"unknown contrastive mode {mode!r}; expected one of {MODES}")
    emb_f, emb_t, emb_i = as_tensor(emb_f), as_tensor(emb_t), as_tensor(emb_i)
    if not emb_f.shape == emb_t.shape == emb_i.shape:
        raise ValueError(f"shape mismatch: {emb_f.shape}, {emb_t.shape}, {emb_i.shape}")
    if l2:
        emb_f, emb_t, emb_i = normalize(emb_f), normalize(emb_t), normalize(emb_i)
    if mode == "text":
        return clip_loss(emb_f, emb_t, scale, symmetric)
    if mode == "image":
        return clip_loss(emb_f, emb_i, scale, symmetric)
    return (clip_loss(emb_f, emb_t, scale, symmetric) + clip_loss(emb_f, emb_i, scale, symmetric)) * 0.5


def retrieval_at_1(queries: np.ndarray, keys: np.ndarray) -> float:
    """Fraction of query rows whose most cosine-similar key is their own pair."""
    q = np.asarray(queries, dtype=np.float64)
    k = np.asarray(keys, dtype=np.float64)
    q = q / np.maximum(np.linalg.norm(q, axis=1, keepdims=True), 1e-12)
    k = k / np.maximum(np.linalg.norm(k, axis=1, keepdims=True), 1e-12)
    sim = q @ k.T
    return float(np.mean(np.argmax(sim, axis=1) == np.arange(len(q))))

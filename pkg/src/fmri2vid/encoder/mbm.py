"""Masked brain modelling: an asymmetric masked autoencoder over fMRI patch tokens."""
from __future__ import annotations

import math

import numpy as np

from ..numerics import tensor as T
from ..numerics.nn import LayerNorm, Linear, Module, Parameter, sinusoidal_embedding
from ..numerics.tensor import Tensor
from .model import Block, FmriEncoder, PatchConfig, patchify_voxels, voxel_valid_mask


def n_masked(n_tokens: int, mask_ratio: float) -> int:
    k = math.ceil(mask_ratio * n_tokens)
    if k <= 0:
        raise ValueError("mask ratio masks no tokens; the masked loss would be empty")
    if k >= n_tokens:
        raise ValueError(f"mask ratio {mask_ratio} leaves no visible token out of {n_tokens}")
    return k


def sample_mask(n: int, n_tokens: int, mask_ratio: float, rng: np.random.Generator):
    """Per-sample uniform masking without replacement.

    Returns ``(keep_ids [n, visible], restore_ids [n, p_tok], mask [n, p_tok])``
    where ``mask`` is 1 on masked tokens.
    """
    k = n_masked(n_tokens, mask_ratio)
    shuffle = np.argsort(rng.random((n, n_tokens)), axis=1)
    restore = np.argsort(shuffle, axis=1)
    keep = shuffle[:, : n_tokens - k]
    mask = np.ones((n, n_tokens))
    mask[np.arange(n)[:, None], keep] = 0.0
    return keep, restore, mask


def masked_mse(pred: Tensor, target: np.ndarray, mask: np.ndarray, valid: np.ndarray | None = None) -> Tensor:
    """Mean squared error over masked patches only (and real, non-padding voxels)."""
    weight = np.broadcast_to(mask[..., None], pred.shape).astype(np.float64)
    if valid is not None:
        weight = weight * valid
    diff = pred - Tensor(target)
    return (diff * diff * Tensor(weight)).sum() * (1.0 / weight.sum())


class MaskedBrainModel(Module):
    def __init__(self, n_voxels: int, cfg: PatchConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.encoder = FmriEncoder(n_voxels, cfg, rng)
        dd = cfg.decoder_dim
        self.decoder_embed = Linear(cfg.embed_dim, dd, rng)
        self.mask_token = Parameter(rng.normal(0.0, 0.02, size=dd))
        self.decoder_blocks = [Block(dd, cfg.decoder_heads, cfg.mlp_ratio, rng)
                               for _ in range(cfg.decoder_depth)]
        self.decoder_norm = LayerNorm(dd)
        self.decoder_pred = Linear(dd, cfg.patch_size, rng)
        n_tok = self.encoder.n_tokens
        self.decoder_pos = sinusoidal_embedding(np.arange(n_tok), dd)
        self.valid = voxel_valid_mask(n_voxels, cfg.patch_size).astype(np.float64)

    def forward_masked(self, fmri: np.ndarray, keep: np.ndarray, restore: np.ndarray) -> Tensor:
        """Reconstruct every patch ``[n, p_tok, patch]`` from the visible tokens."""
        n = fmri.shape[0]
        rows = np.arange(n)[:, None]
        tokens = self.encoder.embed(fmri)                          # [n, p, b]
        visible = T.take(tokens, (rows, keep))                     # [n, k, b]
        enc = self.encoder.run_blocks(T.reshape(visible, (n, 1) + visible.shape[1:]))
        enc = enc.reshape(n, keep.shape[1], -1)
        y = self.decoder_embed(enc)
        n_mask = restore.shape[1] - keep.shape[1]
        fill = Tensor(np.zeros((n, n_mask, self.cfg.decoder_dim))) + self.mask_token
        full = T.concat([y, fill], axis=1)
        full = T.take(full, (rows, restore)) + Tensor(self.decoder_pos)
        for blk in self.decoder_blocks:
            full = blk(full)
        return self.decoder_pred(self.decoder_norm(full))


def mbm_step(model: MaskedBrainModel, fmri: np.ndarray, rng: np.random.Generator):
    """One masked-reconstruction pass on single scans ``[n, V]``: ``(loss, reconstruction)``."""
    fmri = np.asarray(fmri, dtype=np.float64)
    if fmri.ndim == 3:
        if fmri.shape[1] != 1:
            raise ValueError("masked brain modelling works on single scans (window size 1)")
        fmri = fmri[:, 0]
    n_tok = model.encoder.n_tokens
    keep, restore, mask = sample_mask(fmri.shape[0], n_tok, model.cfg.mask_ratio, rng)
    pred = model.forward_masked(fmri, keep, restore)
    target = patchify_voxels(fmri, model.cfg.patch_size)
    loss = masked_mse(pred, target, mask, model.valid)
    return loss, pred

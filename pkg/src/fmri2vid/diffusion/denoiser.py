"""Small video noise predictor over latent clips.

Each block applies, with pre-norm residuals: spatial self-attention within a
frame, sparse-causal attention from frame ``i`` to frames ``i-2`` and
``i-1``, cross-attention to the conditioning tokens, and a feed-forward layer.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numerics import tensor as T
from ..numerics.nn import MLP, Attention, LayerNorm, Linear, Module, sinusoidal_embedding
from ..numerics.tensor import Tensor, as_tensor
from .latent import CHANNELS


@dataclass
class DenoiserConfig:
    frames: int = 6
    grid: int = 8              # latent height == width
    channels: int = CHANNELS
    token_patch: int = 2       # latent cells per token side
    hidden: int = 48
    heads: int = 4
    depth: int = 2
    cond_tokens: int = 8       # l
    cond_dim: int = 32         # d_c
    out_init: float = 0.1

    def __post_init__(self):
        if self.grid % self.token_patch:
            raise ValueError("grid must be a multiple of token_patch")
        if self.hidden % self.heads:
            raise ValueError("hidden must be divisible by heads")

    @property
    def tokens_per_frame(self) -> int:
        return (self.grid // self.token_patch) ** 2

    @property
    def token_dim(self) -> int:
        return self.channels * self.token_patch ** 2


def key_frames(n_frames: int, mode: str = "sparse_causal") -> list[tuple[int, ...]]:
    """Key/value frame indices for every query frame.

    ``sparse_causal``: the previous two frames with indices clamped at 0.
    ``first_anchor``: the first frame plus the previous frame.
    """
    if mode == "sparse_causal":
        return [(max(i - 2, 0), max(i - 1, 0)) for i in range(n_frames)]
    if mode == "first_anchor":
        return [(0, max(i - 1, 0)) for i in range(n_frames)]
    raise ValueError(f"unknown key-frame mode {mode!r}")


def sc_attention(attn: Attention, x: Tensor, kv: Tensor | None = None,
                 mode: str = "sparse_causal") -> Tensor:
    """Frame-wise attention: queries from ``x[:, i]``, keys/values from ``kv`` at :func:`key_frames`.

    ``x`` and ``kv`` are ``[B, F, N, d]``; ``kv`` defaults to ``x``.
    """
    x = as_tensor(x)
    kv = x if kv is None else as_tensor(kv)
    B, F, N, d = x.shape
    idx = np.array(key_frames(F, mode))                          # [F, 2]
    ctx = T.take(kv, (slice(None), idx))                         # [B, F, 2, N, d]
    ctx = ctx.reshape(B * F, 2 * N, d)
    out = attn(x.reshape(B * F, N, d), ctx)
    return out.reshape(B, F, N, d)


class DenoiserBlock(Module):
    def __init__(self, cfg: DenoiserConfig, rng: np.random.Generator):
        h = cfg.hidden
        self.norm_self = LayerNorm(h)
        self.self_attn = Attention(h, cfg.heads, rng)
        self.norm_sc = LayerNorm(h)
        self.sc_attn = Attention(h, cfg.heads, rng)
        self.norm_cross = LayerNorm(h)
        self.cross_attn = Attention(h, cfg.heads, rng, kv_dim=cfg.cond_dim)
        self.norm_ff = LayerNorm(h)
        self.ff = MLP(h, 2 * h, rng)

    def __call__(self, x: Tensor, cond: Tensor) -> Tensor:
        B, F, N, h = x.shape
        x = x + self.self_attn(self.norm_self(x).reshape(B * F, N, h)).reshape(B, F, N, h)
        x = x + sc_attention(self.sc_attn, self.norm_sc(x))
        x = x + self.cross_attn(self.norm_cross(x).reshape(B, F * N, h), cond).reshape(B, F, N, h)
        return x + self.ff(self.norm_ff(x))

    def attention_modules(self) -> list[Attention]:
        return [self.self_attn, self.sc_attn, self.cross_attn]


class VideoDenoiser(Module):
    """``eps(z_t, t, cond)`` for latent clips ``[B, F, C, h, w]`` and conditioning ``[B, l, d_c]``."""

    def __init__(self, cfg: DenoiserConfig, rng: np.random.Generator):
        self.cfg = cfg
        h = cfg.hidden
        self.embed = Linear(cfg.token_dim, h, rng)
        self.time_fc1 = Linear(h, h, rng)
        self.time_fc2 = Linear(h, h, rng)
        self.blocks = [DenoiserBlock(cfg, rng) for _ in range(cfg.depth)]
        self.norm_out = LayerNorm(h)
        self.out = Linear(h, cfg.token_dim, rng, init_scale=cfg.out_init)
        self.token_pos = sinusoidal_embedding(np.arange(cfg.tokens_per_frame), h)
        self.frame_pos = sinusoidal_embedding(np.arange(cfg.frames) * 4, h) * 0.5

    # -- token layout ----------------------------------------------------
    def tokenize(self, z: np.ndarray) -> np.ndarray:
        B, F, C, g, _ = z.shape
        k = self.cfg.token_patch
        x = z.reshape(B, F, C, g // k, k, g // k, k).transpose(0, 1, 3, 5, 2, 4, 6)
        return x.reshape(B, F, (g // k) ** 2, C * k * k)

    def untokenize(self, x: Tensor) -> Tensor:
        B, F, N, _ = x.shape
        k, C, g = self.cfg.token_patch, self.cfg.channels, self.cfg.grid
        x = x.reshape(B, F, g // k, g // k, C, k, k).transpose(0, 1, 4, 2, 5, 3, 6)
        return x.reshape(B, F, C, g, g)

    def null_condition(self, n: int) -> np.ndarray:
        return np.zeros((n, self.cfg.cond_tokens, self.cfg.cond_dim))

    def __call__(self, z, t, cond) -> Tensor:
        z = np.asarray(z.data if isinstance(z, Tensor) else z, dtype=np.float64)
        B, F = z.shape[:2]
        if F > self.frame_pos.shape[0]:
            raise ValueError(f"clip has {F} frames; the model was built for {self.frame_pos.shape[0]}")
        cond = as_tensor(cond)
        if cond.shape[1:] != (self.cfg.cond_tokens, self.cfg.cond_dim):
            raise ValueError(f"conditioning shape {cond.shape[1:]} != "
                             f"{(self.cfg.cond_tokens, self.cfg.cond_dim)}")
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), (B,))
        temb = Tensor(sinusoidal_embedding(t, self.cfg.hidden))
        temb = self.time_fc2(T.gelu(self.time_fc1(temb))).reshape(B, 1, 1, self.cfg.hidden)
        pos = self.token_pos[None, None] + self.frame_pos[None, :F, None]
        x = self.embed(Tensor(self.tokenize(z))) + Tensor(pos) + temb
        for blk in self.blocks:
            x = blk(x, cond)
        return self.untokenize(self.out(self.norm_out(x)))

    def attention_parameters(self) -> list:
        return [p for blk in self.blocks for a in blk.attention_modules() for p in a.parameters()]

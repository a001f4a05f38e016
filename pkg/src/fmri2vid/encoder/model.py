"""fMRI encoder: 1-D patch tokens, ViT blocks, inflated temporal attention and heads."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..numerics import tensor as T
from ..numerics.nn import MLP, Attention, LayerNorm, Linear, Module, Parameter, sinusoidal_embedding
from ..numerics.tensor import Tensor


@dataclass
class PatchConfig:
    patch_size: int = 8
    embed_dim: int = 64
    depth: int = 4
    heads: int = 4
    decoder_dim: int = 32
    decoder_depth: int = 2
    decoder_heads: int = 4
    mask_ratio: float = 0.75
    mlp_ratio: float = 1.0
    latent_tokens: int = 8       # l
    cond_dim: int = 32           # d_c

    def __post_init__(self):
        if not 0.0 < self.mask_ratio < 1.0:
            raise ValueError(f"mask_ratio must lie in (0, 1), got {self.mask_ratio}")
        if self.embed_dim % self.heads:
            raise ValueError("embed_dim must be divisible by heads")
        if self.decoder_dim % self.decoder_heads:
            raise ValueError("decoder_dim must be divisible by decoder_heads")


# -- voxel <-> patch layout -------------------------------------------------
def num_tokens(n_voxels: int, patch_size: int) -> int:
    if n_voxels < 1:
        raise ValueError("need at least one voxel to patchify")
    return -(-n_voxels // patch_size)


def patchify_voxels(fmri: np.ndarray, patch_size: int) -> np.ndarray:
    """``[..., V]`` -> ``[..., p_tok, patch_size]``, zero-padding the last patch."""
    fmri = np.asarray(fmri, dtype=np.float64)
    v = fmri.shape[-1]
    n_tok = num_tokens(v, patch_size)
    pad = n_tok * patch_size - v
    if pad:
        fmri = np.concatenate([fmri, np.zeros(fmri.shape[:-1] + (pad,))], axis=-1)
    return fmri.reshape(fmri.shape[:-1] + (n_tok, patch_size))


def unpatchify_voxels(patches: np.ndarray, n_voxels: int) -> np.ndarray:
    patches = np.asarray(patches)
    flat = patches.reshape(patches.shape[:-2] + (-1,))
    return flat[..., :n_voxels]


def voxel_valid_mask(n_voxels: int, patch_size: int) -> np.ndarray:
    return patchify_voxels(np.ones(n_voxels), patch_size) > 0


# -- views used by spatiotemporal attention -------------------------------------
def spatial_view(x: Tensor) -> Tensor:
    n, w, p, b = x.shape
    return x.reshape(n * w, p, b)


def temporal_view(x: Tensor) -> Tensor:
    n, w, p, b = x.shape
    return x.transpose(0, 2, 1, 3).reshape(n * p, w, b)


def from_temporal_view(x: Tensor, n: int, p: int) -> Tensor:
    _, w, b = x.shape
    return x.reshape(n, p, w, b).transpose(0, 2, 1, 3)


class Block(Module):
    """Pre-norm transformer block over the last two axes."""

    def __init__(self, dim: int, heads: int, mlp_ratio: float, rng: np.random.Generator):
        self.norm1 = LayerNorm(dim)
        self.attn = Attention(dim, heads, rng)
        self.norm2 = LayerNorm(dim)
        self.mlp = MLP(dim, max(1, int(dim * mlp_ratio)), rng)

    def attend(self, x: Tensor) -> Tensor:
        return x + self.attn(self.norm1(x))

    def feed(self, x: Tensor) -> Tensor:
        return x + self.mlp(self.norm2(x))

    def __call__(self, x: Tensor) -> Tensor:
        return self.feed(self.attend(x))


class TemporalAttention(Module):
    """Attention across window slots; the output projection starts at zero."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        self.norm = LayerNorm(dim)
        self.attn = Attention(dim, heads, rng, zero_out=True)
        self.dim = dim

    def __call__(self, xt: Tensor) -> Tensor:
        w = xt.shape[1]
        fpe = Tensor(sinusoidal_embedding(np.arange(w), self.dim))
        return xt + self.attn(self.norm(xt) + fpe)


def spatiotemporal_attend(x: Tensor, block: Block, temporal: TemporalAttention | None) -> Tensor:
    """Spatial attention on the ``[n*w, p, b]`` view, then temporal on ``[n*p, w, b]``."""
    n, w, p, b = x.shape
    xs = block.attend(spatial_view(x)).reshape(n, w, p, b)
    if temporal is None:
        return xs
    xt = temporal(temporal_view(xs))
    return from_temporal_view(xt, n, p)


class FmriEncoder(Module):
    """Patch embedding + transformer trunk shared by every training stage."""

    def __init__(self, n_voxels: int, cfg: PatchConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.n_voxels = n_voxels
        self.n_tokens = num_tokens(n_voxels, cfg.patch_size)
        self.patch_embed = Linear(cfg.patch_size, cfg.embed_dim, rng)
        self.blocks = [Block(cfg.embed_dim, cfg.heads, cfg.mlp_ratio, rng) for _ in range(cfg.depth)]
        self.norm = LayerNorm(cfg.embed_dim)
        self.temporal: list[TemporalAttention] = []
        self.pos = sinusoidal_embedding(np.arange(self.n_tokens), cfg.embed_dim)

    def inflate(self, rng: np.random.Generator) -> None:
        """Add a temporal attention layer after every spatial one (identity at insertion)."""
        if not self.temporal:
            self.temporal = [TemporalAttention(self.cfg.embed_dim, self.cfg.heads, rng)
                             for _ in range(self.cfg.depth)]

    def embed(self, fmri: np.ndarray) -> Tensor:
        """``[..., V]`` voxels -> ``[..., p_tok, b]`` position-encoded tokens."""
        patches = Tensor(patchify_voxels(fmri, self.cfg.patch_size))
        return self.patch_embed(patches) + Tensor(self.pos)

    def run_blocks(self, tokens: Tensor) -> Tensor:
        """Tokens ``[n, w, p, b]`` through every (spatio)temporal block."""
        x = tokens
        n, w, p, b = x.shape
        for i, blk in enumerate(self.blocks):
            tmp = self.temporal[i] if self.temporal else None
            x = spatiotemporal_attend(x, blk, tmp)
            x = blk.feed(x.reshape(n * w, p, b)).reshape(n, w, p, b)
        return self.norm(x)

    def __call__(self, windows: np.ndarray) -> Tensor:
        """``windows [n, w, V]`` -> final tokens ``[n, w, p_tok, b]``."""
        windows = np.asarray(windows)
        if windows.ndim == 2:
            windows = windows[:, None, :]
        return self.run_blocks(self.embed(windows))

    def attention_layers(self) -> list[Attention]:
        return [blk.attn for blk in self.blocks]


@dataclass
class EncoderOutput:
    pooled: Tensor      # [n, b]
    unpooled: Tensor    # [n, l, d_c]


class ProjectionHead(Module):
    def __init__(self, n_tokens: int, cfg: PatchConfig, rng: np.random.Generator):
        b = cfg.embed_dim
        self.pool_proj = Linear(b, b, rng)
        self.token_mix = Parameter(rng.normal(0.0, 1.0 / math.sqrt(n_tokens), size=(n_tokens, cfg.latent_tokens)))
        self.cond_proj = Linear(b, cfg.cond_dim, rng)

    def __call__(self, tokens: Tensor) -> EncoderOutput:
        """``tokens [n, w, p, b]``: pooled over every token, unpooled mixes tokens to ``l`` slots."""
        n, w, p, b = tokens.shape
        pooled = self.pool_proj(tokens.reshape(n, w * p, b).mean(axis=1))
        per_token = tokens.mean(axis=1)                                    # [n, p, b]
        mixed = T.matmul(T.swapaxes(per_token, 1, 2), self.token_mix)     # [n, b, l]
        unpooled = self.cond_proj(T.swapaxes(mixed, 1, 2))               # [n, l, d_c]
        return EncoderOutput(pooled, unpooled)


def project(head: ProjectionHead, tokens: Tensor) -> EncoderOutput:
    return head(tokens)


class FmriModel(Module):
    """Encoder plus projection head; the conditioning model of the later stages."""

    def __init__(self, n_voxels: int, cfg: PatchConfig, rng: np.random.Generator,
                 dropout: float = 0.0):
        self.encoder = FmriEncoder(n_voxels, cfg, rng)
        self.head = ProjectionHead(self.encoder.n_tokens, cfg, rng)
        self.dropout = dropout

    def __call__(self, windows: np.ndarray, rng: np.random.Generator | None = None) -> EncoderOutput:
        tokens = self.encoder(windows)
        if self.training and rng is not None:
            tokens = T.dropout(tokens, self.dropout, rng)
        return self.head(tokens)


def sparsify(fmri: np.ndarray, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Zero a random ``rate`` fraction of voxels (fMRI augmentation)."""
    if rate <= 0:
        return fmri
    return np.where(rng.random(fmri.shape) < rate, 0.0, fmri)

"""Where the fMRI encoder looks: attention received per voxel region."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..encoder.model import FmriEncoder
from ..numerics.tensor import no_grad


@dataclass
class AttentionReport:
    stage: str
    layer: int
    regions: np.ndarray      # region labels
    shares: np.ndarray       # normalised attention share per region, sums to 1

    def rows(self) -> list[tuple[int, float]]:
        return [(int(r), float(s)) for r, s in zip(self.regions, self.shares)]


def default_layers(depth: int) -> list[int]:
    """First, middle and last layer."""
    return sorted({0, depth // 2, depth - 1})


def received_attention(encoder: FmriEncoder, windows: np.ndarray, layers: list[int],
                       batch_size: int = 64) -> dict[int, np.ndarray]:
    """Mean attention each token receives ``{layer: [p_tok]}``.

    Column means of the spatial softmax maps, averaged over heads, query
    tokens, window slots and samples.
    """
    depth = len(encoder.blocks)
    for layer in layers:
        if not 0 <= layer < depth:
            raise IndexError(f"layer {layer} out of range for an encoder of depth {depth}")
    attns = [encoder.blocks[i].attn for i in layers]
    sums = {i: np.zeros(encoder.n_tokens) for i in layers}
    count = 0
    windows = np.asarray(windows)
    if windows.ndim == 2:
        windows = windows[:, None]
    for a in attns:
        a.keep_attn = True
    try:
        with no_grad():
            for s in range(0, len(windows), batch_size):
                encoder(windows[s:s + batch_size])
                for i, a in zip(layers, attns):
                    m = a.last_attn                               # [n*w, heads, p, p]
                    sums[i] += m.mean(axis=(1, 2)).sum(axis=0)
                count += a.last_attn.shape[0]
    finally:
        for a in attns:
            a.keep_attn = False
            a.last_attn = None
    return {i: sums[i] / count for i in layers}


def region_shares(received: np.ndarray, patch_size: int, regions: np.ndarray,
                  labels: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Spread each token's attention evenly over its ``patch_size`` voxel slots, sum per region.

    Padding slots are dropped, so uniform attention gives every real voxel
    the same weight and each region its voxel fraction.
    """
    regions = np.asarray(regions)
    per_voxel = np.repeat(np.asarray(received, dtype=np.float64) / patch_size, patch_size)[: regions.size]
    labels = np.unique(regions) if labels is None else np.asarray(labels)
    totals = np.array([per_voxel[regions == r].sum() for r in labels])
    return labels, totals / totals.sum()


def attention_report(encoder: FmriEncoder, windows: np.ndarray, regions: np.ndarray, stage: str,
                     layers: list[int] | None = None, labels: np.ndarray | None = None) -> list[AttentionReport]:
    layers = default_layers(len(encoder.blocks)) if layers is None else list(layers)
    rec = received_attention(encoder, windows, layers)
    out = []
    for i in layers:
        lab, shares = region_shares(rec[i], encoder.cfg.patch_size, regions, labels)
        out.append(AttentionReport(stage, i, lab, shares))
    return out

"""Aligning pooled fMRI embeddings with frozen text and image embeddings."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..encoder.model import FmriModel, sparsify
from ..encoder.train import check_finite
from ..numerics import AdamW, no_grad
from ..synthdata.dataset import distinct_scene_batch, fmri_windows
from ..synthdata.scenes import synonym_of
from .embedders import FrozenImageEmbedder, FrozenTextEmbedder
from .loss import retrieval_at_1, trimodal_loss


@dataclass
class ContrastiveConfig:
    steps: int = 300
    batch_size: int = 32
    lr: float = 1e-3
    weight_decay: float = 0.05
    scale: float = 20.0
    mode: str = "full"
    symmetric: bool = False
    l2: bool = True
    sparsify: float = 0.2
    crop_prob: float = 0.5
    synonym_prob: float = 0.5
    eval_size: int = 50
    eval_every: int = 25
    window: int = 2
    shift: int = 3
    direction: str = "forward"
    seed: int = 0


@dataclass
class ContrastiveResult:
    rows: list = field(default_factory=list)   # (step, loss, retrieval@1 image, retrieval@1 text)

    @property
    def final_retrieval(self) -> float:
        return self.rows[-1][2]


def random_crop(clips: np.ndarray, prob: float, rng: np.random.Generator, min_scale: float = 0.75) -> np.ndarray:
    """With probability ``prob`` per clip, crop a random square and resize back (nearest)."""
    out = np.array(clips, dtype=np.float64, copy=True)
    size = out.shape[2]
    for i in range(out.shape[0]):
        if rng.random() >= prob:
            continue
        c = int(rng.integers(int(np.ceil(min_scale * size)), size + 1))
        y0, x0 = rng.integers(0, size - c + 1, size=2)
        idx = (np.arange(size) * c) // size
        out[i] = clips[i][:, y0 + idx][:, :, x0 + idx]
    return out


def substitute_synonyms(captions: np.ndarray, prob: float, rng: np.random.Generator) -> np.ndarray:
    swap = rng.random(captions.shape) < prob
    syn = np.vectorize(synonym_of, otypes=[np.int64])(captions)
    return np.where(swap, syn, captions)


def embed_pairs(model: FmriModel, fmri_win: np.ndarray, rng=None):
    return model(fmri_win, rng).pooled


def evaluate_retrieval(model: FmriModel, split, items: np.ndarray, ccfg: ContrastiveConfig,
                       text: FrozenTextEmbedder, image: FrozenImageEmbedder) -> tuple[float, float]:
    was = model.training
    model.eval()
    with no_grad():
        win = fmri_windows(split.fmri, items, ccfg.shift, ccfg.window, ccfg.direction)
        f = model(win).pooled.data
    model.train(was)
    return retrieval_at_1(f, image(split.clips[items])), retrieval_at_1(f, text(split.captions[items]))


def train_contrastive(model: FmriModel, train, test, ccfg: ContrastiveConfig,
                      text: FrozenTextEmbedder | None = None,
                      image: FrozenImageEmbedder | None = None) -> ContrastiveResult:
    """Trains ``model`` in place on distinct-scene batches; evaluates on held-out test pairs."""
    dim = model.encoder.cfg.embed_dim
    text = text or FrozenTextEmbedder(dim)
    image = image or FrozenImageEmbedder(dim, train.clips.shape[2])
    rng = np.random.default_rng([ccfg.seed, 202])
    opt = AdamW(model.parameters(), lr=ccfg.lr, weight_decay=ccfg.weight_decay)
    held_out = distinct_scene_batch(test.frame_scene, ccfg.eval_size, np.random.default_rng([ccfg.seed, 5]))
    result = ContrastiveResult()
    model.train()
    loss_val = float("nan")
    for step in range(ccfg.steps + 1):
        if step % ccfg.eval_every == 0 or step == ccfg.steps:
            r_img, r_txt = evaluate_retrieval(model, test, held_out, ccfg, text, image)
            result.rows.append((step, loss_val, r_img, r_txt))
        if step == ccfg.steps:
            break
        items = distinct_scene_batch(train.frame_scene, ccfg.batch_size, rng)
        win = fmri_windows(train.fmri, items, ccfg.shift, ccfg.window, ccfg.direction)
        win = sparsify(win, ccfg.sparsify, rng)
        emb_t = text(substitute_synonyms(train.captions[items], ccfg.synonym_prob, rng))
        emb_i = image(random_crop(train.clips[items], ccfg.crop_prob, rng))
        emb_f = model(win, rng).pooled
        loss = trimodal_loss(emb_f, emb_t, emb_i, ccfg.scale, ccfg.mode, ccfg.symmetric, ccfg.l2)
        loss_val = loss.item()
        check_finite(loss_val, "contrastive", step)
        opt.zero_grad()
        loss.backward()
        opt.step()
    model.eval()
    return result

"""Masked brain modelling pretraining loop."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..numerics import AdamW, no_grad
from .mbm import MaskedBrainModel, mbm_step
from .model import PatchConfig


class NonFiniteLoss(FloatingPointError):
    pass


@dataclass
class PretrainConfig:
    steps: int = 200
    batch_size: int = 64
    lr: float = 2e-3
    weight_decay: float = 0.05
    eval_size: int = 64
    seed: int = 0


@dataclass
class PretrainResult:
    model: MaskedBrainModel
    train_loss: list = field(default_factory=list)
    fixed_loss: list = field(default_factory=list)   # (step, loss on the fixed batch)


def check_finite(loss: float, stage: str, step: int) -> None:
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"{stage}: non-finite loss at step {step}")


def pretrain_mbm(scans: np.ndarray, cfg: PatchConfig, pcfg: PretrainConfig,
                 log_every: int = 10) -> PretrainResult:
    """Pretrain on single scans ``[T, V]``.

    The fixed-batch loss reuses one scan subset and one mask draw at every
    evaluation, so successive values are directly comparable.
    """
    rng = np.random.default_rng([pcfg.seed, 101])
    model = MaskedBrainModel(scans.shape[1], cfg, rng)
    opt = AdamW(model.parameters(), lr=pcfg.lr, weight_decay=pcfg.weight_decay)
    ev = scans[rng.choice(len(scans), min(pcfg.eval_size, len(scans)), replace=False)]
    bs = min(pcfg.batch_size, len(scans))

    def fixed_loss() -> float:
        with no_grad():
            return mbm_step(model, ev, np.random.default_rng([pcfg.seed, 7]))[0].item()

    result = PretrainResult(model)
    for step in range(pcfg.steps):
        if step % log_every == 0:
            result.fixed_loss.append((step, fixed_loss()))
        batch = scans[rng.choice(len(scans), bs, replace=False)]
        loss, _ = mbm_step(model, batch, rng)
        check_finite(loss.item(), "pretrain", step)
        opt.zero_grad()
        loss.backward()
        opt.step()
        result.train_loss.append(loss.item())
    result.fixed_loss.append((pcfg.steps, fixed_loss()))
    return result

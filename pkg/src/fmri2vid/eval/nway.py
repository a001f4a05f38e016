"""N-way top-K semantic classification test."""
from __future__ import annotations

import numpy as np


def nway_topk_trials(gt_probs: np.ndarray, pred_probs: np.ndarray, n_way: int, k: int,
                     trials: int, rng: np.random.Generator, gt_k: int | None = None) -> np.ndarray:
    """Success flags ``[trials]`` for one item.

    The ground-truth classes are the top ``gt_k`` classes of ``gt_probs``.
    Each trial draws ``n_way - 1`` distractors from the remaining classes; it
    succeeds if some ground-truth class is within the top ``k`` of
    ``pred_probs`` restricted to itself plus the distractors.
    """
    gt_probs = np.asarray(gt_probs, dtype=np.float64)
    pred_probs = np.asarray(pred_probs, dtype=np.float64)
    n_cls = gt_probs.shape[-1]
    gt_k = k if gt_k is None else gt_k
    if not 1 <= k <= n_way:
        raise ValueError(f"need 1 <= K <= N, got K={k}, N={n_way}")
    if n_way + gt_k - 1 > n_cls:
        raise ValueError(f"{n_way}-way test needs more than {n_cls} classes")
    gt_classes = np.argsort(-gt_probs, kind="stable")[:gt_k]
    pool = np.setdiff1d(np.arange(n_cls), gt_classes)
    # each trial's distractors: the first N-1 entries of an independent random permutation of the pool
    order = np.argsort(rng.random((trials, pool.size)), axis=1)[:, : n_way - 1]
    others = pred_probs[pool[order]]                                   # [trials, N-1]
    # rank of each ground-truth class among itself + the distractors; ties count against it
    beaten = (others[:, None, :] >= pred_probs[gt_classes][None, :, None]).sum(axis=2)
    return np.any(beaten < k, axis=1)


def nway_topk(gt_probs: np.ndarray, pred_probs: np.ndarray, n_way: int, k: int = 1,
              trials: int = 100, seed: int = 0, gt_k: int | None = None) -> np.ndarray:
    """Per-item success rate for ``[n_items, N_cls]`` probability arrays (or a single item)."""
    gt_probs = np.atleast_2d(gt_probs)
    pred_probs = np.atleast_2d(pred_probs)
    if gt_probs.shape != pred_probs.shape:
        raise ValueError(f"shape mismatch {gt_probs.shape} vs {pred_probs.shape}")
    rates = np.empty(gt_probs.shape[0])
    for j in range(gt_probs.shape[0]):
        rng = np.random.default_rng([seed, j])
        rates[j] = nway_topk_trials(gt_probs[j], pred_probs[j], n_way, k, trials, rng, gt_k).mean()
    return rates

"""Retrieval-style 2-way identification of generated clips."""
from __future__ import annotations

import numpy as np


def _centered_unit(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(len(x), -1)
    x = x - x.mean(axis=1, keepdims=True)
    return x / np.maximum(np.linalg.norm(x, axis=1, keepdims=True), 1e-12)


def two_way_identification(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Per-item accuracy ``[n]``.

    Item ``i`` is compared against every other ground truth ``j``: a
    comparison is won when the prediction correlates more with its own
    ground truth than with ``j`` (ties score one half).
    """
    if len(pred) != len(gt):
        raise ValueError("prediction and ground-truth counts differ")
    n = len(pred)
    if n < 2:
        raise ValueError("identification needs at least two items")
    corr = _centered_unit(pred) @ _centered_unit(gt).T
    own = np.diag(corr)[:, None]
    wins = (own > corr) + 0.5 * (own == corr)
    np.fill_diagonal(wins, 0.0)
    return wins.sum(axis=1) / (n - 1)

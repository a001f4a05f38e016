from __future__ import annotations

import numpy as np
from scipy import stats

R_CLAMP = 1.0 - 1e-7


def repeat_reliability(recordings) -> tuple[np.ndarray, np.ndarray]:
    """Per-repeat Fisher-z reproducibility ``[R, V]`` and a per-voxel validity flag.

    Entry ``(r, v)`` is the mean over ``s != r`` of ``atanh(corr(x_r[:, v], x_s[:, v]))``.
    Voxels that are constant in any repeat are flagged invalid and get z = 0.
    """
    x = np.stack([np.asarray(r, dtype=np.float64) for r in recordings])
    if x.ndim != 3:
        raise ValueError("each recording must be a [T, V] array")
    n_rep = x.shape[0]
    if n_rep < 2:
        raise ValueError("voxel selection needs at least two repeats")
    xc = x - x.mean(axis=1, keepdims=True)
    sd = np.sqrt((xc**2).mean(axis=1))
    valid = (sd > 0).all(axis=0)
    z = xc / np.where(sd > 0, sd, 1.0)[:, None, :]
    corr = np.einsum("rtv,stv->rsv", z, z) / x.shape[1]
    fz = np.arctanh(np.clip(corr, -R_CLAMP, R_CLAMP))
    off = ~np.eye(n_rep, dtype=bool)
    per_rep = np.stack([fz[r][off[r]].mean(axis=0) for r in range(n_rep)])
    per_rep[:, ~valid] = 0.0
    return per_rep, valid


def voxel_significance(recordings) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One-sided one-sample t-test of the per-repeat z-scores against zero.

    Returns ``(t, p, mean_z)``; the test has ``R - 1`` degrees of freedom.
    """
    z, valid = repeat_reliability(recordings)
    n = z.shape[0]
    mean = z.mean(axis=0)
    sd = z.std(axis=0, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = mean / (sd / np.sqrt(n))
    t = np.where(sd > 0, t, np.where(mean > 0, np.inf, np.where(mean < 0, -np.inf, 0.0)))
    t[~valid] = 0.0
    p = stats.t.sf(t, df=n - 1)
    p[~valid] = 1.0
    return t, p, mean


def select_voxels(recordings, alpha: float = 0.01, keep_fraction: float = 0.5,
                  bonferroni: bool = True) -> np.ndarray:
    """Sorted indices of reproducible voxels.

    A voxel passes when its p-value beats ``alpha`` (divided by the voxel
    count under Bonferroni).  Passing voxels are ranked by t statistic, then
    mean z, and at most ``keep_fraction`` of all voxels are kept.
    """
    t, p, mean = voxel_significance(recordings)
    n_vox = t.size
    thresh = alpha / n_vox if bonferroni else alpha
    passing = np.flatnonzero(p < thresh)
    order = np.lexsort((passing, -mean[passing], -t[passing]))
    cap = int(np.floor(keep_fraction * n_vox))
    return np.sort(passing[order][:cap])

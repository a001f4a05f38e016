"""Two-sample significance test for ablation comparisons."""
from __future__ import annotations

import numpy as np
from scipy import stats

BANDS = ((1e-4, "<0.0001"), (1e-2, "<0.01"), (5e-2, "<0.05"))


def ablation_stats(a, b, equal_var: bool = True) -> float:
    """Two-sided two-sample t-test p-value (Student by default, Welch if ``equal_var=False``)."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size < 2 or b.size < 2:
        raise ValueError("need at least two samples per group")
    if np.var(a) == 0 and np.var(b) == 0:
        return 1.0 if a[0] == b[0] else 0.0
    p = stats.ttest_ind(a, b, equal_var=equal_var).pvalue
    return float(p)


def significance_band(p: float) -> str:
    for cut, label in BANDS:
        if p < cut:
            return label
    return ">0.05"

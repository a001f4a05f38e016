"""Single-axis ablations against the full model, repeated over seeds."""
from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from ..eval import ablation_stats, read_csv, significance_band, svg_bars, write_csv
from .config import ConfigError, RunConfig
from .stages import METRIC_COLUMNS, Store, ensure

log = logging.getLogger("fmri2vid")

AXES = {
    "window": ("window", ("1", "3")),
    "contrastive": ("contrastive", ("off",)),
    "guidance": ("guidance", ("classifier-free",)),
}
HEADLINE = "ident_2way"


def parse_axes(spec: str) -> list[tuple[str, list[str]]]:
    """``"window=1|3,contrastive"`` -> ``[("window", ["1", "3"]), ("contrastive", ["off"])]``.

    A bare axis name takes its usual ablation values.
    """
    out = []
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        name, _, values = part.partition("=")
        name = name.strip()
        if name not in AXES:
            raise ConfigError(f"unknown ablation axis {name!r}; known: {sorted(AXES)}")
        vals = [v.strip() for v in values.split("|") if v.strip()] if values else list(AXES[name][1])
        out.append((name, vals))
    if not out:
        raise ConfigError("no ablation axes given")
    return out


def variants(base: RunConfig, axes: list[tuple[str, list[str]]]) -> list[tuple[str, RunConfig]]:
    rows = [("full", base)]
    for name, vals in axes:
        key = AXES[name][0]
        for v in vals:
            rows.append((f"{name}={v}", base.replace(**{key: v})))
    return rows


def seeded(cfg: RunConfig, k: int) -> RunConfig:
    """The ``k``-th replicate: every training and sampling seed moves together, the data does not."""
    if k == 0:
        return cfg
    return cfg.replace(seed=cfg["seed"] + k, gen_seed=cfg["gen_seed"] + k, sample_seed=cfg["sample_seed"] + k)


def item_values(eval_dir: Path) -> dict[str, np.ndarray]:
    rows = read_csv(eval_dir / "metrics.csv")
    return {c: np.array([float(r[c]) for r in rows]) for c in METRIC_COLUMNS}


def ablation_suite(base: RunConfig, store: Store, out_dir: Path, axes_spec: str | None = None,
                   n_seeds: int | None = None) -> list[Path]:
    """Evaluate every variant on every seed and compare each with the full model.

    Samples for the test are per-item values pooled over seeds.
    """
    axes = parse_axes(axes_spec if axes_spec is not None else base["ablation_axes"])
    n_seeds = base["ablation_seeds"] if n_seeds is None else n_seeds
    if n_seeds < 1:
        raise ConfigError("ablation needs at least one seed")
    pooled: dict[str, dict[str, list]] = {}
    per_seed = []
    for label, vcfg in variants(base, axes):
        pooled[label] = {c: [] for c in METRIC_COLUMNS}
        for k in range(n_seeds):
            log.info("ablation: %s seed %d", label, k)
            d = ensure("evaluate", seeded(vcfg, k), store)
            vals = item_values(d)
            for c in METRIC_COLUMNS:
                pooled[label][c].append(vals[c])
                per_seed.append((label, k, c, float(vals[c].mean())))
    rows = []
    full = {c: np.concatenate(pooled["full"][c]) for c in METRIC_COLUMNS}
    for label, metrics in pooled.items():
        for c in METRIC_COLUMNS:
            x = np.concatenate(metrics[c])
            p = ablation_stats(x, full[c]) if x.size > 1 and full[c].size > 1 else 1.0
            rows.append((label, c, float(x.mean()), float(x.std(ddof=1)) if x.size > 1 else 0.0,
                         float(p), significance_band(p)))
    out_dir.mkdir(parents=True, exist_ok=True)
    table = write_csv(out_dir / "ablation.csv", ["variant", "metric", "mean", "std", "p", "band"], rows)
    seeds = write_csv(out_dir / "ablation_seeds.csv", ["variant", "seed", "metric", "mean"], per_seed)
    labels = list(pooled)
    chart = svg_bars(out_dir / f"ablation_{HEADLINE}.svg", labels,
                     [float(np.concatenate(pooled[v][HEADLINE]).mean()) for v in labels],
                     title="2-way identification by variant", reference=0.5)
    return [table, seeds, chart]

"""Staged, resumable command-line pipeline."""
from .config import RunConfig, ConfigError, SCHEMA, STAGES, DEPENDS
from .stages import Store, PrerequisiteError, run_stage, ensure, item_metrics, METRIC_COLUMNS
from .ablate import ablation_suite, parse_axes, variants
from .main import main

__all__ = [
    "RunConfig", "ConfigError", "SCHEMA", "STAGES", "DEPENDS", "Store", "PrerequisiteError",
    "run_stage", "ensure", "item_metrics", "METRIC_COLUMNS", "ablation_suite", "parse_axes",
    "variants", "main",
]

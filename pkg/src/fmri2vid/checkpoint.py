"""Stage-tagged module checkpoints stored in the ``NCT1`` container."""
from __future__ import annotations

from pathlib import Path

from . import io
from .numerics.nn import Module


class CheckpointError(RuntimeError):
    pass


def save_module(path, module: Module, stage: str, **meta) -> Path:
    path = Path(path)
    io.save(path, module.state_dict(), {"stage": stage, **{k: str(v) for k, v in meta.items()}})
    return path


def load_module(path, module: Module, stage: str | None = None, strict: bool = True) -> dict[str, str]:
    """Load weights into ``module``; ``stage`` (if given) must match the header."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    state, meta = io.load(path)
    if stage is not None and meta.get("stage") != stage:
        raise CheckpointError(f"{path} holds stage {meta.get('stage')!r}, expected {stage!r}")
    module.load_state_dict(state, strict=strict)
    return meta

"""Flat ``key=value`` run configuration.

Every key has a typed default; files and ``--set`` overrides may only name
known keys.  Stage fingerprints hash the keys a stage reads plus the
fingerprints of the stages it consumes, so two runs share a stage exactly
when everything upstream of it agrees.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .. import io


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _choice(*options):
    def parse(text: str) -> str:
        text = text.strip()
        if text not in options:
            raise ValueError(f"expected one of {options}, got {text!r}")
        return text
    return parse


@dataclass(frozen=True)
class Key:
    default: Any
    parse: Any
    stage: str


_K = Key
SCHEMA: dict[str, Key] = {
    # data
    "data_seed": _K(0, int, "gen-data"),
    "n_train": _K(432, int, "gen-data"),
    "n_test": _K(120, int, "gen-data"),
    "fps": _K(3, int, "gen-data"),
    "tr_seconds": _K(2.0, float, "gen-data"),
    "frames_per_clip": _K(6, int, "gen-data"),
    "frame_size": _K(32, int, "gen-data"),
    "voxels": _K(512, int, "gen-data"),
    "n_regions": _K(8, int, "gen-data"),
    "region_signal": _K((1.0, 1.0, 1.0, 0.75, 0.25, 0.0, 0.0, 0.0), _floats, "gen-data"),
    "repeats": _K(6, int, "gen-data"),
    "snr": _K(1.0, float, "gen-data"),
    "bold_shift_scans": _K(3, int, "gen-data"),
    "select_voxels": _K(True, _bool, "gen-data"),
    "select_alpha": _K(0.01, float, "gen-data"),
    "keep_fraction": _K(0.5, float, "gen-data"),
    "tuning_smoothness": _K(4.0, float, "gen-data"),
    # fMRI encoder
    "seed": _K(0, int, "pretrain"),
    "patch_size": _K(8, int, "pretrain"),
    "embed_dim": _K(64, int, "pretrain"),
    "depth": _K(4, int, "pretrain"),
    "heads": _K(4, int, "pretrain"),
    "decoder_dim": _K(32, int, "pretrain"),
    "decoder_depth": _K(2, int, "pretrain"),
    "decoder_heads": _K(4, int, "pretrain"),
    "mlp_ratio": _K(1.0, float, "pretrain"),
    "mask_ratio": _K(0.75, float, "pretrain"),
    "pretrain_steps": _K(200, int, "pretrain"),
    "pretrain_lr": _K(2e-3, float, "pretrain"),
    "pretrain_batch": _K(64, int, "pretrain"),
    "pretrain_weight_decay": _K(0.05, float, "pretrain"),
    # contrastive
    "latent_tokens": _K(8, int, "contrastive"),
    "cond_dim": _K(32, int, "contrastive"),
    "window": _K(2, int, "contrastive"),
    "window_direction": _K("forward", _choice("forward", "backward"), "contrastive"),
    "contrastive": _K("full", _choice("full", "text", "image", "off"), "contrastive"),
    "contrastive_steps": _K(300, int, "contrastive"),
    "contrastive_lr": _K(1e-3, float, "contrastive"),
    "contrastive_batch": _K(32, int, "contrastive"),
    "contrastive_weight_decay": _K(0.05, float, "contrastive"),
    "contrastive_scale": _K(20.0, float, "contrastive"),
    "contrastive_symmetric": _K(False, _bool, "contrastive"),
    "contrastive_l2": _K(True, _bool, "contrastive"),
    "fmri_dropout": _K(0.6, float, "contrastive"),
    "fmri_sparsify": _K(0.2, float, "contrastive"),
    "crop_prob": _K(0.5, float, "contrastive"),
    "synonym_prob": _K(0.5, float, "contrastive"),
    "retrieval_eval_size": _K(50, int, "contrastive"),
    # video generator
    "gen_seed": _K(0, int, "train-gen"),
    "diffusion_steps": _K(100, int, "train-gen"),
    "beta_start": _K(1e-3, float, "train-gen"),
    "beta_end": _K(0.1, float, "train-gen"),
    "token_patch": _K(2, int, "train-gen"),
    "denoiser_hidden": _K(48, int, "train-gen"),
    "denoiser_heads": _K(4, int, "train-gen"),
    "denoiser_depth": _K(2, int, "train-gen"),
    "gen_steps": _K(400, int, "train-gen"),
    "gen_lr": _K(1e-3, float, "train-gen"),
    "gen_batch": _K(16, int, "train-gen"),
    "gen_weight_decay": _K(0.01, float, "train-gen"),
    "cond_dropout": _K(0.1, float, "train-gen"),
    "offset_noise": _K(0.5, float, "train-gen"),
    # co-training
    "cotrain_steps": _K(500, int, "cotrain"),
    "cotrain_lr": _K(5e-4, float, "cotrain"),
    "cotrain_batch": _K(16, int, "cotrain"),
    "cotrain_weight_decay": _K(0.01, float, "cotrain"),
    # sampling
    "guidance": _K("adversarial", _choice("adversarial", "classifier-free"), "sample"),
    "guidance_scale": _K(12.5, float, "sample"),
    "ddim_steps": _K(50, int, "sample"),
    "sample_items": _K(0, int, "sample"),
    "sample_seed": _K(0, int, "sample"),
    "negative_source": _K("test", _choice("test", "train"), "sample"),
    # evaluation
    "eval_trials": _K(100, int, "evaluate"),
    "topk": _K(1, int, "evaluate"),
    "gt_topk": _K(1, int, "evaluate"),
    "classifier_scenes": _K(1024, int, "evaluate"),
    # ablation
    "ablation_seeds": _K(5, int, "ablate"),
    "ablation_axes": _K("window,contrastive,guidance", str, "ablate"),
}

STAGES = ("gen-data", "pretrain", "contrastive", "train-gen", "cotrain", "sample", "evaluate",
          "interpret")
DEPENDS = {
    "gen-data": (),
    "pretrain": ("gen-data",),
    "contrastive": ("pretrain",),
    "train-gen": ("gen-data",),
    "cotrain": ("contrastive", "train-gen"),
    "sample": ("cotrain",),
    "evaluate": ("sample",),
    "interpret": ("cotrain",),
}


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


class RunConfig:
    """Resolved values for every schema key."""

    def __init__(self, values: dict[str, Any] | None = None):
        self.values = {k: key.default for k, key in SCHEMA.items()}
        for k, v in (values or {}).items():
            self.set(k, v)

    def set(self, key: str, value) -> None:
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(value, str):
            try:
                value = SCHEMA[key].parse(value)
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}") from None
        self.values[key] = value

    def __getitem__(self, key: str):
        return self.values[key]

    def replace(self, **changes) -> "RunConfig":
        out = RunConfig(dict(self.values))
        for k, v in changes.items():
            out.set(k, v)
        return out

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            pairs = io.read_kv(path)
        except (OSError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        return cls(pairs)

    def lines(self) -> list[str]:
        return [f"{k}={_fmt(self.values[k])}" for k in SCHEMA]

    def write(self, path) -> None:
        Path(path).write_text("\n".join(self.lines()) + "\n")

    def digest(self) -> str:
        return hashlib.sha256("\n".join(self.lines()).encode()).hexdigest()

    def stage_keys(self, stage: str) -> dict[str, str]:
        return {k: _fmt(v) for k, v in self.values.items() if SCHEMA[k].stage == stage}

    def fingerprint(self, stage: str) -> str:
        """Hash of ``stage``'s own keys and, recursively, of its prerequisites."""
        if stage not in DEPENDS:
            raise ConfigError(f"unknown stage {stage!r}")
        payload = {
            "stage": stage,
            "keys": self.stage_keys(stage),
            "deps": [self.fingerprint(d) for d in DEPENDS[stage]],
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]

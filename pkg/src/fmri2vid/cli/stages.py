"""Stage implementations and the directory bookkeeping around them.

A stage writes into its own directory and finishes by writing
``stage.json`` (fingerprint, artifact list, wall-clock).  A directory
whose marker carries the expected fingerprint counts as complete.
"""
from __future__ import annotations

import json
import logging
import shutil
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .. import io
from ..checkpoint import CheckpointError, load_module, save_module
from ..contrastive import ContrastiveConfig, FrozenTextEmbedder, train_contrastive
from ..diffusion import (CotrainConfig, DenoiserConfig, GeneratorConfig, GuidanceSpec, LatentMap,
                         NoiseSchedule, VideoDenoiser, cotrain, ddim_sample, fmri_negative,
                         model_eps, train_generator)
from ..encoder import FmriModel, MaskedBrainModel, PatchConfig, PretrainConfig, pretrain_mbm
from ..eval import (attention_report, clip_ssim, frame_probs, nway_topk, pinned_classifiers,
                    svg_bars, two_way_identification, video_probs, write_csv)
from ..numerics import no_grad
from ..synthdata import DataConfig, fmri_windows, generate_dataset, load_split, save_dataset
from .config import DEPENDS, ConfigError, RunConfig

log = logging.getLogger("fmri2vid")

MARKER = "stage.json"
METRIC_COLUMNS = ("ssim", "2way_top1", "50way_top1", "video_2way", "video_50way", "ident_2way")
EVAL_SEED = 0


class PrerequisiteError(RuntimeError):
    pass


# -- where stages live --------------------------------------------------------------
class Store:
    """Maps a stage to its directory.

    The run layout puts each stage in ``<root>/<stage>``.  The shared layout
    used by ablations keys directories by fingerprint, and also looks in
    ``fallback`` stores, so a variant reuses any identical upstream stage.
    """

    def __init__(self, root, shared: bool = False, fallback: tuple["Store", ...] = ()):
        self.root = Path(root)
        self.shared = shared
        self.fallback = fallback

    def own_dir(self, stage: str, fp: str) -> Path:
        return self.root / (f"{stage}-{fp}" if self.shared else stage)

    def find(self, stage: str, fp: str) -> Path | None:
        for store in (self,) + self.fallback:
            d = store.own_dir(stage, fp)
            if marker_ok(d, fp):
                return d
        return None


def read_marker(d: Path) -> dict | None:
    p = Path(d) / MARKER
    if not p.exists():
        return None
    return json.loads(p.read_text())


def marker_ok(d: Path, fp: str) -> bool:
    m = read_marker(d)
    if m is None or m.get("fingerprint") != fp:
        return False
    return all((Path(d) / a).exists() for a in m.get("artifacts", []))


def _write_marker(d: Path, stage: str, fp: str, artifacts: list[Path], seconds: float) -> dict:
    rel = sorted(str(Path(a).relative_to(d)) for a in artifacts)
    marker = {"stage": stage, "fingerprint": fp, "artifacts": rel, "seconds": round(seconds, 3)}
    (d / MARKER).write_text(json.dumps(marker, indent=1, sort_keys=True) + "\n")
    return marker


@dataclass
class StageContext:
    cfg: RunConfig
    store: Store
    out: Path
    options: dict = field(default_factory=dict)

    def input_dir(self, stage: str) -> Path:
        d = self.store.find(stage, self.cfg.fingerprint(stage))
        if d is None:
            raise PrerequisiteError(f"stage {stage!r} has not been run with this config")
        return d


def run_stage(stage: str, cfg: RunConfig, store: Store, options: dict | None = None,
              force: bool = False) -> tuple[Path, bool]:
    """Run ``stage`` unless an identical run already exists; returns ``(dir, ran)``."""
    fp = cfg.fingerprint(stage)
    done = store.find(stage, fp)
    if done is not None and not force:
        return done, False
    for dep in DEPENDS[stage]:
        if store.find(dep, cfg.fingerprint(dep)) is None:
            raise PrerequisiteError(f"{stage} needs stage {dep!r} to be completed first")
    out = store.own_dir(stage, fp)
    if out.exists():
        shutil.rmtree(out)
    out.mkdir(parents=True)
    t0 = time.perf_counter()
    log.info("%s: running (fingerprint %s)", stage, fp)
    artifacts = STAGE_FUNCS[stage](StageContext(cfg, store, out, options or {}))
    _write_marker(out, stage, fp, artifacts, time.perf_counter() - t0)
    log.info("%s: done in %.1fs", stage, time.perf_counter() - t0)
    return out, True


# -- config -> component configs --------------------------------------------------------
def data_config(cfg: RunConfig) -> DataConfig:
    return DataConfig(
        n_train=cfg["n_train"], n_test=cfg["n_test"], fps=cfg["fps"], tr_seconds=cfg["tr_seconds"],
        frames_per_clip=cfg["frames_per_clip"], frame_size=cfg["frame_size"], voxels=cfg["voxels"],
        n_regions=cfg["n_regions"], region_signal=tuple(cfg["region_signal"]), repeats=cfg["repeats"],
        snr=cfg["snr"], bold_shift_scans=cfg["bold_shift_scans"], select=cfg["select_voxels"],
        select_alpha=cfg["select_alpha"], keep_fraction=cfg["keep_fraction"],
        tuning_smoothness=cfg["tuning_smoothness"], seed=cfg["data_seed"],
    )


def patch_config(cfg: RunConfig) -> PatchConfig:
    return PatchConfig(
        patch_size=cfg["patch_size"], embed_dim=cfg["embed_dim"], depth=cfg["depth"],
        heads=cfg["heads"], decoder_dim=cfg["decoder_dim"], decoder_depth=cfg["decoder_depth"],
        decoder_heads=cfg["decoder_heads"], mask_ratio=cfg["mask_ratio"], mlp_ratio=cfg["mlp_ratio"],
        latent_tokens=cfg["latent_tokens"], cond_dim=cfg["cond_dim"],
    )


def denoiser_config(cfg: RunConfig) -> DenoiserConfig:
    return DenoiserConfig(
        frames=cfg["frames_per_clip"], grid=cfg["frame_size"] // LatentMap().patch,
        token_patch=cfg["token_patch"], hidden=cfg["denoiser_hidden"], heads=cfg["denoiser_heads"],
        depth=cfg["denoiser_depth"], cond_tokens=cfg["latent_tokens"], cond_dim=cfg["cond_dim"],
    )


def validate(cfg: RunConfig) -> None:
    """Build every component config once so inconsistent values fail before any work starts."""
    try:
        data_config(cfg)
        patch_config(cfg)
        denoiser_config(cfg)
        noise_schedule(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg["frame_size"] % LatentMap().patch:
        raise ConfigError("frame_size must be a multiple of the latent patch")
    if cfg["window"] < 1:
        raise ConfigError("window must be >= 1")


def noise_schedule(cfg: RunConfig) -> NoiseSchedule:
    return NoiseSchedule(T=cfg["diffusion_steps"], beta_start=cfg["beta_start"], beta_end=cfg["beta_end"])


def text_embedder(cfg: RunConfig) -> FrozenTextEmbedder:
    return FrozenTextEmbedder(cfg["embed_dim"], token_dim=cfg["cond_dim"])


def new_fmri_model(cfg: RunConfig, n_voxels: int) -> FmriModel:
    """Architecture of the conditioning model; inflated when the window spans several scans."""
    seed = cfg["seed"]
    model = FmriModel(n_voxels, patch_config(cfg), np.random.default_rng([seed, 1]),
                      dropout=cfg["fmri_dropout"])
    if cfg["window"] > 1:
        model.encoder.inflate(np.random.default_rng([seed, 2]))
    return model


def new_denoiser(cfg: RunConfig) -> VideoDenoiser:
    return VideoDenoiser(denoiser_config(cfg), np.random.default_rng([cfg["gen_seed"], 3]))


def header(cfg: RunConfig, stage: str, window: int | None = None) -> dict:
    """Checkpoint header: the producing stage's config fingerprint and the window size."""
    return {"config_fingerprint": cfg.fingerprint(stage), "window": cfg["window"] if window is None else window}


def _splits(ctx: StageContext):
    d = ctx.input_dir("gen-data")
    return load_split(d / "train"), load_split(d / "test")


def load_fmri_model(ctx: StageContext, stage: str, n_voxels: int) -> FmriModel:
    model = new_fmri_model(ctx.cfg, n_voxels)
    load_module(ctx.input_dir(stage) / "fmri_model.bin", model, stage)
    model.eval()
    return model


def load_pretrained_encoder(ctx: StageContext, n_voxels: int) -> MaskedBrainModel:
    mbm = MaskedBrainModel(n_voxels, patch_config(ctx.cfg), np.random.default_rng(0))
    load_module(ctx.input_dir("pretrain") / "mbm.bin", mbm, "pretrain")
    return mbm


def test_windows(cfg: RunConfig, split, items=None) -> np.ndarray:
    items = np.arange(split.n_items) if items is None else items
    return fmri_windows(split.fmri, items, cfg["bold_shift_scans"], cfg["window"], cfg["window_direction"])


# -- stages ------------------------------------------------------------------------
def stage_gen_data(ctx: StageContext) -> list[Path]:
    ds = generate_dataset(data_config(ctx.cfg))
    return save_dataset(ds, ctx.out)


def stage_pretrain(ctx: StageContext) -> list[Path]:
    train, _ = _splits(ctx)
    cfg = ctx.cfg
    pcfg = PretrainConfig(steps=cfg["pretrain_steps"], batch_size=cfg["pretrain_batch"],
                          lr=cfg["pretrain_lr"], weight_decay=cfg["pretrain_weight_decay"],
                          seed=cfg["seed"])
    res = pretrain_mbm(train.fmri, patch_config(cfg), pcfg)
    ck = save_module(ctx.out / "mbm.bin", res.model, "pretrain", steps=pcfg.steps, **header(cfg, "pretrain", window=1))
    fixed = dict(res.fixed_loss)
    rows = [(s, res.train_loss[s] if s < len(res.train_loss) else "", fixed.get(s, ""))
            for s in range(pcfg.steps + 1) if s in fixed]
    curve = write_csv(ctx.out / "pretrain_curve.csv", ["step", "train_loss", "fixed_batch_loss"], rows)
    return [ck, curve]


def stage_contrastive(ctx: StageContext) -> list[Path]:
    cfg = ctx.cfg
    train, test = _splits(ctx)
    n_vox = train.fmri.shape[1]
    mbm = load_pretrained_encoder(ctx, n_vox)
    model = FmriModel(n_vox, patch_config(cfg), np.random.default_rng([cfg["seed"], 1]),
                      dropout=cfg["fmri_dropout"])
    model.encoder.load_state_dict(mbm.encoder.state_dict())
    if cfg["window"] > 1:
        model.encoder.inflate(np.random.default_rng([cfg["seed"], 2]))
    if cfg["contrastive"] == "off":
        # the encoder goes straight from pretraining to co-training
        ck = save_module(ctx.out / "fmri_model.bin", model, "contrastive", skipped="true", **header(cfg, "contrastive"))
        return [ck]
    ccfg = ContrastiveConfig(
        steps=cfg["contrastive_steps"], batch_size=cfg["contrastive_batch"], lr=cfg["contrastive_lr"],
        weight_decay=cfg["contrastive_weight_decay"], scale=cfg["contrastive_scale"],
        mode=cfg["contrastive"], symmetric=cfg["contrastive_symmetric"], l2=cfg["contrastive_l2"],
        sparsify=cfg["fmri_sparsify"], crop_prob=cfg["crop_prob"], synonym_prob=cfg["synonym_prob"],
        eval_size=cfg["retrieval_eval_size"], window=cfg["window"], shift=cfg["bold_shift_scans"],
        direction=cfg["window_direction"], seed=cfg["seed"],
    )
    res = train_contrastive(model, train, test, ccfg, text=text_embedder(cfg))
    ck = save_module(ctx.out / "fmri_model.bin", model, "contrastive", skipped="false", **header(cfg, "contrastive"))
    curve = write_csv(ctx.out / "contrastive_metrics.csv",
                      ["step", "loss", "retrieval@1", "retrieval@1_text"], res.rows)
    return [ck, curve]


def stage_train_gen(ctx: StageContext) -> list[Path]:
    cfg = ctx.cfg
    train, _ = _splits(ctx)
    latents = LatentMap().encode(train.clips)
    den = new_denoiser(cfg)
    gcfg = GeneratorConfig(steps=cfg["gen_steps"], batch_size=cfg["gen_batch"], lr=cfg["gen_lr"],
                           weight_decay=cfg["gen_weight_decay"], cond_dropout=cfg["cond_dropout"],
                           offset_noise=cfg["offset_noise"], seed=cfg["gen_seed"])
    curve = train_generator(den, latents, text_embedder(cfg).tokens(train.captions), noise_schedule(cfg), gcfg)
    ck = save_module(ctx.out / "denoiser.bin", den, "train-gen", steps=gcfg.steps, **header(cfg, "train-gen"))
    csv = write_csv(ctx.out / "train_gen_curve.csv", ["step", "probe_loss"], curve.probe_loss)
    return [ck, csv]


def stage_cotrain(ctx: StageContext) -> list[Path]:
    cfg = ctx.cfg
    train, _ = _splits(ctx)
    model = load_fmri_model(ctx, "contrastive", train.fmri.shape[1])
    den = new_denoiser(cfg)
    load_module(ctx.input_dir("train-gen") / "denoiser.bin", den, "train-gen")
    ccfg = CotrainConfig(steps=cfg["cotrain_steps"], batch_size=cfg["cotrain_batch"], lr=cfg["cotrain_lr"],
                         weight_decay=cfg["cotrain_weight_decay"], cond_dropout=cfg["cond_dropout"],
                         sparsify=cfg["fmri_sparsify"], offset_noise=cfg["offset_noise"],
                         window=cfg["window"], shift=cfg["bold_shift_scans"],
                         direction=cfg["window_direction"], seed=cfg["seed"])
    curve = cotrain(model, den, train, LatentMap().encode(train.clips), noise_schedule(cfg), ccfg)
    return [
        save_module(ctx.out / "fmri_model.bin", model, "cotrain", **header(cfg, "cotrain")),
        save_module(ctx.out / "denoiser.bin", den, "cotrain", **header(cfg, "cotrain")),
        write_csv(ctx.out / "cotrain_curve.csv", ["step", "probe_loss"], curve.probe_loss),
    ]


def sample_items(cfg: RunConfig, n_test: int) -> np.ndarray:
    k = cfg["sample_items"]
    return np.arange(n_test if k <= 0 else min(k, n_test))


def stage_sample(ctx: StageContext) -> list[Path]:
    cfg = ctx.cfg
    train, test = _splits(ctx)
    model = load_fmri_model(ctx, "cotrain", test.fmri.shape[1])
    den = new_denoiser(cfg)
    load_module(ctx.input_dir("cotrain") / "denoiser.bin", den, "cotrain")
    items = sample_items(cfg, test.n_items)
    with no_grad():
        positive = model(test_windows(cfg, test, items)).unpooled.data
    negative = None
    if cfg["guidance"] == "adversarial":
        source = test if cfg["negative_source"] == "test" else train
        negative = fmri_negative(model, test_windows(cfg, source))
    dcfg = den.cfg
    shape = (len(items), dcfg.frames, dcfg.channels, dcfg.grid, dcfg.grid)
    spec = GuidanceSpec(positive, negative, cfg["guidance_scale"])
    z = ddim_sample(model_eps(den), spec, shape, noise_schedule(cfg), steps=cfg["ddim_steps"],
                    seed=cfg["sample_seed"], offset_noise=cfg["offset_noise"])
    clips = np.clip(LatentMap().decode(z), 0.0, 1.0)
    path = ctx.out / "samples.bin"
    io.save(path, {"items": items, "clips": clips, "latents": z},
            {"guidance": cfg["guidance"], "scale": repr(cfg["guidance_scale"])})
    out = [path]
    if ctx.options.get("dump_frames"):
        out += dump_frames(ctx.out / "frames", clips, items)
    return out


def write_ppm(path: Path, frame: np.ndarray) -> Path:
    pix = np.clip(np.round(frame * 255.0), 0, 255).astype(np.uint8)
    h, w, _ = pix.shape
    path.write_bytes(f"P6\n{w} {h}\n255\n".encode() + pix.tobytes())
    return path


def dump_frames(root: Path, clips: np.ndarray, items: np.ndarray) -> list[Path]:
    root.mkdir(parents=True, exist_ok=True)
    return [write_ppm(root / f"item{int(i):04d}_frame{f}.ppm", clip[f])
            for i, clip in zip(items, clips) for f in range(clip.shape[0])]


def item_metrics(pred: np.ndarray, gt: np.ndarray, cfg: RunConfig) -> dict[str, np.ndarray]:
    """Per-item metric arrays keyed by ``METRIC_COLUMNS``."""
    frame_clf, video_clf = pinned_classifiers(cfg["classifier_scenes"], gt.shape[1], gt.shape[2])
    n, f = gt.shape[:2]
    k, gk, trials = cfg["topk"], cfg["gt_topk"], cfg["eval_trials"]
    fp_gt = frame_probs(frame_clf, gt).reshape(n * f, -1)
    fp_pred = frame_probs(frame_clf, pred).reshape(n * f, -1)
    vp_gt, vp_pred = video_probs(video_clf, gt), video_probs(video_clf, pred)

    def frames(n_way):
        return nway_topk(fp_gt, fp_pred, n_way, k, trials, EVAL_SEED, gk).reshape(n, f).mean(axis=1)

    return {
        "ssim": np.array([clip_ssim(p, g) for p, g in zip(pred, gt)]),
        "2way_top1": frames(2),
        "50way_top1": frames(50),
        "video_2way": nway_topk(vp_gt, vp_pred, 2, k, trials, EVAL_SEED, gk),
        "video_50way": nway_topk(vp_gt, vp_pred, 50, k, trials, EVAL_SEED, gk),
        "ident_2way": two_way_identification(pred, gt),
    }


def stage_evaluate(ctx: StageContext) -> list[Path]:
    _, test = _splits(ctx)
    samples, _ = io.load(ctx.input_dir("sample") / "samples.bin")
    items = samples["items"]
    m = item_metrics(samples["clips"], test.clips[items], ctx.cfg)
    rows = [[int(it)] + [float(m[c][j]) for c in METRIC_COLUMNS] for j, it in enumerate(items)]
    per_item = write_csv(ctx.out / "metrics.csv", ["item", *METRIC_COLUMNS], rows)
    summary = write_csv(ctx.out / "metrics_summary.csv", ["metric", "mean", "std", "n"],
                        [(c, float(m[c].mean()), float(m[c].std(ddof=1)) if len(items) > 1 else 0.0,
                          len(items)) for c in METRIC_COLUMNS])
    return [per_item, summary]


def stage_interpret(ctx: StageContext) -> list[Path]:
    cfg = ctx.cfg
    _, test = _splits(ctx)
    n_vox = test.fmri.shape[1]
    regions = test.roi_regions
    labels = np.arange(cfg["n_regions"])
    encoders = {
        "pretrain": (load_pretrained_encoder(ctx, n_vox).encoder,
                     fmri_windows(test.fmri, np.arange(test.n_items), cfg["bold_shift_scans"], 1)),
        "contrastive": (load_fmri_model(ctx, "contrastive", n_vox).encoder, test_windows(cfg, test)),
        "cotrain": (load_fmri_model(ctx, "cotrain", n_vox).encoder, test_windows(cfg, test)),
    }
    fraction = np.array([(regions == r).mean() for r in labels])
    out = [write_csv(ctx.out / "region_fraction.csv", ["region", "voxel_fraction"],
                     [(int(r), float(v)) for r, v in zip(labels, fraction)])]
    for stage, (enc, win) in encoders.items():
        for rep in attention_report(enc, win, regions, stage, labels=labels):
            name = f"attention_{stage}_{rep.layer}"
            out.append(write_csv(ctx.out / f"{name}.csv", ["region", "share"], rep.rows()))
            out.append(svg_bars(ctx.out / f"{name}.svg", [f"R{r}" for r in labels], rep.shares.tolist(),
                                title=f"attention share, {stage} layer {rep.layer}"))
    return out


STAGE_FUNCS: dict[str, Callable[[StageContext], list[Path]]] = {
    "gen-data": stage_gen_data,
    "pretrain": stage_pretrain,
    "contrastive": stage_contrastive,
    "train-gen": stage_train_gen,
    "cotrain": stage_cotrain,
    "sample": stage_sample,
    "evaluate": stage_evaluate,
    "interpret": stage_interpret,
}


def upstream(stage: str) -> list[str]:
    """``stage`` and everything it needs, in run order."""
    seen: list[str] = []

    def visit(s):
        for d in DEPENDS[s]:
            visit(d)
        if s not in seen:
            seen.append(s)
    visit(stage)
    return seen


def ensure(stage: str, cfg: RunConfig, store: Store) -> Path:
    """Run ``stage`` and any missing prerequisites."""
    for s in upstream(stage):
        d, _ = run_stage(s, cfg, store)
    return d


__all__ = ["Store", "StageContext", "PrerequisiteError", "CheckpointError", "run_stage", "ensure",
           "upstream", "item_metrics", "METRIC_COLUMNS", "STAGE_FUNCS"]

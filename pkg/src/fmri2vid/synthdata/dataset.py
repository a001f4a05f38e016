"""Paired synthetic fMRI / video / caption dataset.

One continuous "movie" per split is cut into scenes of random length; every
clip of ``frames_per_clip`` frames lasts exactly one TR.  The subject's
voxel tuning is shared by both splits; the stimuli are not.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .. import io
from .bold import SubjectRecording, simulate_bold
from .hrf import HrfModel
from .scenes import (N_CLASSES, N_MOTIONS, SEMANTIC_DIM, caption_for, join_captions, make_scene,
                     render_frame)
from .selection import select_voxels

TEST_SCENE_OFFSET = 1_000_000


@dataclass
class DataConfig:
    n_train: int = 432
    n_test: int = 120
    fps: int = 3
    frames_per_clip: int = 6
    frame_size: int = 32
    tr_seconds: float = 2.0
    voxels: int = 512
    n_regions: int = 8
    region_signal: tuple = (1.0, 1.0, 1.0, 0.75, 0.25, 0.0, 0.0, 0.0)
    repeats: int = 6
    snr: float = 1.0
    bold_shift_scans: int = 3
    pad_clips: int = 6
    scene_min_frames: int = 6
    scene_max_frames: int = 18
    select_alpha: float = 0.01
    keep_fraction: float = 0.5
    select: bool = True
    tuning_smoothness: float = 4.0
    seed: int = 0

    def __post_init__(self):
        if self.frames_per_clip != round(self.fps * self.tr_seconds):
            raise ValueError("frames_per_clip must equal fps * tr_seconds (one clip per scan)")
        if len(self.region_signal) != self.n_regions:
            raise ValueError("region_signal needs one entry per region")
        if self.voxels % self.n_regions:
            raise ValueError("voxels must split evenly into regions")


@dataclass
class VoxelModel:
    """Ground-truth tuning of the synthetic subject."""

    tuning: np.ndarray          # [features, V]
    signal_mask: np.ndarray     # [V] bool
    region: np.ndarray          # [V] int

    @property
    def n_features(self) -> int:
        return self.tuning.shape[0]


def make_voxel_model(cfg: DataConfig, rng: np.random.Generator) -> VoxelModel:
    per = cfg.voxels // cfg.n_regions
    region = np.repeat(np.arange(cfg.n_regions), per)
    mask = np.zeros(cfg.voxels, dtype=bool)
    for r, frac in enumerate(cfg.region_signal):
        k = int(round(frac * per))
        mask[r * per: r * per + k] = True
    n_feat = SEMANTIC_DIM + 2
    raw = rng.normal(size=(n_feat, cfg.voxels))
    if cfg.tuning_smoothness > 0:
        # neighbouring voxels share tuning, as with the scanner's point spread
        raw = gaussian_filter1d(raw, cfg.tuning_smoothness, axis=1, mode="wrap")
    tuning = raw / np.linalg.norm(raw, axis=0, keepdims=True)
    tuning[:, ~mask] = 0.0
    return VoxelModel(tuning, mask, region)


def stimulus_features(codes: np.ndarray, motions: np.ndarray) -> np.ndarray:
    return np.concatenate([codes, motions / 2.0], axis=-1)


@dataclass
class Timeline:
    scenes: list
    frame_scene: np.ndarray     # index into ``scenes`` for every frame
    frame_phase: np.ndarray


def make_timeline(n_frames: int, cfg: DataConfig, rng: np.random.Generator,
                  id_offset: int = 0) -> Timeline:
    scenes = []
    frame_scene = np.empty(n_frames, dtype=np.int64)
    frame_phase = np.empty(n_frames, dtype=np.int64)
    pos = 0
    while pos < n_frames:
        dur = int(rng.integers(cfg.scene_min_frames, cfg.scene_max_frames + 1))
        k = int(rng.integers(N_CLASSES))
        m = int(rng.integers(N_MOTIONS))
        scenes.append(make_scene(k, m, id_offset + len(scenes), rng))
        end = min(n_frames, pos + dur)
        frame_scene[pos:end] = len(scenes) - 1
        frame_phase[pos:end] = np.arange(end - pos)
        pos = end
    return Timeline(scenes, frame_scene, frame_phase)


@dataclass
class Split:
    clips: np.ndarray           # [N, F, H, W, 3]
    captions: np.ndarray        # [N, L]
    frame_class: np.ndarray     # [N, F]
    frame_motion: np.ndarray    # [N, F]
    frame_scene: np.ndarray     # [N, F] global scene ids
    recording: SubjectRecording
    fmri: np.ndarray | None = None   # [T, V_sel] processed scans
    meta: dict = field(default_factory=dict)

    @property
    def n_items(self) -> int:
        return self.clips.shape[0]


def clip_caption(scenes, idx_in_clip: np.ndarray) -> np.ndarray:
    first = scenes[idx_in_clip[0]]
    uniq = list(dict.fromkeys(idx_in_clip.tolist()))
    if len(uniq) == 1:
        return caption_for(first)
    return join_captions(caption_for(first), caption_for(scenes[uniq[1]]))


def generate_split(cfg: DataConfig, voxels: VoxelModel, n_items: int, rng: np.random.Generator,
                   id_offset: int = 0, noise_sigma: float | None = None) -> tuple[Split, float]:
    F = cfg.frames_per_clip
    n_clips = n_items + cfg.pad_clips
    tl = make_timeline(n_clips * F, cfg, rng, id_offset)
    codes = np.stack([s.semantic_code for s in tl.scenes])[tl.frame_scene]
    motions = np.stack([s.motion_code for s in tl.scenes])[tl.frame_scene]
    drive = stimulus_features(codes, motions) @ voxels.tuning
    hrf = HrfModel(dt=1.0 / cfg.fps)
    clean = simulate_bold(drive, hrf, 0.0, cfg.tr_seconds)
    if noise_sigma is None:
        sig = clean.voxels[:, voxels.signal_mask]
        noise_sigma = float(sig.std(axis=0).mean() / cfg.snr) if sig.size else 1.0
    rec = simulate_bold(drive, hrf, noise_sigma, cfg.tr_seconds, cfg.repeats, rng,
                        voxels.signal_mask)

    size = cfg.frame_size
    clips = np.empty((n_items, F, size, size, 3))
    captions = np.empty((n_items, 8), dtype=np.int64)
    for c in range(n_items):
        sl = slice(c * F, (c + 1) * F)
        for f, (si, ph) in enumerate(zip(tl.frame_scene[sl], tl.frame_phase[sl])):
            clips[c, f] = render_frame(tl.scenes[si], float(ph), size)
        captions[c] = clip_caption(tl.scenes, tl.frame_scene[sl])
    fs = tl.frame_scene[: n_items * F].reshape(n_items, F)
    klass = np.array([s.class_id for s in tl.scenes])[fs]
    motion = np.array([s.motion_id for s in tl.scenes])[fs]
    sids = np.array([s.scene_id for s in tl.scenes])[fs]
    split = Split(clips, captions, klass, motion, sids, rec)
    return split, noise_sigma


@dataclass
class Dataset:
    cfg: DataConfig
    voxels: VoxelModel
    train: Split
    test: Split
    roi: np.ndarray
    norm_mean: np.ndarray
    norm_std: np.ndarray

    @property
    def n_selected(self) -> int:
        return self.roi.size

    @property
    def roi_regions(self) -> np.ndarray:
        return self.voxels.region[self.roi]


def generate_dataset(cfg: DataConfig) -> Dataset:
    rng = np.random.default_rng([cfg.seed, 17])
    vox = make_voxel_model(cfg, rng)
    train, sigma = generate_split(cfg, vox, cfg.n_train, np.random.default_rng([cfg.seed, 1]))
    test, _ = generate_split(cfg, vox, cfg.n_test, np.random.default_rng([cfg.seed, 2]),
                             TEST_SCENE_OFFSET, noise_sigma=sigma)
    if cfg.select:
        roi = select_voxels(list(train.recording.repeats), cfg.select_alpha, cfg.keep_fraction)
        if roi.size == 0:
            raise RuntimeError("voxel selection kept no voxels; raise snr or repeats")
    else:
        roi = np.arange(cfg.voxels)
    tr_mean = train.recording.voxels[:, roi]
    mu = tr_mean.mean(axis=0)
    sd = tr_mean.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    train.fmri = (tr_mean - mu) / sd
    test.fmri = (test.recording.voxels[:, roi] - mu) / sd
    return Dataset(cfg, vox, train, test, roi, mu, sd)


def window_scans(items: np.ndarray, shift: int, window: int, direction: str = "forward") -> np.ndarray:
    """Scan indices ``[n, window]`` feeding each target clip."""
    items = np.asarray(items)
    if direction == "forward":
        offs = np.arange(window)
    elif direction == "backward":
        offs = np.arange(-window + 1, 1)
    else:
        raise ValueError(f"unknown window direction {direction!r}")
    return items[:, None] + shift + offs[None, :]


def fmri_windows(fmri: np.ndarray, items, shift: int, window: int,
                 direction: str = "forward") -> np.ndarray:
    idx = window_scans(np.asarray(items), shift, window, direction)
    if idx.min() < 0 or idx.max() >= fmri.shape[0]:
        raise IndexError("window runs past the recorded scans; increase pad_clips")
    return fmri[idx]


def distinct_scene_batch(frame_scene: np.ndarray, batch_size: int, rng: np.random.Generator,
                         pool: np.ndarray | None = None) -> np.ndarray:
    """Sample clip indices whose scene-id sets are pairwise disjoint."""
    pool = np.arange(frame_scene.shape[0]) if pool is None else np.asarray(pool)
    chosen: list[int] = []
    used: set[int] = set()
    for i in rng.permutation(pool):
        ids = set(frame_scene[i].tolist())
        if ids & used:
            continue
        chosen.append(int(i))
        used |= ids
        if len(chosen) == batch_size:
            break
    return np.array(chosen, dtype=np.int64)


# -- on-disk layout -----------------------------------------------------------
def save_split(split: Split, path, ds: Dataset, name: str) -> list[Path]:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    cfg = ds.cfg
    io.save(path / "clips.bin", {
        "clips": split.clips,
        "frame_class": split.frame_class,
        "frame_motion": split.frame_motion,
        "frame_scene": split.frame_scene,
    })
    io.save(path / "fmri.bin", {
        "bold": split.recording.repeats,
        "fmri": split.fmri,
        "roi": ds.roi,
        "region": ds.voxels.region,
        "signal_mask": ds.voxels.signal_mask.astype(np.int64),
        "norm_mean": ds.norm_mean,
        "norm_std": ds.norm_std,
    })
    io.save(path / "captions.bin", {"captions": split.captions})
    io.write_kv(path / "meta.txt", {
        "split": name,
        "tr_seconds": cfg.tr_seconds,
        "fps": cfg.fps,
        "window_frames": cfg.frames_per_clip,
        "voxel_count": cfg.voxels,
        "selected_voxels": ds.roi.size,
        "bold_shift_scans": cfg.bold_shift_scans,
        "items": split.n_items,
        "seed": cfg.seed,
    })
    return [path / f for f in ("clips.bin", "fmri.bin", "captions.bin", "meta.txt")]


def save_dataset(ds: Dataset, root) -> list[Path]:
    root = Path(root)
    return save_split(ds.train, root / "train", ds, "train") + save_split(ds.test, root / "test", ds, "test")


@dataclass
class LoadedSplit:
    clips: np.ndarray
    captions: np.ndarray
    frame_class: np.ndarray
    frame_motion: np.ndarray
    frame_scene: np.ndarray
    fmri: np.ndarray
    bold: np.ndarray
    roi: np.ndarray
    region: np.ndarray
    signal_mask: np.ndarray
    meta: dict

    @property
    def n_items(self) -> int:
        return self.clips.shape[0]

    @property
    def roi_regions(self) -> np.ndarray:
        return self.region[self.roi]


def load_split(path) -> LoadedSplit:
    path = Path(path)
    clips, _ = io.load(path / "clips.bin")
    fm, _ = io.load(path / "fmri.bin")
    caps, _ = io.load(path / "captions.bin")
    return LoadedSplit(
        clips=clips["clips"], captions=caps["captions"], frame_class=clips["frame_class"],
        frame_motion=clips["frame_motion"], frame_scene=clips["frame_scene"],
        fmri=fm["fmri"], bold=fm["bold"], roi=fm["roi"], region=fm["region"],
        signal_mask=fm["signal_mask"].astype(bool), meta=io.read_kv(path / "meta.txt"),
    )


def config_dict(cfg: DataConfig) -> dict:
    return asdict(cfg)

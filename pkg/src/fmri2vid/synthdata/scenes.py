"""Synthetic stimulus catalogue: moving sprites on textured backgrounds.

The catalogue (class prototypes, colour maps, vocabulary) is fixed by
``CATALOG_SEED`` so classifiers trained on it stay valid across datasets.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CATALOG_SEED = 20231115
SEMANTIC_DIM = 8
N_CLASSES = 8
N_MOTIONS = 4
CAPTION_LEN = 8
VOCAB_SIZE = 64

PAD, THEN = 0, 1
CLASS_BASE = 2        # 8 classes x 2 synonyms
COLOR_BASE = 18       # 8 colours x 2 synonyms
MOTION_BASE = 34      # 4 motions x 2 synonyms
BRIGHT_BASE = 42      # dark / bright background x 2 synonyms

SHAPES = ("square", "disc", "triangle", "cross", "ring", "hbar", "vbar", "diamond")
# Pixels per frame at 3 FPS; motion class 0 is static.
MOTION_VELOCITIES = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [-1.5, 1.5]])
PALETTE = np.array([
    [0.9, 0.1, 0.1], [0.1, 0.8, 0.1], [0.1, 0.2, 0.9], [0.9, 0.9, 0.1],
    [0.9, 0.1, 0.9], [0.1, 0.9, 0.9], [0.95, 0.95, 0.95], [0.05, 0.05, 0.05],
])


def _catalog():
    rng = np.random.default_rng(CATALOG_SEED)
    protos = rng.normal(size=(N_CLASSES, SEMANTIC_DIM))
    protos /= np.linalg.norm(protos, axis=1, keepdims=True)
    return {
        "prototypes": protos * 2.0,
        "bg_map": rng.normal(0.0, 0.8, size=(3, SEMANTIC_DIM)),
        "fg_map": rng.normal(0.0, 1.2, size=(3, SEMANTIC_DIM)),
    }


CATALOG = _catalog()


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


@dataclass(frozen=True)
class SyntheticScene:
    semantic_code: np.ndarray
    motion_code: np.ndarray
    scene_id: int
    class_id: int = 0
    motion_id: int = 0

    @property
    def caption_tokens(self) -> np.ndarray:
        return caption_for(self)


def make_scene(class_id: int, motion_id: int, scene_id: int, rng: np.random.Generator,
               jitter: float = 0.35) -> SyntheticScene:
    code = CATALOG["prototypes"][class_id] + jitter * rng.normal(size=SEMANTIC_DIM)
    return SyntheticScene(code, MOTION_VELOCITIES[motion_id].copy(), int(scene_id),
                          int(class_id), int(motion_id))


def background_color(code: np.ndarray) -> np.ndarray:
    return 0.15 + 0.7 * _sigmoid(CATALOG["bg_map"] @ code)


def sprite_color(code: np.ndarray) -> np.ndarray:
    return _sigmoid(CATALOG["fg_map"] @ code)


def _texture(scene_id: int, size: int) -> np.ndarray:
    rng = np.random.default_rng([CATALOG_SEED, scene_id])
    yy, xx = np.mgrid[0:size, 0:size] / size
    tex = np.zeros((size, size))
    for _ in range(3):
        fx, fy = rng.uniform(0.5, 3.0, size=2)
        ph = rng.uniform(0, 2 * np.pi)
        tex += np.sin(2 * np.pi * (fx * xx + fy * yy) + ph)
    return tex / 3.0


def _shape_mask(shape: str, size: int, cy: float, cx: float, radius: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    # torus distance so sprites wrap around the frame edges
    dy = (yy - cy + size / 2) % size - size / 2
    dx = (xx - cx + size / 2) % size - size / 2
    r = radius
    if shape == "square":
        return (np.abs(dy) <= r) & (np.abs(dx) <= r)
    if shape == "disc":
        return dy**2 + dx**2 <= r**2
    if shape == "triangle":
        return (dy <= r) & (dy >= -r) & (np.abs(dx) <= (dy + r) / 2)
    if shape == "cross":
        return ((np.abs(dy) <= r / 3) & (np.abs(dx) <= r)) | ((np.abs(dx) <= r / 3) & (np.abs(dy) <= r))
    if shape == "ring":
        d2 = dy**2 + dx**2
        return (d2 <= r**2) & (d2 >= (0.55 * r) ** 2)
    if shape == "hbar":
        return (np.abs(dy) <= r / 2.5) & (np.abs(dx) <= 1.4 * r)
    if shape == "vbar":
        return (np.abs(dx) <= r / 2.5) & (np.abs(dy) <= 1.4 * r)
    if shape == "diamond":
        return np.abs(dy) + np.abs(dx) <= 1.2 * r
    raise ValueError(shape)


def render_frame(scene: SyntheticScene, phase: float, size: int = 32) -> np.ndarray:
    """One ``size x size x 3`` frame, ``phase`` frames after the scene onset."""
    code = scene.semantic_code
    bg = background_color(code)
    tex = _texture(scene.scene_id, size)
    frame = np.clip(bg[None, None, :] * (1.0 + 0.35 * tex[..., None]), 0.0, 1.0)
    rng = np.random.default_rng([CATALOG_SEED, scene.scene_id, 1])
    start = rng.uniform(0, size, size=2)
    cy, cx = start + phase * np.asarray(scene.motion_code) * (size / 32.0)
    radius = size * (0.16 + 0.04 * np.tanh(code[0]))
    mask = _shape_mask(SHAPES[scene.class_id], size, cy % size, cx % size, radius)
    frame[mask] = sprite_color(code)
    return frame


def render_clip(scene: SyntheticScene, frames: int, fps: int = 3, size: int = 32,
                start_phase: int = 0) -> np.ndarray:
    """``frames x size x size x 3`` clip with pixel values in [0, 1].

    Velocities are in pixels per frame at 3 FPS and rescale with ``fps``.
    """
    if frames < 1:
        raise ValueError("frames must be >= 1")
    step = 3.0 / fps
    return np.stack([render_frame(scene, (start_phase + f) * step, size) for f in range(frames)])


def color_word(code: np.ndarray) -> int:
    c = sprite_color(code)
    return int(np.argmin(((PALETTE - c) ** 2).sum(axis=1)))


def caption_for(scene: SyntheticScene) -> np.ndarray:
    """Deterministic tokens from (semantic code, scene id); synonyms alternate with scene id."""
    syn = scene.scene_id % 2
    bright = int(background_color(scene.semantic_code).mean() > 0.5)
    toks = [
        CLASS_BASE + 2 * scene.class_id + syn,
        COLOR_BASE + 2 * color_word(scene.semantic_code) + syn,
        MOTION_BASE + 2 * scene.motion_id + syn,
        BRIGHT_BASE + 2 * bright + syn,
    ]
    out = np.full(CAPTION_LEN, PAD, dtype=np.int64)
    out[: len(toks)] = toks
    return out


def join_captions(first: np.ndarray, second: np.ndarray) -> np.ndarray:
    """Two captions joined by the ``THEN`` separator (the background word is dropped)."""
    out = np.full(CAPTION_LEN, PAD, dtype=np.int64)
    out[:3] = first[:3]
    out[3] = THEN
    out[4:7] = second[:3]
    return out


def synonym_of(token: int) -> int:
    return token ^ 1 if CLASS_BASE <= token < BRIGHT_BASE + 4 else token


def scene_catalog(n_per_class: int = 4, seed: int = 0) -> list[SyntheticScene]:
    """A small fixed set of scenes covering every (class, motion) combination."""
    rng = np.random.default_rng([CATALOG_SEED, seed])
    scenes = []
    sid = 0
    for k in range(N_CLASSES):
        for j in range(n_per_class):
            scenes.append(make_scene(k, j % N_MOTIONS, sid, rng))
            sid += 1
    return scenes

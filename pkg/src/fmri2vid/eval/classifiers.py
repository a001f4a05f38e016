"""Small deterministic classifiers over the synthetic scene catalogue.

They stand in for pretrained image and video classifiers.  Weights are fit
by multinomial logistic regression on frames rendered from a pinned,
held-out catalogue seed, so every machine reproduces the same classifier.
Frames are passed through the latent projection first: generated clips live
in that subspace, and the classifier should judge content, not blur.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..diffusion.latent import LatentMap
from ..synthdata.scenes import (CATALOG_SEED, N_CLASSES, N_MOTIONS, background_color, color_word,
                                make_scene, render_clip)

N_FRAME_CLASSES = N_CLASSES * 8          # shape x sprite colour word
N_VIDEO_CLASSES = N_CLASSES * N_MOTIONS * 2   # shape x motion x background brightness
MAX_SHIFT = 3


def frame_label(class_id: int, code: np.ndarray) -> int:
    return class_id * 8 + color_word(code)


def video_label(class_id: int, motion_id: int, code: np.ndarray) -> int:
    bright = int(background_color(code).mean() > 0.5)
    return (class_id * N_MOTIONS + motion_id) * 2 + bright


def frame_features(frames: np.ndarray) -> np.ndarray:
    """Translation-invariant features of ``[..., H, W, 3]`` frames.

    Colour histograms of each channel plus the low-frequency magnitude
    spectrum of the luminance.
    """
    frames = np.clip(np.asarray(frames, dtype=np.float64), 0.0, 1.0)
    lead = frames.shape[:-3]
    flat = frames.reshape((-1,) + frames.shape[-3:])
    n, h, w, _ = flat.shape
    # 8 equal bins per channel on [0, 1], the last bin closed
    idx = np.minimum((flat * 8).astype(np.int64), 7) + 8 * np.arange(3)
    idx = idx.reshape(n, -1) + 24 * np.arange(n)[:, None]
    hist = np.bincount(idx.ravel(), minlength=24 * n).reshape(n, 24) / (h * w)
    lum = flat.mean(axis=-1)
    lum = lum - lum.mean(axis=(1, 2), keepdims=True)
    spec = np.abs(np.fft.fft2(lum))[:, :6, :6].reshape(len(flat), -1) / lum[0].size
    means = flat.mean(axis=(1, 2))
    feats = np.concatenate([hist, spec, means], axis=1)
    return feats.reshape(lead + (feats.shape[-1],))


def motion_features(clip: np.ndarray) -> np.ndarray:
    """Histogram of the best circular shift between consecutive frames."""
    lum = np.asarray(clip, dtype=np.float64).mean(axis=-1)
    size = 2 * MAX_SHIFT + 1
    hist = np.zeros((size, size))
    for a, b in zip(lum[:-1], lum[1:]):
        a = a - a.mean()
        b = b - b.mean()
        xc = np.real(np.fft.ifft2(np.fft.fft2(b) * np.conj(np.fft.fft2(a))))
        xc = np.roll(xc, (MAX_SHIFT, MAX_SHIFT), axis=(0, 1))[:size, :size]
        dy, dx = np.unravel_index(np.argmax(xc), xc.shape)
        hist[dy, dx] += 1.0
    return hist.ravel() / max(1, len(lum) - 1)


def video_features(clip: np.ndarray) -> np.ndarray:
    return np.concatenate([frame_features(clip).mean(axis=0), motion_features(clip)])


def fit_softmax(x: np.ndarray, y: np.ndarray, n_classes: int, steps: int = 400, lr: float = 0.5,
                l2: float = 1e-3) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Full-batch gradient descent on the regularised cross-entropy; returns standardisation too."""
    mu = x.mean(axis=0)
    sd = x.std(axis=0) + 1e-6
    z = (x - mu) / sd
    w = np.zeros((z.shape[1], n_classes))
    b = np.zeros(n_classes)
    onehot = np.eye(n_classes)[y]
    for _ in range(steps):
        logits = z @ w + b
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        g = (p - onehot) / len(z)
        w -= lr * (z.T @ g + l2 * w)
        b -= lr * g.sum(axis=0)
    return w, b, mu, sd


class ClassifierStub:
    def __init__(self, w, b, mu, sd, kind: str):
        self.w, self.b, self.mu, self.sd, self.kind = w, b, mu, sd, kind

    @property
    def n_classes(self) -> int:
        return self.w.shape[1]

    def probs_from_features(self, feats: np.ndarray) -> np.ndarray:
        logits = ((feats - self.mu) / self.sd) @ self.w + self.b
        logits -= logits.max(axis=-1, keepdims=True)
        p = np.exp(logits)
        return p / p.sum(axis=-1, keepdims=True)


def _training_clips(n_scenes: int, frames: int, size: int):
    rng = np.random.default_rng([CATALOG_SEED, 777])
    latent = LatentMap()
    clips, frame_y, video_y = [], [], []
    for sid in range(n_scenes):
        k = int(rng.integers(N_CLASSES))
        m = int(rng.integers(N_MOTIONS))
        scene = make_scene(k, m, 5_000_000 + sid, rng)
        clip = render_clip(scene, frames, size=size, start_phase=int(rng.integers(0, 12)))
        clips.append(latent.decode(latent.encode(clip)))
        frame_y.append(frame_label(k, scene.semantic_code))
        video_y.append(video_label(k, m, scene.semantic_code))
    return np.stack(clips), np.array(frame_y), np.array(video_y)


@lru_cache(maxsize=4)
def pinned_classifiers(n_scenes: int = 1024, frames: int = 6, size: int = 32):
    """``(frame classifier, video classifier)`` fit from the pinned catalogue seed."""
    clips, fy, vy = _training_clips(n_scenes, frames, size)
    ff = frame_features(clips[:, ::3])                     # two frames per clip
    fx = ff.reshape(-1, ff.shape[-1])
    frame = ClassifierStub(*fit_softmax(fx, np.repeat(fy, ff.shape[1]), N_FRAME_CLASSES), kind="frame")
    vx = np.stack([video_features(c) for c in clips])
    video = ClassifierStub(*fit_softmax(vx, vy, N_VIDEO_CLASSES), kind="video")
    return frame, video


def frame_probs(clf: ClassifierStub, clips: np.ndarray) -> np.ndarray:
    """``[n, F, H, W, 3]`` -> ``[n, F, N_cls]``."""
    return clf.probs_from_features(frame_features(clips))


def video_probs(clf: ClassifierStub, clips: np.ndarray) -> np.ndarray:
    return clf.probs_from_features(np.stack([video_features(c) for c in clips]))

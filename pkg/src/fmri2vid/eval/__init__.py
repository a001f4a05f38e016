"""Evaluation: SSIM, N-way top-K classification, identification, statistics and attention shares."""
from .ssim import SsimConfig, ssim, ssim_map, clip_ssim
from .nway import nway_topk, nway_topk_trials
from .stats import ablation_stats, significance_band
from .classifiers import (ClassifierStub, pinned_classifiers, frame_probs, video_probs,
                          frame_features, video_features, N_FRAME_CLASSES, N_VIDEO_CLASSES)
from .identification import two_way_identification
from .attention import (AttentionReport, attention_report, default_layers, received_attention,
                        region_shares)
from .report import write_csv, read_csv, svg_bars

__all__ = [
    "SsimConfig", "ssim", "ssim_map", "clip_ssim", "nway_topk", "nway_topk_trials",
    "ablation_stats", "significance_band", "ClassifierStub", "pinned_classifiers", "frame_probs",
    "video_probs", "frame_features", "video_features", "N_FRAME_CLASSES", "N_VIDEO_CLASSES",
    "two_way_identification", "AttentionReport", "attention_report", "default_layers",
    "received_attention", "region_shares", "write_csv", "read_csv", "svg_bars",
]

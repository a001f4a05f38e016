"""Synthetic paired fMRI/video/caption data with hemodynamic lag, plus voxel selection."""
from .hrf import HrfModel, double_gamma
from .scenes import SyntheticScene, render_clip, render_frame, make_scene, caption_for, scene_catalog
from .bold import SubjectRecording, simulate_bold, convolve_hrf
from .selection import select_voxels, voxel_significance, repeat_reliability
from .dataset import (DataConfig, Dataset, generate_dataset, save_dataset, load_split,
                      fmri_windows, window_scans, distinct_scene_batch)

__all__ = [
    "HrfModel", "double_gamma", "SyntheticScene", "render_clip", "render_frame", "make_scene",
    "caption_for", "scene_catalog", "SubjectRecording", "simulate_bold", "convolve_hrf",
    "select_voxels", "voxel_significance", "repeat_reliability", "DataConfig", "Dataset",
    "generate_dataset", "save_dataset", "load_split", "fmri_windows", "window_scans",
    "distinct_scene_batch",
]

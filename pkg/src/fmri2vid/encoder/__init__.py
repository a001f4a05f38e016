"""fMRI encoder: patch tokens, masked pretraining, spatiotemporal attention, projection head."""
from .model import (PatchConfig, FmriEncoder, FmriModel, ProjectionHead, EncoderOutput, Block,
                    TemporalAttention, num_tokens, patchify_voxels, unpatchify_voxels,
                    voxel_valid_mask, spatial_view, temporal_view, from_temporal_view,
                    spatiotemporal_attend, project, sparsify)
from .mbm import MaskedBrainModel, mbm_step, masked_mse, sample_mask, n_masked
from .train import PretrainConfig, PretrainResult, pretrain_mbm, NonFiniteLoss, check_finite

__all__ = [
    "PatchConfig", "FmriEncoder", "FmriModel", "ProjectionHead", "EncoderOutput", "Block",
    "TemporalAttention", "num_tokens", "patchify_voxels", "unpatchify_voxels", "voxel_valid_mask",
    "spatial_view", "temporal_view", "from_temporal_view", "spatiotemporal_attend", "project",
    "sparsify", "MaskedBrainModel", "mbm_step", "masked_mse", "sample_mask", "n_masked",
    "PretrainConfig", "PretrainResult", "pretrain_mbm", "NonFiniteLoss", "check_finite",
]

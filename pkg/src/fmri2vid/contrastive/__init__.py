"""Tri-modal alignment of fMRI embeddings with frozen text and image embeddings."""
from .embedders import FrozenEmbedder, FrozenImageEmbedder, FrozenTextEmbedder, l2_normalize
from .loss import MODES, clip_loss, normalize, retrieval_at_1, trimodal_loss
from .train import (ContrastiveConfig, ContrastiveResult, evaluate_retrieval, random_crop,
                    substitute_synonyms, train_contrastive)

__all__ = [
    "FrozenEmbedder", "FrozenImageEmbedder", "FrozenTextEmbedder", "l2_normalize", "MODES",
    "clip_loss", "normalize", "retrieval_at_1", "trimodal_loss", "ContrastiveConfig",
    "ContrastiveResult", "evaluate_retrieval", "random_crop", "substitute_synonyms",
    "train_contrastive",
]

"""Vertex embeddings, the attention-for-adjacency decoder and its oracle labeler."""

from .encoder import EMBED_LEN, FEATURE_LEN, assemble_embeddings, crop_centered, encode_features
from .model import (
    AfaError,
    AfaParams,
    adjacency_loss,
    afa_head,
    attention_layer,
    binarize_adjacency,
    decoder_forward,
    loss_value,
    score_probability,
)
from .oracle import oracle_adjacency, snap_to_polylines

__all__ = [
    "EMBED_LEN", "FEATURE_LEN", "AfaError", "AfaParams", "adjacency_loss", "afa_head",
    "assemble_embeddings", "attention_layer", "binarize_adjacency", "crop_centered",
    "decoder_forward", "encode_features", "loss_value", "oracle_adjacency",
    "score_probability", "snap_to_polylines",
]

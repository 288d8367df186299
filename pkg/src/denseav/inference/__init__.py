"""Decoding of network outputs into event candidates and Soft-NMS."""

from .decode import (
    Candidate,
    DecodeConfig,
    decode_arrays,
    decode_candidates,
    hard_nms,
    localize_batch,
    localize_video,
    read_predictions,
    soft_nms,
    write_predictions,
)

__all__ = [
    "Candidate",
    "DecodeConfig",
    "decode_arrays",
    "decode_candidates",
    "hard_nms",
    "localize_batch",
    "localize_video",
    "read_predictions",
    "soft_nms",
    "write_predictions",
]

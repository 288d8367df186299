"""Cross-modal pyramid transformer with dependency modeling and shared heads."""

from .config import ModelConfig
from .dependency import model_dependencies
from .encoder import cross_modal_pyramid, encode_unimodal, project_inputs
from .heads import heads_forward
from .network import (
    RawPredictions,
    batch_streams,
    forward,
    forward_streams,
    init_params,
    load_checkpoint,
    save_checkpoint,
)

__all__ = [
    "ModelConfig",
    "RawPredictions",
    "batch_streams",
    "cross_modal_pyramid",
    "encode_unimodal",
    "forward",
    "forward_streams",
    "heads_forward",
    "init_params",
    "load_checkpoint",
    "model_dependencies",
    "project_inputs",
    "save_checkpoint",
]

"""Target assignment, losses, optimizer and the training loop."""

from .losses import LossBreakdown, focal_loss, giou_loss_1d, stack_targets, total_loss
from .loop import Dataset, FitResult, TrainConfig, evaluate, fit
from .optim import Adam, lr_at
from .targets import DEFAULT_RANGES, TargetAssignment, assign_targets, decode_targets, level_bands

__all__ = [
    "Adam",
    "DEFAULT_RANGES",
    "Dataset",
    "FitResult",
    "LossBreakdown",
    "TargetAssignment",
    "TrainConfig",
    "assign_targets",
    "decode_targets",
    "evaluate",
    "fit",
    "focal_loss",
    "giou_loss_1d",
    "level_bands",
    "lr_at",
    "stack_targets",
    "total_loss",
]

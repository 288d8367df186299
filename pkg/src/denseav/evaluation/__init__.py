"""tIoU matching, average precision and the mAP protocol."""

from .metrics import (
    AVERAGE_THRESHOLDS,
    REPORT_THRESHOLDS,
    APReport,
    average_precision,
    class_ap,
    interpolated_ap,
    mean_ap,
    tiou,
    tiou_matrix,
)

__all__ = [
    "AVERAGE_THRESHOLDS",
    "APReport",
    "REPORT_THRESHOLDS",
    "average_precision",
    "class_ap",
    "interpolated_ap",
    "mean_ap",
    "tiou",
    "tiou_matrix",
]

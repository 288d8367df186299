"""Temporal IoU, per-class average precision and the mAP report.

Matching is greedy in score order: a prediction is a true positive when its
best still-unmatched ground truth of the same class and video reaches the
threshold (tIoU >= threshold). AP is the area under the interpolated
(upper-envelope) precision/recall curve, all-point style. Classes without
ground truth in the evaluated subset are left out of the mean.
"""

import csv
import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..data.schema import DatasetIndex, load_and_validate
from ..errors import UnknownVideoError

log = logging.getLogger(__name__)

REPORT_THRESHOLDS = (0.5, 0.6, 0.7, 0.8, 0.9)
AVERAGE_THRESHOLDS = tuple(round(0.1 * k, 10) for k in range(1, 10))


def tiou(a, b):
    """|a ∩ b| / |a ∪ b| for (start, end) pairs; 0 if either is degenerate."""
    if a[1] <= a[0] or b[1] <= b[0]:
        return 0.0
    inter = min(a[1], b[1]) - max(a[0], b[0])
    if inter <= 0:
        return 0.0
    union = (a[1] - a[0]) + (b[1] - b[0]) - inter
    return inter / union


def tiou_matrix(pred, gt):
    """Pairwise tIoU between (N, 2) and (M, 2) interval arrays."""
    pred = np.asarray(pred, dtype=np.float64).reshape(-1, 2)
    gt = np.asarray(gt, dtype=np.float64).reshape(-1, 2)
    inter = np.minimum(pred[:, None, 1], gt[None, :, 1]) - np.maximum(pred[:, None, 0], gt[None, :, 0])
    inter = np.maximum(inter, 0.0)
    len_p = pred[:, 1] - pred[:, 0]
    len_g = gt[:, 1] - gt[:, 0]
    union = len_p[:, None] + len_g[None, :] - inter
    valid = (len_p[:, None] > 0) & (len_g[None, :] > 0) & (union > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(valid, inter / np.where(union > 0, union, 1.0), 0.0)
    return out


def _sort_predictions(preds):
    # score desc, then earlier start, then video id
    return sorted(preds, key=lambda p: (-p[4], p[1], p[0]))


def interpolated_ap(tp, n_gt):
    """All-point interpolated AP from a TP/FP sequence in ranking order."""
    if n_gt == 0:
        return float("nan")
    tp = np.asarray(tp, dtype=np.float64)
    if tp.size == 0:
        return 0.0
    ctp = np.cumsum(tp)
    cfp = np.cumsum(1.0 - tp)
    recall = ctp / n_gt
    precision = ctp / (ctp + cfp)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    r_prev = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - r_prev) * envelope))


def _match(preds, gts_by_video, threshold):
    """TP flags for score-sorted predictions of one class."""
    matched = {vid: np.zeros(len(g), dtype=bool) for vid, g in gts_by_video.items()}
    tp = np.zeros(len(preds))
    for i, (vid, s, e, _, _) in enumerate(preds):
        g = gts_by_video.get(vid)
        if g is None or len(g) == 0:
            continue
        ious = tiou_matrix([[s, e]], g)[0]
        ious[matched[vid]] = -1.0
        j = int(np.argmax(ious))
        if ious[j] >= threshold:
            tp[i] = 1.0
            matched[vid][j] = True
    return tp


def class_ap(preds, gts, thresholds):
    """AP of one class at several thresholds.

    preds: iterable of (video_id, start, end, label, score); gts: iterable of
    (video_id, start, end, label), both already restricted to this class.
    Returns an array of APs (NaN when there is no ground truth).
    """
    preds = _sort_predictions(list(preds))
    by_video = defaultdict(list)
    for vid, s, e, _ in gts:
        by_video[vid].append((s, e))
    gts_by_video = {vid: np.asarray(v, dtype=np.float64) for vid, v in by_video.items()}
    n_gt = sum(len(v) for v in gts_by_video.values())
    return np.array([interpolated_ap(_match(preds, gts_by_video, thr), n_gt) for thr in thresholds])


def average_precision(predictions, gt, label, threshold):
    """AP of class ``label`` at one tIoU threshold; None if it has no ground truth."""
    preds = [p for p in predictions if p[3] == label]
    gts = [g for g in gt if g[3] == label]
    if not gts:
        return None
    return float(class_ap(preds, gts, [threshold])[0])


@dataclass
class APReport:
    per_class: list = field(default_factory=list)  # dicts: class, threshold, ap, gt_count
    map: dict = field(default_factory=dict)  # threshold string -> mAP
    avg_map: float = 0.0
    gt_counts: dict = field(default_factory=dict)
    excluded_classes: list = field(default_factory=list)

    def map_at(self, threshold):
        return self.map[f"{threshold:.1f}"]

    def to_json(self):
        return {
            "per_class": self.per_class,
            "map": self.map,
            "avg_map_0.1_0.9": self.avg_map,
            "gt_counts": {str(k): v for k, v in sorted(self.gt_counts.items())},
            "excluded_classes": self.excluded_classes,
        }

    def write(self, json_path, csv_path=None):
        Path(json_path).write_text(json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n")
        if csv_path is not None:
            with open(csv_path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["class", "threshold", "ap", "gt_count"])
                for row in self.per_class:
                    w.writerow([row["class"], f"{row['threshold']:.1f}", f"{row['ap']:.6f}", row["gt_count"]])
                for key in sorted(self.map):
                    w.writerow(["mAP", key, f"{self.map[key]:.6f}", ""])
                w.writerow(["avg_mAP", "0.1:0.9", f"{self.avg_map:.6f}", ""])


def _predictions_from(predictions):
    if isinstance(predictions, (str, Path)):
        predictions = json.loads(Path(predictions).read_text())
    if isinstance(predictions, dict) and "results" in predictions:
        predictions = predictions["results"]
    out = []
    for vid, items in predictions.items():
        for p in items:
            if hasattr(p, "start_s"):
                out.append((vid, float(p.start_s), float(p.end_s), int(p.label_id), float(p.score)))
            else:
                out.append((vid, float(p["start_s"]), float(p["end_s"]), int(p["label_id"]), float(p["score"])))
    return out


def mean_ap(predictions, annotations, thresholds=AVERAGE_THRESHOLDS, subset=None, strict=False):
    """Evaluate predictions against ground truth.

    ``predictions`` is a predictions JSON path, its decoded dict, or a
    mapping video id -> candidates. ``annotations`` is a DatasetIndex or an
    annotation path; ``subset`` restricts both sides to one split. Unknown
    video ids raise in strict mode and are skipped with a warning otherwise.
    """
    index = annotations if isinstance(annotations, DatasetIndex) else load_and_validate(annotations)
    videos = [v for v in index if subset is None or v.subset == subset]
    video_ids = {v.id for v in videos}
    num_classes = index.taxonomy.num_classes

    preds = []
    for p in _predictions_from(predictions):
        if p[0] not in video_ids:
            if p[0] in index and subset is not None:
                continue  # belongs to another split
            if strict:
                raise UnknownVideoError(f"prediction for unknown video {p[0]!r}")
            log.warning("skipping prediction for unknown video %r", p[0])
            continue
        if not 0 <= p[3] < num_classes:
            raise UnknownVideoError(f"label {p[3]} of video {p[0]!r} is not in the taxonomy")
        preds.append(p)
    gts = [(v.id, e.start_s, e.end_s, e.label_id) for v in videos for e in v.events]

    preds_by_class = defaultdict(list)
    for p in preds:
        preds_by_class[p[3]].append(p)
    gts_by_class = defaultdict(list)
    for g in gts:
        gts_by_class[g[3]].append(g)

    thresholds = [float(t) for t in thresholds]
    report = APReport()
    ap_table = []
    for c in range(num_classes):
        n = len(gts_by_class[c])
        report.gt_counts[c] = n
        if n == 0:
            report.excluded_classes.append(c)
            continue
        aps = class_ap(preds_by_class[c], gts_by_class[c], thresholds)
        ap_table.append(aps)
        for thr, ap in zip(thresholds, aps):
            report.per_class.append({"class": c, "threshold": thr, "ap": float(ap), "gt_count": n})
    if ap_table:
        means = np.mean(np.stack(ap_table), axis=0)
    else:
        means = np.zeros(len(thresholds))
    report.map = {f"{thr:.1f}": float(m) for thr, m in zip(thresholds, means)}
    report.avg_map = float(np.mean(means)) if len(means) else 0.0
    return report

"""Turn per-level network outputs into scored intervals and suppress duplicates."""

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from ..errors import ValidationError
from ..evaluation.metrics import tiou_matrix
from ..numerics import no_grad


@dataclass(frozen=True)
class Candidate:
    video_id: str
    start_s: float
    end_s: float
    label_id: int
    score: float


@dataclass
class DecodeConfig:
    score_threshold: float = 0.001
    top_k: int = 2000
    sigma: float = 0.9
    max_kept: int = 100
    min_score: float = 0.001

    def __post_init__(self):
        if not 0.0 <= self.score_threshold <= 1.0:
            raise ValidationError("score_threshold must lie in [0, 1]", field="score_threshold")
        if not self.sigma > 0:
            raise ValidationError("sigma must be positive", field="sigma")
        if self.top_k < 1 or self.max_kept < 1:
            raise ValidationError("top_k and max_kept must be >= 1", field="top_k")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown decode config keys {sorted(unknown)}")
        return cls(**d)


def decode_arrays(probs, dists, masks, hop_s, duration_s, config, offset_s=0.0):
    """Decode one video's per-level outputs.

    probs[l]: (T_l, C); dists[l]: (2, C, T_l) in level steps; masks[l]: (T_l,).
    Returns parallel arrays (start, end, label, score), best-first, at most
    ``config.top_k`` long.
    """
    starts, ends, labels, scores = [], [], [], []
    for l, (p, d, m) in enumerate(zip(probs, dists, masks)):
        scale = hop_s * 2 ** l
        keep = (p > config.score_threshold) & (np.asarray(m)[:, None] > 0)
        i, c = np.nonzero(keep)
        if i.size == 0:
            continue
        t = offset_s + (i + 0.5) * scale
        starts.append(t - d[0, c, i] * scale)
        ends.append(t + d[1, c, i] * scale)
        labels.append(c)
        scores.append(p[i, c])
    if not starts:
        empty = np.zeros(0)
        return empty, empty, np.zeros(0, dtype=int), empty
    start = np.clip(np.concatenate(starts).astype(np.float64), 0.0, duration_s)
    end = np.clip(np.concatenate(ends).astype(np.float64), 0.0, duration_s)
    label = np.concatenate(labels)
    score = np.concatenate(scores).astype(np.float64)
    ok = end > start
    start, end, label, score = start[ok], end[ok], label[ok], score[ok]
    order = np.lexsort((start, -score))[: config.top_k]
    return start[order], end[order], label[order], score[order]


def decode_candidates(raw, hop_s, config, durations, video_ids=None, offsets=None):
    """Candidates for every video of a RawPredictions batch (no suppression)."""
    n = raw.probs[0].shape[0]
    video_ids = video_ids or [str(b) for b in range(n)]
    offsets = offsets if offsets is not None else [0.0] * n
    out = {}
    for b in range(n):
        arrays = decode_arrays(
            [_np(p)[b] for p in raw.probs],
            [_np(d)[b] for d in raw.distances],
            [m[b] for m in raw.masks],
            hop_s, durations[b], config, offsets[b],
        )
        out[video_ids[b]] = _to_candidates(video_ids[b], *arrays)
    return out


def _np(x):
    return x.data if hasattr(x, "data") and not isinstance(x, np.ndarray) else np.asarray(x)


def _to_candidates(video_id, start, end, label, score):
    return [
        Candidate(video_id, float(s), float(e), int(c), float(p))
        for s, e, c, p in zip(start, end, label, score)
    ]


def _soft_nms_group(start, end, score, sigma, max_kept, min_score):
    """Gaussian Soft-NMS on one (video, class) group; returns (index, score) pairs."""
    iv = np.stack([start, end], axis=1)
    score = score.copy()
    alive = np.ones(len(score), dtype=bool)
    kept = []
    while alive.any() and len(kept) < max_kept:
        masked = np.where(alive, score, -np.inf)
        m = int(np.argmax(masked))
        if score[m] < min_score:
            break
        kept.append((m, float(score[m])))
        alive[m] = False
        rest = np.nonzero(alive)[0]
        if rest.size:
            ious = tiou_matrix(iv[m:m + 1], iv[rest])[0]
            score[rest] *= np.exp(-(ious ** 2) / sigma)
    return kept


def soft_nms(candidates, sigma=0.9, max_kept=100, min_score=0.001):
    """Suppress same-class duplicates per (video, class) by Gaussian decay.

    Returns per-video lists sorted by final score, at most ``max_kept`` each.
    Accepts a list of Candidates or a mapping video id -> list.
    """
    if isinstance(candidates, dict):
        return {vid: soft_nms(c, sigma, max_kept, min_score) for vid, c in candidates.items()}
    groups = {}
    # stable best-first order fixes tie-breaking inside every group
    for cand in sorted(candidates, key=lambda c: (-c.score, c.start_s, c.video_id)):
        groups.setdefault((cand.video_id, cand.label_id), []).append(cand)
    out = []
    for (vid, label), group in sorted(groups.items()):
        start = np.array([c.start_s for c in group])
        end = np.array([c.end_s for c in group])
        score = np.array([c.score for c in group])
        for idx, s in _soft_nms_group(start, end, score, sigma, max_kept, min_score):
            g = group[idx]
            out.append(Candidate(vid, g.start_s, g.end_s, label, s))
    out.sort(key=lambda c: (-c.score, c.start_s, c.label_id))
    by_video = {}
    for c in out:
        lst = by_video.setdefault(c.video_id, [])
        if len(lst) < max_kept:
            lst.append(c)
    return [c for vid in sorted(by_video) for c in by_video[vid]]


def hard_nms(candidates, iou_threshold=0.0, max_kept=100):
    """Classic per-(video, class) NMS: drop anything overlapping a kept box by > threshold."""
    groups = {}
    for cand in sorted(candidates, key=lambda c: (-c.score, c.start_s, c.video_id)):
        groups.setdefault((cand.video_id, cand.label_id), []).append(cand)
    out = []
    for _, group in sorted(groups.items()):
        kept = []
        for c in group:
            if len(kept) >= max_kept:
                break
            if all(tiou_matrix([[c.start_s, c.end_s]], [[k.start_s, k.end_s]])[0, 0] <= iou_threshold for k in kept):
                kept.append(c)
        out.extend(kept)
    out.sort(key=lambda c: (-c.score, c.start_s, c.label_id))
    return out


def localize_batch(store, cfg, streams, video_ids, durations, config=None, batch_size=16):
    """Forward, decode and Soft-NMS for padded FeatureStreams; returns id -> candidates."""
    from ..model.network import forward_streams

    config = config or DecodeConfig()
    results = {}
    with no_grad():
        for lo in range(0, len(streams), batch_size):
            chunk = streams[lo:lo + batch_size]
            raw = forward_streams(store, cfg, chunk)
            ids = video_ids[lo:lo + batch_size]
            decoded = decode_candidates(
                raw, chunk[0].hop_s, config, durations[lo:lo + batch_size], ids,
                [s.offset_s for s in chunk],
            )
            for vid in ids:
                results[vid] = soft_nms(decoded[vid], config.sigma, config.max_kept, config.min_score)
    return results


def localize_video(streams, checkpoint, config=None, video_id="video", duration_s=None):
    """Run one padded FeatureStreams through a checkpoint (path or (store, cfg))."""
    from ..model.network import load_checkpoint

    if isinstance(checkpoint, (str, Path)):
        store, cfg, _ = load_checkpoint(checkpoint)
    else:
        store, cfg = checkpoint
    if duration_s is None:
        duration_s = streams.offset_s + streams.valid_len * streams.hop_s
    return localize_batch(store, cfg, [streams], [video_id], [duration_s], config)[video_id]


def write_predictions(path, results):
    doc = {
        "results": {
            vid: [
                {"start_s": c.start_s, "end_s": c.end_s, "label_id": c.label_id, "score": c.score}
                for c in results[vid]
            ]
            for vid in sorted(results)
        }
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def read_predictions(path):
    doc = json.loads(Path(path).read_text())
    return {
        vid: [Candidate(vid, float(p["start_s"]), float(p["end_s"]), int(p["label_id"]), float(p["score"])) for p in items]
        for vid, items in doc["results"].items()
    }


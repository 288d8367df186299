"""Assign annotated events to pyramid steps.

Step i of level l (stride s = 2**l base steps) sits at
t = offset + (i + 0.5) * hop * s. It is a positive for class c when a class-c
event contains t and the larger of its two boundary distances, measured in
base steps, falls in that level's band [r_l, r_{l+1}). The regression target
is the pair of distances in level-l steps. Same-class events competing for a
step are resolved in favour of the shortest one.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_RANGES = (0.0, 4.0, 8.0, 16.0, 32.0, 64.0, math.inf)


def level_bands(ranges, num_levels):
    """(lower, upper) per level; the last used level is open-ended."""
    ranges = [float(r) for r in ranges]
    if any(b <= a for a, b in zip(ranges, ranges[1:])):
        raise ValueError(f"level ranges must be strictly increasing, got {ranges}")
    if len(ranges) < num_levels + 1 and ranges[-1] != math.inf:
        raise ValueError(f"{len(ranges)} range edges cannot cover {num_levels} levels")
    bands = []
    for l in range(num_levels):
        lo = ranges[l] if l < len(ranges) else ranges[-1]
        hi = ranges[l + 1] if l + 1 < len(ranges) else math.inf
        if l == num_levels - 1:
            hi = math.inf
        bands.append((lo, hi))
    return bands


def level_lengths(t_max, num_levels):
    out = [t_max]
    for _ in range(num_levels - 1):
        out.append(-(-out[-1] // 2))
    return out


@dataclass
class TargetAssignment:
    """labels[l] is (T_l, C) in {0, 1}; offsets[l] is (T_l, 2, C) in level steps.

    Offsets are zero wherever the label is zero. ``skipped`` counts events that
    received no positive step; ``dropped`` counts events lying entirely
    outside the valid window.
    """

    labels: list
    offsets: list
    valid: list
    skipped: int = 0
    dropped: int = 0

    @property
    def num_positives(self):
        return int(sum(l.sum() for l in self.labels))


def assign_targets(events, valid_len, hop_s, num_levels, num_classes, t_max=None,
                   ranges=DEFAULT_RANGES, offset_s=0.0, center_radius=None):
    """Build per-level classification and regression targets for one video.

    ``events`` are EventInstance-like (start_s, end_s, label_id). ``t_max`` is
    the padded sequence length (defaults to ``valid_len``). With
    ``center_radius`` set, only steps within that many level strides of the
    event center become positives.
    """
    t_max = valid_len if t_max is None else t_max
    bands = level_bands(ranges, num_levels)
    lengths = level_lengths(t_max, num_levels)
    window_lo = offset_s
    window_hi = offset_s + valid_len * hop_s

    kept = []
    dropped = 0
    for e in events:
        if e.end_s <= window_lo or e.start_s >= window_hi:
            dropped += 1
            continue
        kept.append(e)
    if dropped:
        log.warning("dropped %d event(s) outside the %.2f-%.2f s feature window", dropped, window_lo, window_hi)
    # longest first so shorter events overwrite them; among equal lengths the
    # earliest annotation is written last
    kept = sorted(reversed(kept), key=lambda e: -(e.end_s - e.start_s))

    labels, offsets, valid = [], [], []
    hits = np.zeros(len(kept), dtype=bool)
    for l, (t_l, (lo, hi)) in enumerate(zip(lengths, bands)):
        stride = 2 ** l
        lab = np.zeros((t_l, num_classes), dtype=np.float32)
        off = np.zeros((t_l, 2, num_classes), dtype=np.float32)
        n_valid = -(-valid_len // stride)
        ok = np.arange(t_l) < n_valid
        centers = offset_s + (np.arange(t_l) + 0.5) * hop_s * stride
        for k, e in enumerate(kept):
            ds = (centers - e.start_s) / hop_s  # base steps
            de = (e.end_s - centers) / hop_s
            reach = np.maximum(ds, de)
            pos = ok & (ds >= 0) & (de >= 0) & (reach >= lo) & (reach < hi)
            if center_radius is not None:
                mid = 0.5 * (e.start_s + e.end_s)
                pos &= np.abs(centers - mid) <= center_radius * hop_s * stride
            if not pos.any():
                continue
            hits[k] = True
            c = e.label_id
            lab[pos, c] = 1.0
            off[pos, 0, c] = ds[pos] / stride
            off[pos, 1, c] = de[pos] / stride
        labels.append(lab)
        offsets.append(off)
        valid.append(ok.astype(np.float32))
    return TargetAssignment(labels, offsets, valid, skipped=int((~hits).sum()), dropped=dropped)


def decode_targets(assign, hop_s, offset_s=0.0):
    """Turn every positive back into (level, step, class, start_s, end_s)."""
    out = []
    for l, (lab, off) in enumerate(zip(assign.labels, assign.offsets)):
        stride = 2 ** l
        for i, c in zip(*np.nonzero(lab)):
            t = offset_s + (i + 0.5) * hop_s * stride
            out.append((l, int(i), int(c), t - off[i, 0, c] * hop_s * stride, t + off[i, 1, c] * hop_s * stride))
    return out

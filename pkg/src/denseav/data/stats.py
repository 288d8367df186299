"""Corpus statistics: overlap rate, co-occurrence NPMI, repetition, durations."""

import csv
import math
from collections import Counter, namedtuple
from itertools import combinations, permutations

import numpy as np

from ..errors import UndefinedRateError

NPMIPair = namedtuple("NPMIPair", "class_a class_b count npmi")

DEFAULT_GAP_S = 5.0


def _coverage_lengths(intervals):
    """Total length covered by >= 1 and by >= 2 intervals (sweep line)."""
    points = []
    for s, e in intervals:
        points.append((s, 1))
        points.append((e, -1))
    # ends sort before starts at equal coordinates; touching is not overlap
    points.sort(key=lambda p: (p[0], p[1]))
    covered = overlapped = 0.0
    depth = 0
    prev = None
    for x, delta in points:
        if prev is not None and x > prev:
            if depth >= 1:
                covered += x - prev
            if depth >= 2:
                overlapped += x - prev
        depth += delta
        prev = x
    return covered, overlapped


def overlap_rate(video):
    """|union of pairwise overlaps| / |union of all event intervals|."""
    events = video.events
    if not events:
        raise UndefinedRateError(f"video {video.id!r} has no events")
    covered, overlapped = _coverage_lengths([(e.start_s, e.end_s) for e in events])
    return overlapped / covered if covered > 0 else 0.0


def _simultaneous_pairs(events):
    pairs = set()
    for a, b in combinations(events, 2):
        if a.label_id == b.label_id:
            continue
        if min(a.end_s, b.end_s) - max(a.start_s, b.start_s) > 0:
            pairs.add(tuple(sorted((a.label_id, b.label_id))))
    return pairs


def _consecutive_pairs(events, gap_s, same_class):
    pairs = set()
    for a, b in permutations(events, 2):
        if (a.label_id == b.label_id) != same_class:
            continue
        gap = b.start_s - a.end_s
        if 0 <= gap <= gap_s:
            pairs.add((a.label_id, b.label_id))
    return pairs


def npmi_pairs(corpus, mode="simultaneous", gap_s=DEFAULT_GAP_S):
    """Rank distinct class pairs by normalized pointwise mutual information.

    Probabilities are video frequencies: p(a) is the share of videos that
    contain class a, p(a, b) the share containing at least one qualifying
    (a, b) event pair. Simultaneous pairs overlap in time (unordered, a < b);
    consecutive pairs are ordered, with b starting within ``gap_s`` seconds
    after a ends. Pairs never observed are omitted. Sorted by npmi, then
    count, descending.
    """
    if mode not in ("simultaneous", "consecutive"):
        raise ValueError(f"mode must be simultaneous or consecutive, got {mode!r}")
    if gap_s < 0:
        raise ValueError("gap_s must be >= 0")
    videos = list(corpus)
    if not videos:
        raise ValueError("empty corpus")
    n = len(videos)
    class_videos = Counter()
    pair_videos = Counter()
    for v in videos:
        class_videos.update({e.label_id for e in v.events})
        if mode == "simultaneous":
            pair_videos.update(_simultaneous_pairs(v.events))
        else:
            pair_videos.update(_consecutive_pairs(v.events, gap_s, same_class=False))

    out = []
    for (a, b), count in pair_videos.items():
        p_ab = count / n
        p_a = class_videos[a] / n
        p_b = class_videos[b] / n
        if p_ab >= 1.0:
            value = 1.0
        else:
            value = math.log(p_ab / (p_a * p_b)) / -math.log(p_ab)
        out.append(NPMIPair(a, b, count, value))
    out.sort(key=lambda r: (-r.npmi, -r.count, r.class_a, r.class_b))
    return out


def repetition_rates(corpus, gap_s=DEFAULT_GAP_S):
    """Per class: consecutive same-class event pairs / number of class events.

    Unlike npmi_pairs this counts every qualifying pair, since repetition
    within one video is the quantity of interest.
    """
    pairs = Counter()
    events = Counter()
    for v in corpus:
        evs = sorted(v.events, key=lambda e: (e.start_s, e.end_s))
        events.update(e.label_id for e in evs)
        for a, b in permutations(evs, 2):
            if a.label_id == b.label_id and 0 <= b.start_s - a.end_s <= gap_s:
                pairs[a.label_id] += 1
    return {c: pairs[c] / events[c] for c in sorted(events)}


def duration_histogram(corpus, bin_width_s=1.0, kind="event"):
    """Histogram rows (bin_start_s, bin_end_s, count) of event or video durations."""
    if kind == "event":
        values = [e.duration_s for v in corpus for e in v.events]
    elif kind == "video":
        values = [v.duration_s for v in corpus]
    else:
        raise ValueError("kind must be 'event' or 'video'")
    if not values:
        return []
    n_bins = max(1, int(math.ceil(max(values) / bin_width_s)))
    edges = np.arange(n_bins + 1) * bin_width_s
    counts, _ = np.histogram(values, bins=edges)
    return [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(n_bins)]


def write_npmi_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["class_a", "class_b", "count", "npmi"])
        for r in rows:
            w.writerow([r.class_a, r.class_b, r.count, f"{r.npmi:.6f}"])


def write_histogram_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_start_s", "bin_end_s", "count"])
        for start, end, count in rows:
            w.writerow([f"{start:.6g}", f"{end:.6g}", count])


def write_overlap_csv(path, corpus):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["video_id", "num_events", "overlap_rate"])
        for v in corpus:
            if v.events:
                w.writerow([v.id, len(v.events), f"{overlap_rate(v):.6f}"])

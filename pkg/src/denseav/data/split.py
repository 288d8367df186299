"""Iterative stratification for multi-label subset assignment.

Each video is a multi-label example (the set of classes it contains). The
procedure repeatedly takes the label with the fewest unassigned examples and
hands each of its examples to the subset that still wants that label most,
so every class ends up split close to the requested ratio.
"""

from collections import Counter

import numpy as np

from ..errors import StratificationError
from ..numerics.params import seeded_rng


def iterative_stratification(label_sets, ratios, seed=0):
    """Assign each example (a set of labels) to a subset index.

    Returns a list with one subset index per example. Ties are broken by
    the larger remaining overall demand, then uniformly at random.
    """
    ratios = np.asarray(ratios, dtype=float)
    if ratios.ndim != 1 or len(ratios) < 1 or np.any(ratios < 0) or ratios.sum() <= 0:
        raise ValueError(f"invalid ratios {ratios.tolist()}")
    fractions = ratios / ratios.sum()
    rng = seeded_rng(seed)
    n = len(label_sets)
    label_sets = [frozenset(s) for s in label_sets]

    label_counts = Counter(lbl for s in label_sets for lbl in s)
    want_label = {lbl: fractions * cnt for lbl, cnt in label_counts.items()}
    want_total = fractions * n
    assignment = [-1] * n
    remaining = set(range(n))

    def pick(candidates_demand):
        best = np.flatnonzero(candidates_demand == candidates_demand.max())
        if len(best) > 1:
            overall = want_total[best]
            best = best[overall == overall.max()]
        return int(best[0] if len(best) == 1 else rng.choice(best))

    while remaining:
        pending = Counter(lbl for i in remaining for lbl in label_sets[i])
        if not pending:
            break
        fewest = min(pending.values())
        tied = sorted(lbl for lbl, c in pending.items() if c == fewest)
        label = tied[0] if len(tied) == 1 else tied[int(rng.integers(len(tied)))]
        for i in sorted(i for i in remaining if label in label_sets[i]):
            subset = pick(want_label[label])
            assignment[i] = subset
            remaining.discard(i)
            for lbl in label_sets[i]:
                want_label[lbl][subset] -= 1
            want_total[subset] -= 1

    # examples without any label follow overall demand only
    for i in sorted(remaining):
        subset = pick(want_total.copy())
        assignment[i] = subset
        want_total[subset] -= 1
    return assignment


def stratified_split(videos, ratios=(3, 1, 1), seed=0, names=("train", "val", "test"),
                     num_classes=None, min_per_class=3):
    """Map video id -> subset name with per-class counts near ``ratios``.

    ``videos`` is any iterable of AnnotatedVideo. Every class of the taxonomy
    (``num_classes``, when given) must appear in at least ``min_per_class``
    videos.
    """
    if len(names) != len(ratios):
        raise ValueError("names and ratios must have equal length")
    videos = sorted(videos, key=lambda v: v.id)
    label_sets = [set(v.labels()) for v in videos]
    counts = Counter(lbl for s in label_sets for lbl in s)
    classes = range(num_classes) if num_classes is not None else sorted(counts)
    for c in classes:
        if counts.get(c, 0) == 0:
            raise StratificationError(f"class {c} is absent from the corpus")
        if counts[c] < min_per_class:
            raise StratificationError(f"class {c} appears in {counts[c]} videos, need >= {min_per_class}")
    assignment = iterative_stratification(label_sets, ratios, seed=seed)
    return {v.id: names[a] for v, a in zip(videos, assignment)}


def apply_split(index, assignment):
    """Write subset names back onto the videos of a DatasetIndex (in place)."""
    for v in index:
        v.subset = assignment[v.id]
    return index

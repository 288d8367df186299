"""
A planted-event corpus and its co-occurrence statistics
=======================================================

Class signatures are written into the audio and visual streams over each
annotated interval, so a model trained on it can be scored against known
ground truth. Distractors appear in only one of the two streams.
"""

# %%
import numpy as np

from denseav.data import SyntheticSpec, generate_synthetic
from denseav.data.split import stratified_split
from denseav.data.stats import duration_histogram, npmi_pairs, overlap_rate

# class 1 tends to overlap with class 4
weights = np.ones((6, 6))
weights[1, 4] = weights[4, 1] = 30.0
corpus = generate_synthetic(SyntheticSpec(cooccurrence=weights.tolist(), seed=3))
index = corpus.index
print(len(index), "videos,", sum(len(v.events) for v in index), "events")

# %%
first = next(iter(index))
audio, visual = corpus.features[first.id]
print(first.id, audio.shape, visual.shape, [(e.start_s, e.end_s, e.label_id) for e in first.events])

# %%
rates = [overlap_rate(v) for v in index]
print("mean overlap rate", np.mean(rates))

# %%
for row in npmi_pairs(index, "simultaneous")[:3]:
    print(row)

# %%
for lo, hi, n in duration_histogram(index, bin_width_s=2.0)[:6]:
    print(f"{lo:4.1f}-{hi:4.1f}s {n}")

# %%
# a fresh 3:1:1 split that keeps every class in every subset
assignment = stratified_split(list(index), ratios=(3, 1, 1), seed=0, num_classes=6)
print({s: sum(1 for v in assignment.values() if v == s) for s in ("train", "val", "test")})

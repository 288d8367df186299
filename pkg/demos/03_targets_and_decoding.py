"""
From annotations to pyramid targets and back
============================================

Each event is owned by the pyramid level whose range covers its larger
boundary distance. Decoding the targets as if they were network outputs
recovers the original intervals.
"""

# %%

from denseav.data.schema import EventInstance
from denseav.inference import DecodeConfig, decode_arrays
from denseav.training import assign_targets, decode_targets

hop, steps = 0.32, 64
events = [EventInstance(1.0, 2.0, 0), EventInstance(1.5, 12.0, 1), EventInstance(4.0, 19.0, 0)]
a = assign_targets(events, steps, hop, num_levels=4, num_classes=2)
for l, lab in enumerate(a.labels):
    print(f"level {l}: {lab.shape[0]} steps, positives per class {lab.sum(0)}")

# %%
for l, i, c, s, e in decode_targets(a, hop)[:5]:
    print(f"level {l} step {i} class {c}: {s:.2f}-{e:.2f}s")

# %%
no_filter = DecodeConfig(score_threshold=0.0, top_k=10**6, max_kept=10**6, min_score=0.0)
s, e, c, p = decode_arrays(a.labels, [o.transpose(1, 2, 0) for o in a.offsets], a.valid, hop, steps * hop, no_filter)
print(sorted({(round(float(x), 3), round(float(y), 3), int(k)) for x, y, k in zip(s, e, c)}))

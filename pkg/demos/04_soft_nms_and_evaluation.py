"""
Soft-NMS and the mAP evaluator
==============================
"""

# %%
from denseav.data.schema import AnnotatedVideo, DatasetIndex, EventInstance, Taxonomy
from denseav.evaluation import mean_ap
from denseav.inference import Candidate, soft_nms

cands = [Candidate("v", 0.0, 10.0, 0, 0.9), Candidate("v", 0.0, 8.0, 0, 0.8), Candidate("v", 20.0, 24.0, 1, 0.7)]
for c in soft_nms(cands, sigma=0.9):
    print(c)
# the second box overlaps the first with tIoU 0.8: 0.8 * exp(-0.64 / 0.9) ~ 0.393

# %%
index = DatasetIndex(Taxonomy(("dog", "car")), [
    AnnotatedVideo("v", 30.0, "test", [EventInstance(0.0, 10.0, 0), EventInstance(19.0, 25.0, 1)]),
])
report = mean_ap({"v": soft_nms(cands, sigma=0.9)}, index)
print({k: round(v, 3) for k, v in report.map.items()})
print("avg mAP 0.1:0.9", report.avg_map)

"""
Training on the synthetic corpus
================================

A shortened version of the acceptance run (the full one uses 30 epochs and
takes a few minutes). Set EPOCHS higher to approach the reported numbers.
"""

# %%
import logging

from denseav.data import SyntheticSpec, generate_synthetic
from denseav.inference import localize_batch
from denseav.model import ModelConfig
from denseav.training import Dataset, TrainConfig, evaluate, fit

logging.basicConfig(level=logging.INFO, format="%(message)s")
EPOCHS = 4

dataset = Dataset.from_corpus(generate_synthetic(SyntheticSpec()))
model_cfg = ModelConfig(audio_dim=16, visual_dim=16, num_classes=6, embed_dim=64, unimodal_layers=1,
                        pyramid_levels=4, hidden_classes=8, dependency_dim=16, max_len=64)
train_cfg = TrainConfig(epochs=EPOCHS, warmup_epochs=1, lr=1e-3, batch_size=16)

# %%
result = fit(dataset, model_cfg, train_cfg)
for h in result.history:
    print(h)

# %%
report, _ = evaluate(result.store, model_cfg, dataset, "test")
print("test avg mAP", round(report.avg_map, 4))

# %%
ids = dataset.ids("test")[:1]
preds = localize_batch(result.store, model_cfg, dataset.padded(ids, 64), ids, dataset.durations(ids))
print("ground truth", [(e.start_s, e.end_s, e.label_id) for e in dataset.index[ids[0]].events])
print("top predictions", [(round(c.start_s, 2), round(c.end_s, 2), c.label_id, round(c.score, 2)) for c in preds[ids[0]][:5]])

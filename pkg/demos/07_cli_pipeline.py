"""
The command-line pipeline, driven from Python
=============================================

Three epochs on 60 training videos only exercise the plumbing, so the scores
printed at the end are near zero. The acceptance run uses the full corpus and
30 epochs.

Equivalent shell commands:

    denseav generate --out run/data
    denseav train --annotations run/data/annotations.json --features run/data/features --out run/model ...
    denseav infer ... --checkpoint run/model/checkpoint.davt --out run/model --overwrite
    denseav eval --annotations run/data/annotations.json --predictions run/model/predictions.json --out run/model --overwrite
"""

# %%
import json
import tempfile
from pathlib import Path

from denseav.cli import main

root = Path(tempfile.mkdtemp())
data, run = root / "data", root / "model"
small = ["--set", 'data.videos_per_subset={"train": 60, "val": 12, "test": 12}']
main(["generate", "--out", str(data), *small])

# %%
model = ["--set", "model.embed_dim=32", "--set", "model.unimodal_layers=1", "--set", "model.pyramid_levels=4",
         "--set", "model.hidden_classes=4", "--set", "model.dependency_dim=8", "--set", "model.max_len=64",
         "--set", "train.epochs=3", "--set", "train.warmup_epochs=1", "--set", "train.lr=0.001"]
paths = ["--annotations", str(data / "annotations.json"), "--features", str(data / "features")]
main(["train", *paths, "--out", str(run), *model])
main(["infer", *paths, "--checkpoint", str(run / "checkpoint.davt"), "--out", str(run), "--overwrite"])
main(["eval", "--annotations", str(data / "annotations.json"), "--predictions", str(run / "predictions.json"),
      "--out", str(run), "--overwrite"])

# %%
print(sorted(p.name for p in run.iterdir()))
print(json.loads((run / "report.json").read_text())["map"])

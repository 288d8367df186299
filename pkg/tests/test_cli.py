import json

import pytest

from denseav.cli import main
from denseav.data.schema import load_and_validate

SMALL = ['--set', 'data.videos_per_subset={"train": 12, "val": 4, "test": 4}']


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    assert main(["generate", "--out", str(out / "g"), *SMALL]) == 0
    return out / "g"


def echo_predictions(annotations, path, subset="test"):
    index = load_and_validate(annotations)
    doc = {"results": {v.id: [{"start_s": e.start_s, "end_s": e.end_s, "label_id": e.label_id, "score": 1.0}
                              for e in v.events] for v in index.subset(subset)}}
    path.write_text(json.dumps(doc))


def test_generate_is_byte_identical(tmp_path, corpus):
    assert main(["generate", "--out", str(tmp_path / "again"), *SMALL]) == 0
    assert (tmp_path / "again" / "annotations.json").read_bytes() == (corpus / "annotations.json").read_bytes()
    a = sorted(p.relative_to(corpus) for p in (corpus / "features").rglob("*.davf"))
    for rel in a:
        assert (tmp_path / "again" / rel).read_bytes() == (corpus / rel).read_bytes()


def test_eval_gt_echo_scores_one(tmp_path, corpus, capsys):
    echo_predictions(corpus / "annotations.json", tmp_path / "p.json")
    code = main(["eval", "--annotations", str(corpus / "annotations.json"),
                 "--predictions", str(tmp_path / "p.json"), "--out", str(tmp_path / "run")])
    assert code == 0
    report = json.loads((tmp_path / "run" / "report.json").read_text())
    assert report["avg_map_0.1_0.9"] == 1.0
    assert "avg(0.1:0.9)=1.0000" in capsys.readouterr().out
    assert json.loads((tmp_path / "run" / "config.json").read_text())["run"]["subset"] == "test"


def test_refuses_to_overwrite(tmp_path, corpus):
    echo_predictions(corpus / "annotations.json", tmp_path / "p.json")
    args = ["eval", "--annotations", str(corpus / "annotations.json"),
            "--predictions", str(tmp_path / "p.json"), "--out", str(tmp_path / "run")]
    assert main(args) == 0
    assert main(args) == 2
    assert main(args + ["--overwrite"]) == 0


def test_usage_errors(tmp_path):
    assert main(["train", "--set", "model.bogus=1"]) == 2
    assert main(["train", "--set", "nosection.x=1"]) == 2
    assert main([]) == 2
    assert main(["frobnicate"]) == 2
    (tmp_path / "c.json").write_text('{"train": {"epochz": 3}}')
    assert main(["train", "--config", str(tmp_path / "c.json")]) == 2


def test_validation_failures_exit_one(tmp_path):
    assert main(["generate", "--out", str(tmp_path / "g"), "--set", "data.num_classes=0"]) == 1
    (tmp_path / "bad.json").write_text('{"version": 1, "taxonomy": [{"id": 0, "name": "a"}], "videos": [{"id": "v", "duration_s": 5, '
                                       '"subset": "test", "events": [{"start_s": 3, "end_s": 1, "label_id": 0}]}]}')
    assert main(["validate", "--annotations", str(tmp_path / "bad.json")]) == 1


def test_validate_split_and_stats(tmp_path, corpus):
    ann = str(corpus / "annotations.json")
    assert main(["validate", "--annotations", ann, "--features", str(corpus / "features")]) == 0
    assert main(["split", "--annotations", ann, "--out", str(tmp_path / "s"), "--set", "split.min_per_class=1"]) == 0
    index = load_and_validate(tmp_path / "s" / "annotations.json")
    assert {v.subset for v in index} <= {"train", "val", "test"}
    assert main(["stats", "--annotations", ann, "--out", str(tmp_path / "st")]) == 0
    for name in ("npmi_simultaneous.csv", "npmi_consecutive.csv", "overlap.csv", "event_durations.csv"):
        assert (tmp_path / "st" / name).stat().st_size > 0


def test_train_infer_eval_run(tmp_path, corpus):
    ann, feats = str(corpus / "annotations.json"), str(corpus / "features")
    model = ["--set", "model.embed_dim=8", "--set", "model.num_heads=2", "--set", "model.hidden_classes=2",
             "--set", "model.dependency_dim=4", "--set", "model.dependency_heads=2", "--set", "model.max_len=64",
             "--set", "model.pyramid_levels=3", "--set", "train.epochs=1", "--set", "train.warmup_epochs=0"]
    run = tmp_path / "run"
    assert main(["train", "--annotations", ann, "--features", feats, "--out", str(run), *model]) == 0
    for name in ("config.json", "checkpoint.davt", "metrics.jsonl"):
        assert (run / name).exists()
    cfg = json.loads((run / "config.json").read_text())
    assert cfg["model"]["num_classes"] == 6 and cfg["model"]["audio_dim"] == 16
    assert main(["infer", "--annotations", ann, "--features", feats, "--checkpoint", str(run / "checkpoint.davt"),
                 "--out", str(run), "--overwrite"]) == 0
    assert main(["eval", "--annotations", ann, "--predictions", str(run / "predictions.json"),
                 "--out", str(run), "--overwrite"]) == 0
    assert (run / "report.csv").exists()
    # a contradicting explicit dimension is a usage error
    assert main(["train", "--annotations", ann, "--features", feats, "--out", str(tmp_path / "r2"),
                 "--set", "model.num_classes=4", *model]) == 2

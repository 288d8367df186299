"""Command-line entry point: ``denseav <command> [options]``.

Commands: generate, split, stats, train, infer, eval, validate, gradcheck.
Configuration is one JSON document with the sections below; ``--config``
loads it, ``--set section.key=value`` overrides single values (the value is
parsed as JSON when possible). Unknown sections or keys are usage errors.
The fully resolved configuration is written to ``<out>/config.json``.

Exit status: 0 success, 1 validation failure, 2 usage error.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, fields
from pathlib import Path

EXIT_OK, EXIT_INVALID, EXIT_USAGE = 0, 1, 2
COMMANDS = ("generate", "split", "stats", "train", "infer", "eval", "validate", "gradcheck")

log = logging.getLogger("denseav")


class UsageError(Exception):
    pass


def _dataclass_defaults(cls):
    obj = cls()
    return {f.name: getattr(obj, f.name) for f in fields(cls)}


def default_config():
    """Every configurable value with its default."""
    from .data.synthetic import SyntheticSpec
    from .inference.decode import DecodeConfig
    from .model.config import ModelConfig
    from .training.loop import TrainConfig

    return {
        "model": _dataclass_defaults(ModelConfig),
        "train": TrainConfig().to_dict(),
        "decode": _dataclass_defaults(DecodeConfig),
        "data": asdict(SyntheticSpec()),
        "split": {"ratios": [3, 1, 1], "min_per_class": 3},
        "stats": {"gap_s": 5.0, "bin_width_s": 1.0},
        "paths": {"annotations": None, "features": None, "checkpoint": None, "predictions": None},
        "run": {"subset": "test", "overwrite": False},
    }


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


class RunConfig:
    """Defaults, then the --config file, then --set overrides.

    ``explicit`` remembers which keys the user set, so values inferred from
    the data (feature dims, class count) never silently replace them.
    """

    def __init__(self):
        self.values = default_config()
        self.explicit = set()

    def update(self, doc, origin):
        if not isinstance(doc, dict):
            raise UsageError(f"{origin}: configuration must be a JSON object")
        for section, entries in doc.items():
            if section not in self.values:
                raise UsageError(f"{origin}: unknown config section {section!r}")
            if not isinstance(entries, dict):
                raise UsageError(f"{origin}: section {section!r} must be an object")
            for key, value in entries.items():
                self.set(f"{section}.{key}", value, origin)

    def set(self, dotted, value, origin="--set"):
        section, _, key = dotted.partition(".")
        if section not in self.values or not key:
            raise UsageError(f"{origin}: unknown config key {dotted!r}")
        if key not in self.values[section]:
            raise UsageError(f"{origin}: unknown config key {dotted!r}")
        self.values[section][key] = value
        self.explicit.add(dotted)

    def __getitem__(self, section):
        return self.values[section]

    def build(self, section):
        from .data.synthetic import SyntheticSpec
        from .inference.decode import DecodeConfig
        from .model.config import ModelConfig
        from .training.loop import TrainConfig

        makers = {"model": ModelConfig.from_dict, "train": TrainConfig.from_dict,
                  "decode": DecodeConfig.from_dict, "data": lambda d: SyntheticSpec(**d).validate()}
        try:
            return makers[section](dict(self.values[section]))
        except TypeError as exc:
            raise UsageError(f"invalid {section} config: {exc}") from exc

    def dump(self, path):
        Path(path).write_text(json.dumps(self.values, indent=1, sort_keys=True) + "\n")


def _load_config(args):
    cfg = RunConfig()
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"--config: no such file {path}")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"--config: malformed JSON ({exc})") from exc
        cfg.update(doc, str(path))
    for item in args.set or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {item!r}")
        cfg.set(key.strip(), _parse_value(raw))
    if args.seed is not None:
        for key in ("train.seed", "data.seed"):
            cfg.set(key, args.seed, "--seed")
    for flag in ("annotations", "features", "checkpoint", "predictions"):
        value = getattr(args, flag, None)
        if value is not None:
            cfg.set(f"paths.{flag}", value, f"--{flag}")
    if getattr(args, "subset", None):
        cfg.set("run.subset", args.subset, "--subset")
    if getattr(args, "overwrite", False):
        cfg.set("run.overwrite", True, "--overwrite")
    return cfg


def _require_path(cfg, key, kind="file"):
    value = cfg["paths"][key]
    if not value:
        raise UsageError(f"missing paths.{key} (use --{key} or --set paths.{key}=...)")
    path = Path(value)
    if kind == "file" and not path.is_file():
        raise UsageError(f"paths.{key}: no such file {path}")
    if kind == "dir" and not path.is_dir():
        raise UsageError(f"paths.{key}: no such directory {path}")
    return path


def _out_dir(args, cfg, primary):
    if not args.out:
        raise UsageError("--out DIR is required for this command")
    out = Path(args.out)
    if (out / primary).exists() and not cfg["run"]["overwrite"]:
        raise UsageError(f"{out / primary} exists; pass --overwrite to replace it")
    out.mkdir(parents=True, exist_ok=True)
    cfg.dump(out / "config.json")
    return out


def _infer_model_dims(cfg, index, feature_dir):
    from .data.features import load_features

    first = next(iter(index)).id
    streams = load_features(first, feature_dir)
    inferred = {
        "audio_dim": streams.audio.shape[1],
        "visual_dim": streams.visual.shape[1],
        "num_classes": index.taxonomy.num_classes,
    }
    for key, value in inferred.items():
        dotted = f"model.{key}"
        if dotted in cfg.explicit and cfg["model"][key] != value:
            raise UsageError(f"{dotted}={cfg['model'][key]} does not match the data ({value})")
        cfg["model"][key] = value


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_generate(args, cfg):
    from .data.synthetic import generate_synthetic, write_corpus

    spec = cfg.build("data")
    out = _out_dir(args, cfg, "annotations.json")
    corpus = generate_synthetic(spec)
    write_corpus(corpus, out, spec)
    print(f"wrote {len(corpus.index)} videos to {out}")
    return EXIT_OK


def cmd_split(args, cfg):
    from .data.schema import load_and_validate
    from .data.split import apply_split, stratified_split

    path = _require_path(cfg, "annotations")
    index = load_and_validate(path)
    ratios = cfg["split"]["ratios"]
    assignment = stratified_split(
        list(index), ratios=tuple(ratios), seed=cfg["train"]["seed"],
        num_classes=index.taxonomy.num_classes, min_per_class=cfg["split"]["min_per_class"],
    )
    apply_split(index, assignment)
    target = Path(args.out) / "annotations.json" if args.out else path
    if args.out:
        _out_dir(args, cfg, "annotations.json")
    index.save(target)
    counts = {name: len(index.ids(name)) for name in ("train", "val", "test")}
    print(f"split written to {target}: {counts}")
    return EXIT_OK


def cmd_stats(args, cfg):
    from .data.schema import load_and_validate
    from .data.stats import (
        duration_histogram,
        npmi_pairs,
        write_histogram_csv,
        write_npmi_csv,
        write_overlap_csv,
    )

    index = load_and_validate(_require_path(cfg, "annotations"))
    out = _out_dir(args, cfg, "npmi_simultaneous.csv")
    gap = cfg["stats"]["gap_s"]
    write_npmi_csv(out / "npmi_simultaneous.csv", npmi_pairs(index, "simultaneous", gap))
    write_npmi_csv(out / "npmi_consecutive.csv", npmi_pairs(index, "consecutive", gap))
    write_overlap_csv(out / "overlap.csv", index)
    width = cfg["stats"]["bin_width_s"]
    write_histogram_csv(out / "event_durations.csv", duration_histogram(index, width, "event"))
    write_histogram_csv(out / "video_durations.csv", duration_histogram(index, width, "video"))
    print(f"statistics written to {out}")
    return EXIT_OK


def cmd_train(args, cfg):
    from .data.schema import load_and_validate
    from .training.loop import Dataset, fit

    index = load_and_validate(_require_path(cfg, "annotations"))
    feature_dir = _require_path(cfg, "features", "dir")
    _infer_model_dims(cfg, index, feature_dir)
    model_cfg, train_cfg, decode_cfg = cfg.build("model"), cfg.build("train"), cfg.build("decode")
    out = _out_dir(args, cfg, "checkpoint.davt")
    dataset = Dataset.from_dir(index, feature_dir, subsets=("train", "val"))
    result = fit(dataset, model_cfg, train_cfg, out_dir=out, decode_cfg=decode_cfg)
    print(f"best epoch {result.best_epoch}, val avg mAP {result.best_val:.4f}; checkpoint in {out}")
    return EXIT_OK


def cmd_infer(args, cfg):
    from .data.schema import load_and_validate
    from .inference.decode import localize_batch, write_predictions
    from .model.network import load_checkpoint
    from .training.loop import Dataset

    index = load_and_validate(_require_path(cfg, "annotations"))
    feature_dir = _require_path(cfg, "features", "dir")
    store, model_cfg, _ = load_checkpoint(_require_path(cfg, "checkpoint"))
    decode_cfg = cfg.build("decode")
    out = _out_dir(args, cfg, "predictions.json")
    subset = cfg["run"]["subset"]
    dataset = Dataset.from_dir(index, feature_dir, subsets=(subset,))
    ids = dataset.ids(subset)
    streams = dataset.padded(ids, model_cfg.max_len)
    results = localize_batch(store, model_cfg, streams, ids, dataset.durations(ids), decode_cfg)
    write_predictions(out / "predictions.json", results)
    print(f"predictions for {len(ids)} {subset} videos written to {out / 'predictions.json'}")
    return EXIT_OK


def cmd_eval(args, cfg):
    from .evaluation.metrics import mean_ap

    annotations = _require_path(cfg, "annotations")
    predictions = _require_path(cfg, "predictions")
    out = _out_dir(args, cfg, "report.json")
    report = mean_ap(predictions, annotations, subset=cfg["run"]["subset"], strict=args.strict)
    report.write(out / "report.json", out / "report.csv")
    summary = " ".join(f"mAP@{k}={report.map[k]:.4f}" for k in ("0.5", "0.6", "0.7", "0.8", "0.9"))
    print(f"{summary} avg(0.1:0.9)={report.avg_map:.4f}")
    return EXIT_OK


def cmd_validate(args, cfg):
    from .data.features import load_features
    from .data.schema import load_and_validate

    index = load_and_validate(_require_path(cfg, "annotations"))
    checked = 0
    if cfg["paths"]["features"]:
        feature_dir = _require_path(cfg, "features", "dir")
        for v in index:
            streams = load_features(v.id, feature_dir)
            covered = streams.offset_s + streams.valid_len * streams.hop_s
            late = [e for e in v.events if e.start_s >= covered]
            if late and args.strict:
                from .errors import ValidationError

                raise ValidationError(f"{len(late)} event(s) start after the features end ({covered:.2f} s)",
                                      video_id=v.id, field="events")
            checked += 1
    print(f"ok: {len(index)} videos, {index.taxonomy.num_classes} classes, {checked} feature pairs checked")
    return EXIT_OK


def cmd_gradcheck(args, cfg):
    from .selfcheck import run_all

    report = run_all(seed=cfg["train"]["seed"])
    text = json.dumps(report, indent=1, sort_keys=True)
    if args.out:
        out = _out_dir(args, cfg, "gradcheck.json")
        (out / "gradcheck.json").write_text(text + "\n")
    print(f"max relative error {report['max_error']:.3e} (tolerance {report['tolerance']:.0e}), "
          f"end-to-end {report['end_to_end']:.3e}, {report['seconds']:.1f}s")
    return EXIT_OK if report["passed"] else EXIT_INVALID


HANDLERS = {
    "generate": cmd_generate,
    "split": cmd_split,
    "stats": cmd_stats,
    "train": cmd_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "validate": cmd_validate,
    "gradcheck": cmd_gradcheck,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config value (repeatable)")
    common.add_argument("--seed", type=int, help="seed for data generation, splitting and training")
    common.add_argument("--threads", type=int, default=1, help="worker thread cap (default 1)")
    common.add_argument("--out", metavar="DIR", help="run / output directory")
    common.add_argument("--strict", action="store_true", help="turn warnings into validation failures")
    common.add_argument("--overwrite", action="store_true", help="replace existing outputs in --out")
    common.add_argument("--annotations", metavar="PATH")
    common.add_argument("--features", metavar="DIR")
    common.add_argument("--checkpoint", metavar="PATH")
    common.add_argument("--predictions", metavar="PATH")
    common.add_argument("--subset", choices=("train", "val", "test"))
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="denseav", description="Dense audio-visual event localization pipeline.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    helps = {
        "generate": "write a seeded synthetic corpus",
        "split": "assign train/val/test subsets by iterative stratification",
        "stats": "NPMI, overlap and duration statistics as CSV",
        "train": "train a model; writes checkpoint.davt and metrics.jsonl",
        "infer": "localize events; writes predictions.json",
        "eval": "score predictions; writes report.json and report.csv",
        "validate": "lint annotations and feature files",
        "gradcheck": "finite-difference check of every primitive and the tiny model",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def _cap_threads(n):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def main(argv=None):
    from .errors import DenseAVError

    try:
        args = build_parser().parse_args(argv)
        if not args.command:
            raise UsageError(f"a command is required: {', '.join(COMMANDS)}")
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        _cap_threads(args.threads)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        cfg = _load_config(args)
        return HANDLERS[args.command](args, cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DenseAVError, json.JSONDecodeError) as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())

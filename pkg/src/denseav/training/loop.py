"""Mini-batch training with warmup-cosine Adam and best-on-validation selection."""

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from ..data.features import FeatureStreams, load_features, pad_and_mask
from ..errors import TrainingDivergedError, ValidationError
from ..evaluation.metrics import mean_ap
from ..inference.decode import DecodeConfig, localize_batch
from ..model.network import forward_streams, init_params, save_checkpoint
from ..numerics import backward, seeded_rng
from .losses import total_loss
from .optim import Adam, lr_at
from .targets import DEFAULT_RANGES, assign_targets

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 40
    warmup_epochs: int = 5
    lr: float = 1e-4
    batch_size: int = 16
    weight_decay: float = 1e-4
    lam: float = 1.0
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    ranges: list = field(default_factory=lambda: list(DEFAULT_RANGES))
    seed: int = 0
    cls_norm: str = "steps"  # or "positives"
    center_radius: float = None  # None: every interior step is positive
    random_crop: bool = False
    clip_norm: float = 1.0  # 0 disables gradient-norm clipping
    eval_every: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.lam < 0:
            raise ValidationError("lam must be >= 0", field="lam")
        r = [float(x) for x in self.ranges]
        if any(b <= a for a, b in zip(r, r[1:])):
            raise ValidationError("ranges must be strictly increasing", field="ranges")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValidationError("epochs and batch_size must be >= 1", field="epochs")
        if self.warmup_epochs < 0:
            raise ValidationError("warmup_epochs must be >= 0", field="warmup_epochs")
        if self.cls_norm not in ("steps", "positives"):
            raise ValidationError("cls_norm must be 'steps' or 'positives'", field="cls_norm")
        return self

    def to_dict(self):
        d = asdict(self)
        d["ranges"] = [x if math.isfinite(x) else "inf" for x in map(float, self.ranges)]
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown train config keys {sorted(unknown)}")
        d = dict(d)
        if "ranges" in d:
            d["ranges"] = [float(x) for x in d["ranges"]]
        return cls(**d)


@dataclass
class Dataset:
    """An annotation index plus unpadded feature streams for its videos."""

    index: object
    streams: dict

    @classmethod
    def from_corpus(cls, corpus):
        streams = {}
        for vid, (audio, visual) in corpus.features.items():
            t = len(audio)
            streams[vid] = FeatureStreams(audio, visual, corpus.hop_s, t, np.ones(t, dtype=np.float32))
        return cls(corpus.index, streams)

    @classmethod
    def from_dir(cls, index, feature_dir, subsets=None):
        ids = [v.id for v in index if subsets is None or v.subset in subsets]
        return cls(index, {vid: load_features(vid, feature_dir) for vid in ids})

    def ids(self, subset):
        return [vid for vid in self.index.ids(subset) if vid in self.streams]

    def padded(self, ids, t_max, crop="head", rng=None):
        return [pad_and_mask(self.streams[vid], t_max, crop, rng) for vid in ids]

    def durations(self, ids):
        return [self.index[vid].duration_s for vid in ids]


@dataclass
class FitResult:
    store: object
    history: list
    best_epoch: int
    best_val: float


def _targets(dataset, ids, padded, model_cfg, train_cfg):
    return [
        assign_targets(
            dataset.index[vid].events, s.valid_len, s.hop_s, model_cfg.pyramid_levels,
            model_cfg.num_classes, t_max=model_cfg.max_len, ranges=train_cfg.ranges,
            offset_s=s.offset_s, center_radius=train_cfg.center_radius,
        )
        for vid, s in zip(ids, padded)
    ]


def evaluate(store, model_cfg, dataset, subset, decode_cfg=None, batch_size=16):
    """Localize every video of ``subset`` and score it; returns (report, predictions)."""
    ids = dataset.ids(subset)
    padded = dataset.padded(ids, model_cfg.max_len)
    preds = localize_batch(store, model_cfg, padded, ids, dataset.durations(ids), decode_cfg, batch_size)
    return mean_ap(preds, dataset.index, subset=subset), preds


def fit(dataset, model_cfg, train_cfg, out_dir=None, decode_cfg=None, progress=None):
    """Train a model; returns FitResult with the best-on-validation parameters.

    With ``out_dir`` set, writes checkpoint.davt (best parameters) and appends
    one JSON line per epoch to metrics.jsonl.
    """
    train_ids = dataset.ids("train")
    if not train_ids:
        raise ValidationError("training subset is empty", field="subset")
    val_ids = dataset.ids("val")
    decode_cfg = decode_cfg or DecodeConfig(top_k=200)
    rng = seeded_rng(train_cfg.seed)
    store = init_params(model_cfg, seed=train_cfg.seed)
    opt = Adam(store, lr=train_cfg.lr, weight_decay=train_cfg.weight_decay, clip_norm=train_cfg.clip_norm or None)

    crop = "random" if train_cfg.random_crop else "head"
    fixed = None
    if crop == "head":
        padded = dataset.padded(train_ids, model_cfg.max_len)
        fixed = dict(zip(train_ids, zip(padded, _targets(dataset, train_ids, padded, model_cfg, train_cfg))))

    n_batches = math.ceil(len(train_ids) / train_cfg.batch_size)
    total_steps = n_batches * train_cfg.epochs
    warmup_steps = n_batches * train_cfg.warmup_epochs
    metrics_path = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        metrics_path = out_dir / "metrics.jsonl"
        metrics_path.write_text("")

    history = []
    best_val, best_epoch, best_state = -1.0, 0, None
    step = 0
    for epoch in range(1, train_cfg.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(len(train_ids))
        sums = np.zeros(3)
        lr = 0.0
        for bi in range(n_batches):
            ids = [train_ids[j] for j in order[bi * train_cfg.batch_size:(bi + 1) * train_cfg.batch_size]]
            if fixed is not None:
                streams = [fixed[v][0] for v in ids]
                targets = [fixed[v][1] for v in ids]
            else:
                streams = dataset.padded(ids, model_cfg.max_len, crop, rng)
                targets = _targets(dataset, ids, streams, model_cfg, train_cfg)
            step += 1
            lr = lr_at(step, train_cfg.lr, warmup_steps, total_steps)
            store.zero_grad()
            raw = forward_streams(store, model_cfg, streams)
            loss, parts = total_loss(
                raw, targets, train_cfg.lam, train_cfg.focal_alpha, train_cfg.focal_gamma, train_cfg.cls_norm,
            )
            if not np.isfinite(parts.total):
                raise TrainingDivergedError(
                    epoch, bi, {"total": parts.total, "cls": parts.cls_term, "reg": parts.reg_term}
                )
            backward(loss)
            opt.step(lr)
            sums += (parts.total, parts.cls_term, parts.reg_term)
        means = sums / n_batches

        val_map = None
        if val_ids and (epoch % train_cfg.eval_every == 0 or epoch == train_cfg.epochs):
            report, _ = evaluate(store, model_cfg, dataset, "val", decode_cfg, train_cfg.batch_size)
            val_map = report.avg_map
            if val_map > best_val:
                best_val, best_epoch, best_state = val_map, epoch, store.state_dict()
        record = {
            "epoch": epoch,
            "lr": lr,
            "train_loss": float(means[0]),
            "cls": float(means[1]),
            "reg": float(means[2]),
            "val_avg_mAP": val_map,
        }
        history.append(record)
        if metrics_path is not None:
            with open(metrics_path, "a") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
        log.info("epoch %d loss %.4f cls %.4f reg %.4f val %s (%.1fs)", epoch, means[0], means[1], means[2],
                 "-" if val_map is None else f"{val_map:.4f}", time.perf_counter() - t0)
        if progress is not None:
            progress(record)

    if best_state is None:
        best_epoch, best_val = train_cfg.epochs, float("nan")
    else:
        store.load_state_dict(best_state)
    if out_dir is not None:
        save_checkpoint(out_dir / "checkpoint.davt", store, model_cfg,
                        {"train": train_cfg.to_dict(), "best_epoch": best_epoch, "best_val_avg_mAP": best_val})
    return FitResult(store, history, best_epoch, best_val)

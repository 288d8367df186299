"""Seeded planted-event corpora.

Every class owns a fixed audio signature and a fixed visual signature. Inside
an annotated event both streams carry their class signature; a distractor
interval carries the signature in exactly one stream and is not annotated, so
only a model that checks both streams can tell the two apart.
"""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import GenerationError
from ..numerics.params import seeded_rng
from .features import feature_path, write_feature_file
from .schema import AnnotatedVideo, DatasetIndex, EventInstance, Taxonomy


@dataclass
class SyntheticSpec:
    num_classes: int = 6
    videos_per_subset: dict = field(default_factory=lambda: {"train": 300, "val": 60, "test": 60})
    min_steps: int = 32
    max_steps: int = 64
    hop_s: float = 0.32
    audio_dim: int = 16
    visual_dim: int = 16
    mean_events: float = 2.5
    min_event_steps: int = 2
    max_event_steps: int = 32
    overlap_prob: float = 0.3
    # C x C non-negative symmetric weights for picking the partner class of
    # an overlapping event; None means uniform over the other classes
    cooccurrence: list = None
    distractor_rate: float = 0.2
    noise_sigma: float = 0.5
    signal_scale: float = 1.0
    seed: int = 0

    def validate(self):
        c = self.num_classes
        if c < 1:
            raise GenerationError("num_classes must be >= 1")
        for name in ("overlap_prob", "distractor_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise GenerationError(f"{name} must lie in [0, 1], got {v}")
        if self.noise_sigma < 0 or self.hop_s <= 0:
            raise GenerationError("noise_sigma must be >= 0 and hop_s > 0")
        if not 1 <= self.min_steps <= self.max_steps:
            raise GenerationError("need 1 <= min_steps <= max_steps")
        if not 1 <= self.min_event_steps <= self.max_event_steps:
            raise GenerationError("need 1 <= min_event_steps <= max_event_steps")
        if self.min_event_steps > self.min_steps:
            raise GenerationError("min_event_steps exceeds the shortest video")
        if self.mean_events < 1:
            raise GenerationError("mean_events must be >= 1")
        if self.mean_events * self.min_event_steps > self.min_steps:
            raise GenerationError(
                f"infeasible: {self.mean_events} events of >= {self.min_event_steps} steps "
                f"do not fit in {self.min_steps} steps"
            )
        if self.cooccurrence is not None:
            m = np.asarray(self.cooccurrence, dtype=float)
            if m.shape != (c, c) or np.any(m < 0) or not np.allclose(m, m.T):
                raise GenerationError("cooccurrence must be a symmetric non-negative C x C matrix")
        return self


@dataclass
class SyntheticCorpus:
    index: DatasetIndex
    features: dict  # video id -> (audio T x Da, visual T x Dv)
    audio_signatures: np.ndarray
    visual_signatures: np.ndarray
    distractors: dict  # video id -> list of (start_step, end_step, label, modality)
    hop_s: float


def _event_length(rng, lo, hi):
    # log-uniform so short events are common
    return int(np.clip(np.floor(np.exp(rng.uniform(np.log(lo), np.log(hi + 1)))), lo, hi))


def _free_starts(occupied, t, length):
    free = np.ones(t - length + 1, dtype=bool)
    for s, e in occupied:
        lo = max(0, s - length + 1)
        hi = min(t - length, e - 1)
        if lo <= hi:
            free[lo:hi + 1] = False
    return np.flatnonzero(free)


def _partner_class(rng, spec, label):
    c = spec.num_classes
    if c == 1:
        return label
    if spec.cooccurrence is None:
        w = np.ones(c)
    else:
        w = np.asarray(spec.cooccurrence, dtype=float)[label].copy()
    w[label] = 0.0
    if w.sum() <= 0:
        w = np.ones(c)
        w[label] = 0.0
    return int(rng.choice(c, p=w / w.sum()))


def _sample_events(rng, spec, t):
    n_target = 1 + int(rng.poisson(spec.mean_events - 1))
    max_len = min(spec.max_event_steps, t)
    events = []  # (start_step, end_step, label)
    for k in range(n_target):
        overlap = k > 0 and rng.random() < spec.overlap_prob
        length = _event_length(rng, spec.min_event_steps, max_len)
        if overlap:
            anchor = events[int(rng.integers(len(events)))]
            label = _partner_class(rng, spec, anchor[2])
            lo = max(0, anchor[0] - length + 1)
            hi = min(t - length, anchor[1] - 1)
            start = int(rng.integers(lo, hi + 1))
            events.append((start, start + length, label))
            continue
        label = int(rng.integers(spec.num_classes))
        occupied = [(s, e) for s, e, _ in events]
        starts = _free_starts(occupied, t, length)
        while len(starts) == 0 and length > spec.min_event_steps:
            length -= 1
            starts = _free_starts(occupied, t, length)
        if len(starts) == 0:
            break
        start = int(starts[rng.integers(len(starts))])
        events.append((start, start + length, label))
    return sorted(events)


def generate_synthetic(spec):
    """Build a SyntheticCorpus; identical specs give identical corpora."""
    spec.validate()
    rng = seeded_rng(spec.seed)
    c = spec.num_classes
    sig_a = rng.standard_normal((c, spec.audio_dim)) * spec.signal_scale
    sig_v = rng.standard_normal((c, spec.visual_dim)) * spec.signal_scale
    taxonomy = Taxonomy(tuple(f"class_{i}" for i in range(c)))

    videos, features, distractors = [], {}, {}
    for subset in sorted(spec.videos_per_subset):
        for i in range(spec.videos_per_subset[subset]):
            vid = f"syn_{subset}_{i:05d}"
            t = int(rng.integers(spec.min_steps, spec.max_steps + 1))
            events = _sample_events(rng, spec, t)
            audio = np.zeros((t, spec.audio_dim))
            visual = np.zeros((t, spec.visual_dim))
            for s, e, label in events:
                audio[s:e] += sig_a[label]
                visual[s:e] += sig_v[label]
            extra = []
            for _ in events:
                if rng.random() >= spec.distractor_rate:
                    continue
                length = _event_length(rng, spec.min_event_steps, min(spec.max_event_steps, t))
                start = int(rng.integers(0, t - length + 1))
                label = int(rng.integers(c))
                modality = "audio" if rng.random() < 0.5 else "visual"
                if modality == "audio":
                    audio[start:start + length] += sig_a[label]
                else:
                    visual[start:start + length] += sig_v[label]
                extra.append((start, start + length, label, modality))
            if spec.noise_sigma > 0:
                audio += rng.standard_normal(audio.shape) * spec.noise_sigma
                visual += rng.standard_normal(visual.shape) * spec.noise_sigma
            features[vid] = (audio.astype(np.float32), visual.astype(np.float32))
            distractors[vid] = extra
            videos.append(AnnotatedVideo(
                id=vid,
                duration_s=round(t * spec.hop_s, 6),
                subset=subset,
                events=[EventInstance(round(s * spec.hop_s, 6), round(e * spec.hop_s, 6), label)
                        for s, e, label in events],
            ))
    return SyntheticCorpus(DatasetIndex(taxonomy, videos), features, sig_a, sig_v, distractors, spec.hop_s)


def write_corpus(corpus, out_dir, spec=None):
    """Write annotations.json and features/<modality>/<id>.davf under out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpus.index.save(out / "annotations.json")
    for vid in sorted(corpus.features):
        audio, visual = corpus.features[vid]
        write_feature_file(feature_path(out / "features", "audio", vid), audio, corpus.hop_s)
        write_feature_file(feature_path(out / "features", "visual", vid), visual, corpus.hop_s)
    if spec is not None:
        (out / "synthetic_spec.json").write_text(json.dumps(asdict(spec), indent=1, sort_keys=True) + "\n")
    return out

"""Annotation schema: taxonomy, events, videos and the validated index."""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import OrderingError, UniquenessError, ValidationError

SUBSETS = ("train", "val", "test", "unassigned")
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class EventInstance:
    start_s: float
    end_s: float
    label_id: int

    @property
    def duration_s(self):
        return self.end_s - self.start_s


@dataclass
class AnnotatedVideo:
    id: str
    duration_s: float
    subset: str = "unassigned"
    events: list = field(default_factory=list)

    def labels(self):
        return sorted({e.label_id for e in self.events})


@dataclass(frozen=True)
class Taxonomy:
    names: tuple

    @classmethod
    def from_names(cls, names):
        return cls(tuple(names))

    @property
    def num_classes(self):
        return len(self.names)

    def __len__(self):
        return len(self.names)

    def __contains__(self, label_id):
        return isinstance(label_id, int) and 0 <= label_id < len(self.names)

    def name(self, label_id):
        return self.names[label_id]

    def to_json(self):
        return [{"id": i, "name": n} for i, n in enumerate(self.names)]


class DatasetIndex:
    """Validated videos keyed by id, iterated in sorted-id order."""

    def __init__(self, taxonomy, videos):
        self.taxonomy = taxonomy
        self.videos = {}
        for v in videos:
            if v.id in self.videos:
                raise UniquenessError("duplicate video id", video_id=v.id, field="id")
            self.videos[v.id] = v

    def __len__(self):
        return len(self.videos)

    def __iter__(self):
        return (self.videos[k] for k in sorted(self.videos))

    def __getitem__(self, video_id):
        return self.videos[video_id]

    def __contains__(self, video_id):
        return video_id in self.videos

    def ids(self, subset=None):
        return [v.id for v in self if subset is None or v.subset == subset]

    def subset(self, name):
        return DatasetIndex(self.taxonomy, [v for v in self if v.subset == name])

    def to_json(self):
        return {
            "version": SCHEMA_VERSION,
            "taxonomy": self.taxonomy.to_json(),
            "videos": [
                {
                    "id": v.id,
                    "duration_s": v.duration_s,
                    "subset": v.subset,
                    "events": [
                        {"label_id": e.label_id, "start_s": e.start_s, "end_s": e.end_s}
                        for e in v.events
                    ],
                }
                for v in self
            ],
        }

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n")


def _require(obj, key, kind, video_id=None):
    if not isinstance(obj, dict) or key not in obj:
        raise ValidationError("missing required field", video_id=video_id, field=key)
    value = obj[key]
    if kind is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        if ok and not math.isfinite(value):
            raise ValidationError("must be finite", video_id=video_id, field=key)
    elif kind is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    else:
        ok = isinstance(value, kind)
    if not ok:
        raise ValidationError(f"expected {kind.__name__}, got {type(value).__name__}", video_id=video_id, field=key)
    return value


def _parse_taxonomy(raw):
    if not isinstance(raw, list) or not raw:
        raise ValidationError("taxonomy must be a non-empty list", field="taxonomy")
    by_id = {}
    for entry in raw:
        label_id = _require(entry, "id", int)
        name = _require(entry, "name", str)
        if label_id in by_id:
            raise UniquenessError(f"duplicate taxonomy id {label_id}", field="taxonomy")
        by_id[label_id] = name
    if sorted(by_id) != list(range(len(by_id))):
        raise ValidationError("taxonomy ids must be dense 0..C-1", field="taxonomy")
    return Taxonomy(tuple(by_id[i] for i in range(len(by_id))))


def parse_annotations(doc):
    """Validate an annotation document (already JSON-decoded)."""
    if not isinstance(doc, dict):
        raise ValidationError("annotation root must be an object")
    version = _require(doc, "version", int)
    if version != SCHEMA_VERSION:
        raise ValidationError(f"unsupported version {version}", field="version")
    taxonomy = _parse_taxonomy(doc.get("taxonomy"))
    raw_videos = _require(doc, "videos", list)

    videos = []
    seen = set()
    for raw in raw_videos:
        vid = _require(raw, "id", str)
        if vid in seen:
            raise UniquenessError("duplicate video id", video_id=vid, field="id")
        seen.add(vid)
        duration = float(_require(raw, "duration_s", float, vid))
        if duration <= 0:
            raise ValidationError("duration must be positive", video_id=vid, field="duration_s")
        subset = raw.get("subset", "unassigned")
        if subset not in SUBSETS:
            raise ValidationError(f"subset must be one of {SUBSETS}", video_id=vid, field="subset")
        events = []
        for ev in _require(raw, "events", list, vid):
            label = _require(ev, "label_id", int, vid)
            start = float(_require(ev, "start_s", float, vid))
            end = float(_require(ev, "end_s", float, vid))
            if label not in taxonomy:
                raise ValidationError(f"label {label} not in taxonomy", video_id=vid, field="label_id")
            if start >= end:
                raise OrderingError(f"start_s {start} >= end_s {end}", video_id=vid, field="start_s")
            if start < 0:
                raise ValidationError(f"start_s {start} < 0", video_id=vid, field="start_s")
            if end > duration + 1e-6:
                raise ValidationError(f"end_s {end} > duration_s {duration}", video_id=vid, field="end_s")
            events.append(EventInstance(start, end, label))
        videos.append(AnnotatedVideo(vid, duration, subset, events))
    return DatasetIndex(taxonomy, videos)


def load_and_validate(path):
    """Read and validate an annotation JSON file into a DatasetIndex."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from None
    return parse_annotations(doc)

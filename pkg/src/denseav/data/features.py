"""Per-video feature files and fixed-length padding.

A DAVF file holds one modality of one video: b"DAVF", u32 version (1),
u32 T, u32 D, f32 hop_s, f32 offset_s, then T*D little-endian float32 values
in row-major order. Files live at ``<dir>/<modality>/<video_id>.davf``.
"""

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..errors import AlignmentError, FeatureFormatError

MAGIC = b"DAVF"
VERSION = 1
_HEADER = struct.Struct("<4sIIIff")
MODALITIES = ("audio", "visual")


@dataclass
class FeatureStreams:
    audio: np.ndarray
    visual: np.ndarray
    hop_s: float
    valid_len: int
    mask: np.ndarray
    offset_s: float = 0.0

    @property
    def length(self):
        return self.audio.shape[0]

    def step_centers(self):
        """Timestamp of each step's center: offset + (i + 0.5) * hop."""
        return self.offset_s + (np.arange(self.length) + 0.5) * self.hop_s


def feature_path(feature_dir, modality, video_id):
    return Path(feature_dir) / modality / f"{video_id}.davf"


def write_feature_file(path, array, hop_s, offset_s=0.0):
    array = np.ascontiguousarray(array, dtype="<f4")
    if array.ndim != 2:
        raise FeatureFormatError(f"feature array must be 2-D, got {array.shape}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, array.shape[0], array.shape[1], hop_s, offset_s))
        fh.write(array.tobytes())


def read_feature_file(path):
    """Return (array T x D float32, hop_s, offset_s)."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FeatureFormatError(f"{path}: file shorter than header")
    magic, version, t, d, hop, offset = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FeatureFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FeatureFormatError(f"{path}: unsupported version {version}")
    if not hop > 0:
        raise FeatureFormatError(f"{path}: hop_s must be positive, got {hop}")
    expected = _HEADER.size + 4 * t * d
    if len(raw) != expected:
        raise FeatureFormatError(f"{path}: payload size {len(raw)} != {expected} for T={t}, D={d}")
    data = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(t, d).astype(np.float32)
    return data, float(hop), float(offset)


def load_features(video_id, feature_dir, max_length_diff=0):
    """Load both modalities of one video as unpadded, temporally aligned streams.

    The two streams must share hop and offset. Lengths may differ by at most
    ``max_length_diff`` steps, in which case the longer one is trimmed.
    """
    audio, hop_a, off_a = read_feature_file(feature_path(feature_dir, "audio", video_id))
    visual, hop_v, off_v = read_feature_file(feature_path(feature_dir, "visual", video_id))
    if abs(hop_a - hop_v) > 1e-6 or abs(off_a - off_v) > 1e-6:
        raise AlignmentError(
            f"{video_id}: audio (hop {hop_a}, offset {off_a}) and visual "
            f"(hop {hop_v}, offset {off_v}) grids differ"
        )
    if abs(len(audio) - len(visual)) > max_length_diff:
        raise AlignmentError(f"{video_id}: audio has {len(audio)} steps, visual has {len(visual)}")
    t = min(len(audio), len(visual))
    return FeatureStreams(
        audio=audio[:t],
        visual=visual[:t],
        hop_s=hop_a,
        valid_len=t,
        mask=np.ones(t, dtype=np.float32),
        offset_s=off_a,
    )


def pad_and_mask(streams, t_max, crop="head", rng=None):
    """Zero-pad or crop both streams to exactly ``t_max`` steps.

    Cropping keeps the head by default; ``crop="random"`` picks a random
    window (training augmentation) and shifts ``offset_s`` to match.
    """
    if t_max < 1:
        raise ValueError("t_max must be >= 1")
    t = streams.valid_len
    audio, visual, offset = streams.audio[:t], streams.visual[:t], streams.offset_s
    if t > t_max:
        start = 0
        if crop == "random":
            if rng is None:
                raise ValueError("random cropping needs an rng")
            start = int(rng.integers(0, t - t_max + 1))
        elif crop != "head":
            raise ValueError(f"unknown crop policy {crop!r}")
        audio = audio[start:start + t_max]
        visual = visual[start:start + t_max]
        offset = offset + start * streams.hop_s
        t = t_max
    mask = np.zeros(t_max, dtype=np.float32)
    mask[:t] = 1.0

    def pad(x):
        out = np.zeros((t_max, x.shape[1]), dtype=np.float32)
        out[:t] = x
        return out

    return replace(streams, audio=pad(audio), visual=pad(visual), valid_len=t, mask=mask, offset_s=offset)

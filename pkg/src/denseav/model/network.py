"""End-to-end forward pass, parameter initialization and checkpoints."""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import InvalidShapeError
from ..numerics import ParamStore, ops, read_tensors, seeded_rng, write_tensors
from .config import ModelConfig
from .dependency import init_dependency, model_dependencies
from .encoder import cross_modal_pyramid, encode_unimodal, init_encoder, project_inputs
from .heads import heads_forward, init_heads


@dataclass
class RawPredictions:
    """Per-level outputs for a batch.

    probs[l] is (B, T_l, C) in [0, 1]; distances[l] is (B, 2, C, T_l) >= 0 in
    units of level-l steps (start distance first); masks[l] is (B, T_l);
    strides[l] = 2 ** l base steps per level step.
    """

    probs: list
    distances: list
    masks: list
    strides: list

    @property
    def num_levels(self):
        return len(self.probs)


def init_params(cfg, seed=0, dtype=np.float32):
    rng = seeded_rng(seed)
    store = ParamStore(dtype)
    init_encoder(store, cfg, rng)
    if cfg.use_dependency:
        init_dependency(store, cfg, rng)
    init_heads(store, cfg, rng)
    return store


def forward(store, cfg, audio, visual, mask):
    """audio (B, T, D_a), visual (B, T, D_v), mask (B, T) -> RawPredictions."""
    audio = ops.as_tensor(np.asarray(audio, dtype=store.dtype))
    visual = ops.as_tensor(np.asarray(visual, dtype=store.dtype))
    mask = np.asarray(mask, dtype=store.dtype)
    if audio.shape[-1] != cfg.audio_dim or visual.shape[-1] != cfg.visual_dim:
        raise InvalidShapeError(
            "forward",
            f"feature dims audio={audio.shape[-1]}, visual={visual.shape[-1]} "
            f"!= configured {cfg.audio_dim}, {cfg.visual_dim}",
        )
    if audio.shape[:2] != visual.shape[:2] or mask.shape != audio.shape[:2]:
        raise InvalidShapeError("forward", f"audio {audio.shape}, visual {visual.shape}, mask {mask.shape} misaligned")
    if cfg.modality == "audio":
        visual = ops.as_tensor(np.zeros_like(visual.data))
    elif cfg.modality == "visual":
        audio = ops.as_tensor(np.zeros_like(audio.data))

    f_v, f_a = project_inputs(store, cfg, audio, visual, mask)
    f_v = encode_unimodal(store, cfg, f_v, mask, "visual")
    f_a = encode_unimodal(store, cfg, f_a, mask, "audio")
    pyramid, masks = cross_modal_pyramid(store, cfg, f_v, f_a, mask)
    if cfg.use_dependency:
        pyramid = [model_dependencies(store, cfg, z, m) for z, m in zip(pyramid, masks)]
    probs, dists = heads_forward(store, cfg, pyramid, masks)
    return RawPredictions(probs, dists, masks, cfg.level_strides())


def batch_streams(streams):
    """Stack padded FeatureStreams into (audio, visual, mask) batch arrays."""
    audio = np.stack([s.audio for s in streams])
    visual = np.stack([s.visual for s in streams])
    mask = np.stack([s.mask for s in streams])
    return audio, visual, mask


def forward_streams(store, cfg, streams):
    return forward(store, cfg, *batch_streams(streams))


def save_checkpoint(path, store, cfg, extra=None):
    """Write <path> (DAVT tensors) and <path>.json (model config sidecar)."""
    path = Path(path)
    write_tensors(path, store.state_dict())
    sidecar = {"model": cfg.to_dict()}
    if extra:
        sidecar.update(extra)
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=1, sort_keys=True) + "\n")


def load_checkpoint(path, dtype=np.float32):
    path = Path(path)
    sidecar = json.loads(Path(str(path) + ".json").read_text())
    cfg = ModelConfig.from_dict(sidecar["model"])
    store = init_params(cfg, seed=0, dtype=dtype)
    store.load_state_dict(read_tensors(path))
    return store, cfg, sidecar

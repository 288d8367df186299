"""
Ablation switches and what they cost in parameters
==================================================
"""

# %%
from denseav.model import ModelConfig, init_params

base = dict(audio_dim=16, visual_dim=16, num_classes=6, embed_dim=64, unimodal_layers=1, pyramid_levels=4,
            hidden_classes=8, dependency_dim=16, max_len=64)
ref = init_params(ModelConfig(**base)).num_params()
print("base", ref)

variants = {
    "unimodal_layers=2": dict(unimodal_layers=2),
    "pyramid_levels=5": dict(pyramid_levels=5),
    "no dependency module": dict(use_dependency=False),
    "class-agnostic regression": dict(class_aware_regression=False),
    "no positional encoding": dict(use_positional=False),
}
for name, flags in variants.items():
    n = init_params(ModelConfig(**{**base, **flags})).num_params()
    print(f"{name:28s} {n - ref:+d}")

from dataclasses import asdict, dataclass, fields

from ..errors import ValidationError

MODALITIES = ("av", "audio", "visual")


@dataclass
class ModelConfig:
    """Architecture hyperparameters.

    Defaults are the full-size setting (D=512, H=128, C'=100, 4 heads,
    L_s=2, L_c=6, T=224); the flags switch individual components off for
    ablations without touching anything else.
    """

    audio_dim: int = 128
    visual_dim: int = 2048
    num_classes: int = 100
    embed_dim: int = 512
    unimodal_layers: int = 2
    pyramid_levels: int = 6
    num_heads: int = 4
    hidden_classes: int = 100
    dependency_dim: int = 128
    dependency_heads: int = 4
    ffn_ratio: int = 4
    max_len: int = 224
    kernel_size: int = 3
    head_dim: int = 0  # 0 -> embed_dim
    cls_prior_prob: float = 0.01
    use_positional: bool = True
    use_dependency: bool = True
    simultaneous_branch: bool = True
    consecutive_branch: bool = True
    class_aware_regression: bool = True
    # "audio" / "visual" zero the other stream at the input
    modality: str = "av"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.embed_dim % self.num_heads:
            raise ValidationError("embed_dim must be divisible by num_heads", field="embed_dim")
        if self.dependency_dim % self.dependency_heads:
            raise ValidationError("dependency_dim must be divisible by dependency_heads", field="dependency_dim")
        if self.pyramid_levels < 1:
            raise ValidationError("pyramid_levels must be >= 1", field="pyramid_levels")
        if self.unimodal_layers < 0:
            raise ValidationError("unimodal_layers must be >= 0", field="unimodal_layers")
        if self.hidden_classes < 1:
            raise ValidationError("hidden_classes must be >= 1", field="hidden_classes")
        if self.num_classes < 1:
            raise ValidationError("num_classes must be >= 1", field="num_classes")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValidationError("kernel_size must be odd and positive", field="kernel_size")
        if self.modality not in MODALITIES:
            raise ValidationError(f"modality must be one of {MODALITIES}", field="modality")
        if not 0.0 < self.cls_prior_prob < 1.0:
            raise ValidationError("cls_prior_prob must lie in (0, 1)", field="cls_prior_prob")
        return self

    @property
    def head_width(self):
        return self.head_dim or self.embed_dim

    def level_lengths(self, t=None):
        """T_1 = T, T_l = ceil(T_{l-1} / 2)."""
        t = self.max_len if t is None else t
        out = [t]
        for _ in range(self.pyramid_levels - 1):
            out.append(-(-out[-1] // 2))
        return out

    def level_strides(self):
        return [2 ** l for l in range(self.pyramid_levels)]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown model config keys {sorted(unknown)}")
        return cls(**d)

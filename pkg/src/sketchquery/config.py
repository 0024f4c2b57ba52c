"""Configuration dataclasses for model, augmentation, and training."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path


@dataclass(frozen=True)
class ModelConfig:
    """All architecture and loss hyperparameters.

    Defaults are desk-scale: 64x64 images with 8px patches, 128-dim shared
    embedding space, 2-block encoders. The caption decoder keeps depth 6 /
    heads 8. Loss weights follow the 10/1/100 ratio for classification,
    caption generation, and the contrastive term.
    """

    embed_dim: int = 128
    image_size: int = 64
    patch_size: int = 8
    vocab_size: int = 64
    max_caption_len: int = 32
    num_labels: int = 12

    encoder_width: int = 128
    encoder_depth: int = 2
    encoder_heads: int = 4

    decoder_width: int = 128
    decoder_depth: int = 6
    decoder_heads: int = 8

    classifier_hidden: int = 128

    # Contrastive temperature: learnable, parameterized as a log inverse
    # temperature with the inverse clamped to [1e-3, 100].
    temperature_init: float = 0.07

    w_class: float = 10.0
    w_caption: float = 1.0
    w_embed: float = 100.0

    asl_gamma_pos: float = 0.0
    asl_gamma_neg: float = 4.0
    asl_margin: float = 0.05

    # Stroke width (px) used when rasterizing sketches; unstated upstream,
    # exposed as config.
    stroke_width: int = 2

    def __post_init__(self):
        if self.image_size % self.patch_size != 0:
            raise ValueError("image_size must be divisible by patch_size")
        if self.encoder_width % self.encoder_heads != 0:
            raise ValueError("encoder_width must be divisible by encoder_heads")
        if self.decoder_width % self.decoder_heads != 0:
            raise ValueError("decoder_width must be divisible by decoder_heads")
        for name in ("embed_dim", "image_size", "patch_size", "vocab_size",
                     "max_caption_len", "num_labels", "encoder_width",
                     "encoder_depth", "encoder_heads", "decoder_width",
                     "decoder_depth", "decoder_heads", "classifier_hidden"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not (0 < self.temperature_init):
            raise ValueError("temperature_init must be positive")

    @property
    def num_patches(self) -> int:
        return (self.image_size // self.patch_size) ** 2

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass(frozen=True)
class AugmentConfig:
    """Sketch/image augmentation ranges.

    Affine ranges are unstated upstream; these are the documented defaults.
    Sketch completeness during training is drawn uniformly from
    ``completeness_range``; either query modality is dropped with
    probability ``query_dropout_p``.
    """

    enabled: bool = True
    rotation_deg: float = 10.0
    translate_frac: float = 0.1
    scale_min: float = 0.9
    scale_max: float = 1.1
    shear_deg: float = 5.0
    completeness_min: float = 0.6
    completeness_max: float = 1.0
    query_dropout_p: float = 0.2

    def __post_init__(self):
        if not (0.0 <= self.query_dropout_p <= 1.0):
            raise ValueError("query_dropout_p must be in [0, 1]")
        if not (0.0 < self.completeness_min <= self.completeness_max <= 1.0):
            raise ValueError("completeness range must satisfy 0 < min <= max <= 1")
        if self.scale_min <= 0 or self.scale_max < self.scale_min:
            raise ValueError("invalid scale range")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

    @classmethod
    def disabled(cls) -> "AugmentConfig":
        return cls(enabled=False, query_dropout_p=0.0)


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings.

    ``lr`` defaults to the fine-tuning rate 1e-5; desk-scale runs from
    random init pass a larger rate explicitly. The classifier warm-up
    starts at ``warmup_lr`` and drops to ``warmup_lr_final`` after
    ``warmup_lr_drop_step`` steps. ``ablation_epochs``/``full_epochs``
    record the reference schedule for full-scale runs; desk-scale tests
    use explicit ``steps``.
    """

    batch_size: int = 32
    lr: float = 1e-5
    steps: int = 1000
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    checkpoint_every: int = 500
    log_every: int = 1

    warmup_lr: float = 1e-4
    warmup_lr_final: float = 1e-5
    warmup_lr_drop_step: int = 100

    ablation_epochs: int = 10
    full_epochs: int = 50

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


def load_config_file(path: str | Path) -> dict:
    """Load a JSON or TOML config file into a plain dict.

    Expected top-level keys: ``model``, ``augment``, ``train`` (all
    optional); unknown keys are ignored by the ``from_dict`` constructors.
    """
    path = Path(path)
    if path.suffix == ".json":
        return json.loads(path.read_text())
    if path.suffix == ".toml":
        try:
            import tomllib
        except ImportError:
            import tomli as tomllib
        return tomllib.loads(path.read_text())
    raise ValueError(f"unsupported config format: {path.suffix}")

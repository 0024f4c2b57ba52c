"""Sketch+text image retrieval: shared-weight dual encoders, three-term
training objective, synthetic sketch generation, and exact top-k search."""

from .config import AugmentConfig, ModelConfig, TrainConfig
from .core import (Embedding, LabelSet, RasterImage, Stroke, StrokeSketch,
                   TokenSequence, TrainingTuple, normalize, rasterize)
from .encoders import (CombinationMode, SketchTextModel, build_model,
                       combine_query, encode_image, encode_sketch,
                       encode_text)

__version__ = "0.1.0"

__all__ = [
    "AugmentConfig", "ModelConfig", "TrainConfig",
    "Embedding", "LabelSet", "RasterImage", "Stroke", "StrokeSketch",
    "TokenSequence", "TrainingTuple", "normalize", "rasterize",
    "CombinationMode", "SketchTextModel", "build_model", "combine_query",
    "encode_image", "encode_sketch", "encode_text",
]

"""The three encoders and the classifier head.

One ``VisionTransformer`` instance serves both images and sketches:
sketch encoding is *defined* as rasterize-then-encode with the shared
parameters, so the weight-sharing invariant is structural. The text
encoder is an independent causal transformer pooled at the first EOS
position, which makes the embedding invariant to trailing padding by
construction.
"""

from __future__ import annotations

import enum
import math

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .config import ModelConfig
from .core import (EOS_ID, PAD_ID, DegenerateEmbeddingError, Embedding,
                   RasterImage, StrokeSketch, TokenSequence, rasterize)


class CombinationMode(enum.Enum):
    """How sketch and text embeddings merge into one query."""

    SUM = "sum"
    MAX = "max"
    CONCAT_PROJECT = "concat"

    @classmethod
    def parse(cls, name: str) -> "CombinationMode":
        for mode in cls:
            if mode.value == name.lower():
                return mode
        raise ValueError(f"unknown combination mode: {name!r}")


def _l2norm(x: torch.Tensor) -> torch.Tensor:
    norms = x.norm(dim=-1, keepdim=True)
    finite_and_positive = bool(torch.isfinite(norms.detach()).all()
                               and (norms.detach() > 1e-12).all())
    if not finite_and_positive:
        raise DegenerateEmbeddingError("zero or non-finite norm cannot be normalized")
    return x / norms


class SelfAttention(nn.Module):
    def __init__(self, width: int, heads: int, causal: bool = False):
        super().__init__()
        self.heads = heads
        self.head_dim = width // heads
        self.causal = causal
        self.qkv = nn.Linear(width, 3 * width)
        self.proj = nn.Linear(width, width)

    def forward(self, x):
        b, n, w = x.shape
        qkv = self.qkv(x).reshape(b, n, 3, self.heads, self.head_dim)
        q, k, v = qkv.permute(2, 0, 3, 1, 4)  # each: b, heads, n, hd
        attn = (q @ k.transpose(-2, -1)) / math.sqrt(self.head_dim)
        if self.causal:
            mask = torch.triu(torch.ones(n, n, dtype=torch.bool,
                                         device=x.device), diagonal=1)
            attn = attn.masked_fill(mask, float("-inf"))
        attn = attn.softmax(dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, n, w)
        return self.proj(out)


class TransformerBlock(nn.Module):
    """Pre-LN block: x + attn(ln(x)); x + mlp(ln(x))."""

    def __init__(self, width: int, heads: int, causal: bool = False):
        super().__init__()
        self.ln1 = nn.LayerNorm(width)
        self.attn = SelfAttention(width, heads, causal=causal)
        self.ln2 = nn.LayerNorm(width)
        self.mlp = nn.Sequential(nn.Linear(width, 4 * width), nn.GELU(),
                                 nn.Linear(4 * width, width))

    def forward(self, x):
        x = x + self.attn(self.ln1(x))
        x = x + self.mlp(self.ln2(x))
        return x


class VisionTransformer(nn.Module):
    """Patchify -> CLS + positional embeddings -> blocks -> project -> unit norm."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.patch_size = config.patch_size
        self.image_size = config.image_size
        width = config.encoder_width
        patch_dim = 3 * config.patch_size ** 2
        self.patch_embed = nn.Linear(patch_dim, width)
        self.cls_token = nn.Parameter(torch.zeros(1, 1, width))
        self.pos_embed = nn.Parameter(torch.zeros(1, config.num_patches + 1, width))
        self.blocks = nn.ModuleList(
            TransformerBlock(width, config.encoder_heads)
            for _ in range(config.encoder_depth))
        self.ln_final = nn.LayerNorm(width)
        self.out_proj = nn.Linear(width, config.embed_dim, bias=False)
        nn.init.normal_(self.cls_token, std=0.02)
        nn.init.normal_(self.pos_embed, std=0.02)

    def patchify(self, images: torch.Tensor) -> torch.Tensor:
        b, c, h, w = images.shape
        if h != self.image_size or w != self.image_size or c != 3:
            raise ValueError(
                f"expected 3x{self.image_size}x{self.image_size} images, got {c}x{h}x{w}")
        p = self.patch_size
        x = images.reshape(b, c, h // p, p, w // p, p)
        x = x.permute(0, 2, 4, 1, 3, 5).reshape(b, (h // p) * (w // p), c * p * p)
        return x

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        x = self.patch_embed(self.patchify(images))
        cls = self.cls_token.expand(x.shape[0], -1, -1)
        x = torch.cat([cls, x], dim=1) + self.pos_embed
        for block in self.blocks:
            x = block(x)
        x = self.ln_final(x[:, 0])
        return _l2norm(self.out_proj(x))


class TextTransformer(nn.Module):
    """Causal transformer over token ids, pooled at the first EOS."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        width = config.encoder_width
        self.vocab_size = config.vocab_size
        self.max_len = config.max_caption_len
        self.token_embed = nn.Embedding(config.vocab_size, width)
        self.pos_embed = nn.Parameter(torch.zeros(1, config.max_caption_len, width))
        self.blocks = nn.ModuleList(
            TransformerBlock(width, config.encoder_heads, causal=True)
            for _ in range(config.encoder_depth))
        self.ln_final = nn.LayerNorm(width)
        self.out_proj = nn.Linear(width, config.embed_dim, bias=False)
        nn.init.normal_(self.token_embed.weight, std=0.02)
        nn.init.normal_(self.pos_embed, std=0.02)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        if tokens.max() >= self.vocab_size or tokens.min() < 0:
            raise ValueError("token id out of vocabulary range")
        b, n = tokens.shape
        if n > self.max_len:
            raise ValueError(f"sequence length {n} exceeds max {self.max_len}")
        x = self.token_embed(tokens) + self.pos_embed[:, :n]
        for block in self.blocks:
            x = block(x)
        # causal masking means positions after the pooled EOS cannot leak in
        pool_idx = _first_eos_index(tokens)
        x = self.ln_final(x[torch.arange(b, device=x.device), pool_idx])
        return _l2norm(self.out_proj(x))


def _first_eos_index(tokens: torch.Tensor) -> torch.Tensor:
    is_eos = tokens == EOS_ID
    has_eos = is_eos.any(dim=1)
    first = torch.where(has_eos, is_eos.int().argmax(dim=1),
                        torch.full_like(tokens[:, 0], tokens.shape[1] - 1))
    return first


class ClassifierHead(nn.Module):
    """Two affine layers with a ReLU between; emits raw logits."""

    def __init__(self, embed_dim: int, hidden: int, num_labels: int):
        super().__init__()
        self.fc1 = nn.Linear(embed_dim, hidden)
        self.fc2 = nn.Linear(hidden, num_labels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(F.relu(self.fc1(x)))


def combine_embeddings(s: torch.Tensor, t: torch.Tensor,
                       mode: CombinationMode,
                       projection: nn.Linear | None = None) -> torch.Tensor:
    """Merge unit-norm sketch/text rows into unit-norm query rows."""
    if s.shape != t.shape:
        raise ValueError("sketch/text embedding shapes differ")
    if mode is CombinationMode.SUM:
        return _l2norm(s + t)
    if mode is CombinationMode.MAX:
        return _l2norm(torch.maximum(s, t))
    if mode is CombinationMode.CONCAT_PROJECT:
        if projection is None:
            raise ValueError("CONCAT_PROJECT requires the projection layer")
        return _l2norm(projection(torch.cat([s, t], dim=-1)))
    raise ValueError(f"unhandled mode {mode}")


class SketchTextModel(nn.Module):
    """The full model: shared visual tower, text tower, query combiner,
    classifier head, caption decoder, and the learnable contrastive
    temperature (inverse clamped to [1e-3, 100])."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        from .captioner import CaptionDecoder  # avoid module cycle
        self.config = config
        self.visual = VisionTransformer(config)
        self.text = TextTransformer(config)
        self.concat_proj = nn.Linear(2 * config.embed_dim, config.embed_dim,
                                     bias=False)
        self.classifier = ClassifierHead(config.embed_dim,
                                         config.classifier_hidden,
                                         config.num_labels)
        self.decoder = CaptionDecoder(config)
        self.log_scale = nn.Parameter(
            torch.tensor(math.log(1.0 / config.temperature_init)))
        with torch.no_grad():
            eye = torch.eye(config.embed_dim)
            # [I, I]/2 makes CONCAT_PROJECT coincide with SUM at init
            self.concat_proj.weight.copy_(torch.cat([eye, eye], dim=1) / 2.0)

    def temperature(self) -> torch.Tensor:
        return 1.0 / torch.exp(self.log_scale).clamp(1e-3, 100.0)

    def encode_image_batch(self, images: torch.Tensor) -> torch.Tensor:
        return self.visual(images)

    def encode_text_batch(self, tokens: torch.Tensor) -> torch.Tensor:
        return self.text(tokens)

    def combine(self, s: torch.Tensor, t: torch.Tensor,
                mode: CombinationMode) -> torch.Tensor:
        return combine_embeddings(s, t, mode, projection=self.concat_proj)


def build_model(config: ModelConfig, seed: int = 0,
                dtype: torch.dtype = torch.float32) -> SketchTextModel:
    """Deterministically initialize a model for a given seed."""
    torch.manual_seed(seed)
    model = SketchTextModel(config)
    return model.to(dtype)


# ---------------------------------------------------------------------------
# Single-item functional wrappers over the domain types
# ---------------------------------------------------------------------------

def _images_to_tensor(images: list[RasterImage], like: nn.Module) -> torch.Tensor:
    dtype = next(like.parameters()).dtype
    arr = np.stack([im.pixels for im in images])
    return torch.from_numpy(arr).to(dtype).permute(0, 3, 1, 2)


def encode_image(img: RasterImage, model: SketchTextModel) -> Embedding:
    with torch.no_grad():
        out = model.visual(_images_to_tensor([img], model.visual))
    return Embedding(values=out[0].numpy().astype(np.float64), normalized=True)


def encode_sketch(sketch: StrokeSketch, model: SketchTextModel) -> Embedding:
    """Defined as encode_image(rasterize(sketch)) with the shared visual
    parameters, bit-identical to the image path on equal rasters."""
    raster = rasterize(sketch, model.config.image_size,
                       model.config.stroke_width)
    return encode_image(raster, model)


def encode_text(seq: TokenSequence, model: SketchTextModel) -> Embedding:
    tokens = torch.tensor([list(seq.tokens)], dtype=torch.long)
    with torch.no_grad():
        out = model.text(tokens)
    return Embedding(values=out[0].numpy().astype(np.float64), normalized=True)


def combine_query(s: Embedding, t: Embedding, mode: CombinationMode,
                  model: SketchTextModel | None = None) -> Embedding:
    """Combine two unit-norm embeddings; CONCAT_PROJECT needs the model's
    projection. SUM of exactly antipodal inputs raises."""
    if not (s.normalized and t.normalized):
        raise ValueError("combine_query expects normalized embeddings")
    dtype = (next(model.parameters()).dtype if model is not None
             else torch.float64)
    st = torch.from_numpy(s.values).to(dtype).unsqueeze(0)
    tt = torch.from_numpy(t.values).to(dtype).unsqueeze(0)
    proj = model.concat_proj if model is not None else None
    with torch.no_grad():
        out = combine_embeddings(st, tt, mode, projection=proj)
    return Embedding(values=out[0].numpy().astype(np.float64), normalized=True)


def classify(e: Embedding, head: ClassifierHead) -> np.ndarray:
    dtype = next(head.parameters()).dtype
    x = torch.from_numpy(e.values).to(dtype).unsqueeze(0)
    with torch.no_grad():
        return head(x)[0].numpy()

"""Autoregressive caption decoder conditioned on an embedding.

Decoder-only architecture: causal self-attention blocks with absolute
positional embeddings. The conditioning embedding is injected as a prefix
token at raw position 0, so logit row t depends on the condition and on
target tokens <= t, and predicts token t+1.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .config import ModelConfig
from .core import BOS_ID, EOS_ID, Embedding, TokenSequence
from .encoders import TransformerBlock


class CaptionDecoder(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        width = config.decoder_width
        self.vocab_size = config.vocab_size
        self.max_len = config.max_caption_len
        self.token_embed = nn.Embedding(config.vocab_size, width)
        # +1 position for the conditioning prefix
        self.pos_embed = nn.Parameter(
            torch.zeros(1, config.max_caption_len + 1, width))
        self.cond_proj = nn.Linear(config.embed_dim, width)
        self.blocks = nn.ModuleList(
            TransformerBlock(width, config.decoder_heads, causal=True)
            for _ in range(config.decoder_depth))
        self.ln_final = nn.LayerNorm(width)
        self.out_proj = nn.Linear(width, config.vocab_size)
        nn.init.normal_(self.token_embed.weight, std=0.02)
        nn.init.normal_(self.pos_embed, std=0.02)

    def forward(self, cond: torch.Tensor, tokens: torch.Tensor) -> torch.Tensor:
        """cond: B x d, tokens: B x S -> logits: B x S x V.

        Logit row t is produced from [prefix, tokens[0..t]] and scores the
        token at position t+1.
        """
        b, s = tokens.shape
        if s > self.max_len:
            raise ValueError(f"sequence length {s} exceeds max {self.max_len}")
        if tokens.max() >= self.vocab_size or tokens.min() < 0:
            raise ValueError("token id out of vocabulary range")
        prefix = self.cond_proj(cond).unsqueeze(1)
        x = torch.cat([prefix, self.token_embed(tokens)], dim=1)
        x = x + self.pos_embed[:, :s + 1]
        for block in self.blocks:
            x = block(x)
        h = self.ln_final(x[:, 1:])  # raw position t+1 -> logit row t
        return self.out_proj(h)


def teacher_forced_logits(cond: Embedding, target: TokenSequence,
                          decoder: CaptionDecoder) -> np.ndarray:
    """Single-sequence wrapper; returns len(target) x V logits."""
    if target.tokens[0] != BOS_ID:
        raise ValueError("target must begin with BOS")
    dtype = next(decoder.parameters()).dtype
    cond_t = torch.from_numpy(cond.values).to(dtype).unsqueeze(0)
    tokens = torch.tensor([list(target.tokens)], dtype=torch.long)
    with torch.no_grad():
        logits = decoder(cond_t, tokens)
    return logits[0].numpy()


def generate_caption(cond: Embedding, decoder: CaptionDecoder,
                     max_len: int | None = None,
                     strategy: str = "greedy") -> TokenSequence:
    """Greedy argmax decoding from BOS until EOS or max_len tokens total.

    Deterministic; never emits tokens after EOS. EOS is forced when the
    length budget runs out.
    """
    if strategy != "greedy":
        raise ValueError("only greedy decoding is supported")
    max_len = decoder.max_len if max_len is None else max_len
    if max_len > decoder.max_len:
        raise ValueError("max_len exceeds the decoder maximum")
    if max_len < 2:
        raise ValueError("max_len must allow at least BOS and EOS")
    dtype = next(decoder.parameters()).dtype
    cond_t = torch.from_numpy(cond.values).to(dtype).unsqueeze(0)
    tokens = [BOS_ID]
    with torch.no_grad():
        while len(tokens) < max_len - 1:
            logits = decoder(cond_t, torch.tensor([tokens], dtype=torch.long))
            nxt = int(logits[0, -1].argmax())
            tokens.append(nxt)
            if nxt == EOS_ID:
                break
    if tokens[-1] != EOS_ID:
        tokens.append(EOS_ID)
    return TokenSequence(tuple(tokens))

"""The three training loss terms and their weighted combination.

All losses reduce by mean so magnitudes are batch-size invariant, and all
log arguments are clamped at EPS = 1e-8 so tests can use exact
expectations above the clamp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .config import ModelConfig
from .core import PAD_ID

EPS = 1e-8
_NORM_TOL = 1e-4


@dataclass(frozen=True)
class LossBreakdown:
    l_e: float
    l_c: float
    l_d: float
    total: float

    def to_dict(self) -> dict:
        return {"l_e": self.l_e, "l_c": self.l_c, "l_d": self.l_d,
                "total": self.total}


def embedding_loss(queries: torch.Tensor, images: torch.Tensor,
                   temperature: float | torch.Tensor) -> torch.Tensor:
    """Symmetric cross entropy over the batch similarity matrix.

    Row i of ``queries`` must match row i of ``images``; both must be
    unit-norm. L = 1/2 [CE over rows + CE over columns] of QI^T / tau
    with diagonal targets.
    """
    if queries.ndim != 2 or images.ndim != 2 or queries.shape != images.shape:
        raise ValueError("queries and images must be matching N x d matrices")
    n = queries.shape[0]
    if n < 1:
        raise ValueError("batch must be non-empty")
    for name, mat in (("queries", queries), ("images", images)):
        norms = mat.detach().norm(dim=1)
        if not bool(((norms - 1.0).abs() < _NORM_TOL).all()):
            raise ValueError(f"{name} rows must be unit-norm")
    logits = queries @ images.T / temperature
    targets = torch.arange(n, device=logits.device)
    return 0.5 * (F.cross_entropy(logits, targets)
                  + F.cross_entropy(logits.T, targets))


def asl_loss(logits: torch.Tensor, targets: torch.Tensor,
             gamma_pos: float = 0.0, gamma_neg: float = 4.0,
             margin: float = 0.05) -> torch.Tensor:
    """Asymmetric multi-label loss, mean over all N*L entries.

    positive: (1-p)^g+ * -ln(p)
    negative: pm = max(p - m, 0); pm^g- * -ln(1 - pm)
    The margin zeroes out easy negatives entirely.
    """
    if logits.shape != targets.shape:
        raise ValueError("logits and targets shapes differ")
    if gamma_pos < 0 or gamma_neg < 0 or not (0.0 <= margin < 1.0):
        raise ValueError("need gamma_pos, gamma_neg >= 0 and margin in [0, 1)")
    p = torch.sigmoid(logits)
    pos = (1.0 - p) ** gamma_pos * -torch.log(p.clamp(min=EPS))
    p_m = (p - margin).clamp(min=0.0)
    neg = p_m ** gamma_neg * -torch.log((1.0 - p_m).clamp(min=EPS))
    loss = targets * pos + (1.0 - targets) * neg
    return loss.mean()


def caption_loss(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Teacher-forced next-token NLL, mean over unmasked positions.

    ``logits[:, t]`` scores the token at position t+1; positions whose
    target is PAD (everything past EOS) are masked out. Minimizes the
    negative log-likelihood of the ground-truth tokens.
    """
    if logits.ndim != 3 or targets.ndim != 2:
        raise ValueError("expected N x S x V logits and N x S targets")
    if logits.shape[:2] != targets.shape:
        raise ValueError("logits and targets disagree on N or S")
    next_tokens = targets[:, 1:]
    mask = next_tokens != PAD_ID
    if not bool(mask.any()):
        raise ValueError("no predictable positions (targets are BOS-only)")
    logp = F.log_softmax(logits[:, :-1], dim=-1)
    tok_logp = logp.gather(-1, next_tokens.clamp(min=0).unsqueeze(-1)).squeeze(-1)
    return -(tok_logp * mask).sum() / mask.sum()


def _scalar(x) -> float:
    return float(x.detach()) if isinstance(x, torch.Tensor) else float(x)


def total_loss(l_e, l_c, l_d, config: ModelConfig) -> LossBreakdown:
    """Weighted combination; NaN in any component aborts training."""
    vals = {"l_e": _scalar(l_e), "l_c": _scalar(l_c), "l_d": _scalar(l_d)}
    for name, v in vals.items():
        if math.isnan(v):
            raise FloatingPointError(f"{name} is NaN; aborting")
    total = (config.w_embed * vals["l_e"] + config.w_class * vals["l_c"]
             + config.w_caption * vals["l_d"])
    return LossBreakdown(l_e=vals["l_e"], l_c=vals["l_c"], l_d=vals["l_d"],
                         total=total)


def weighted_total(l_e: torch.Tensor, l_c: torch.Tensor, l_d: torch.Tensor,
                   config: ModelConfig) -> torch.Tensor:
    """Differentiable counterpart of ``total_loss`` for the training step."""
    return (config.w_embed * l_e + config.w_class * l_c
            + config.w_caption * l_d)

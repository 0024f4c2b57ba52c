"""Training loop, classifier warm-up, and evaluation modes.

Training is single-writer and deterministic given a seed (model init and
every batch draw derive from it). A NaN in any loss component aborts the
run with the last good checkpoint retained on disk.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .checkpoint import ModelBundle, save_checkpoint
from .config import AugmentConfig, ModelConfig, TrainConfig
from .core import DegenerateEmbeddingError, StrokeSketch, TokenSequence
from .data import Batch, DatasetManifest, Vocabulary, load_image, make_batch, record_sketch, tokenize
from .encoders import CombinationMode, SketchTextModel, build_model, combine_query, encode_sketch, encode_text
from .objectives import asl_loss, caption_loss, embedding_loss, total_loss, weighted_total
from . import retrieval as retrieval_mod


class TrainingAborted(RuntimeError):
    """Raised when a loss component goes NaN; the last checkpoint survives."""


@dataclass
class TrainResult:
    bundle: ModelBundle
    metrics: list[dict]
    checkpoint_path: Path | None


def _to_images_tensor(arr: np.ndarray, dtype) -> torch.Tensor:
    return torch.from_numpy(arr).to(dtype).permute(0, 3, 1, 2)


def compute_batch_losses(model: SketchTextModel, batch: Batch,
                         mode: CombinationMode):
    """Forward pass producing the three loss terms for one batch."""
    dtype = next(model.parameters()).dtype
    images = _to_images_tensor(batch.images, dtype)
    sketches = _to_images_tensor(batch.sketch_rasters, dtype)
    q_tokens = torch.from_numpy(batch.query_tokens)
    t_tokens = torch.from_numpy(batch.target_tokens)
    labels = torch.from_numpy(batch.labels).to(dtype)

    both = model.visual(torch.cat([images, sketches], dim=0))
    img_emb, sk_emb = both[:len(batch)], both[len(batch):]
    txt_emb = model.text(q_tokens)
    query = model.combine(sk_emb, txt_emb, mode)

    cfg = model.config
    l_e = embedding_loss(query, img_emb, model.temperature())
    l_c = 0.5 * (asl_loss(model.classifier(query), labels,
                          cfg.asl_gamma_pos, cfg.asl_gamma_neg, cfg.asl_margin)
                 + asl_loss(model.classifier(img_emb), labels,
                            cfg.asl_gamma_pos, cfg.asl_gamma_neg, cfg.asl_margin))
    # the decoder is conditioned on the image embedding and on the sketch
    # embedding, averaged
    l_d = 0.5 * (caption_loss(model.decoder(img_emb, t_tokens), t_tokens)
                 + caption_loss(model.decoder(sk_emb, t_tokens), t_tokens))
    return l_e, l_c, l_d


def train(manifest: DatasetManifest, vocab: Vocabulary,
          model_config: ModelConfig, train_config: TrainConfig,
          augment: AugmentConfig, seed: int,
          out_dir: str | Path | None = None,
          mode: CombinationMode = CombinationMode.SUM,
          model: SketchTextModel | None = None) -> TrainResult:
    """Optimize the full three-term objective over manifest batches."""
    if model is None:
        model = build_model(model_config, seed=seed)
    model.train()
    opt = torch.optim.Adam(model.parameters(), lr=train_config.lr,
                           betas=(train_config.adam_beta1, train_config.adam_beta2),
                           eps=train_config.adam_eps)
    out_dir = Path(out_dir) if out_dir is not None else None
    metrics_file = None
    ckpt_path = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        metrics_file = (out_dir / "metrics.jsonl").open("w")
        ckpt_path = out_dir / "checkpoint.sqckpt"

    metrics: list[dict] = []
    try:
        for step in range(train_config.steps):
            batch = make_batch(manifest, train_config.batch_size, vocab,
                               model_config, augment,
                               seed=seed * 1_000_003 + step)
            l_e, l_c, l_d = compute_batch_losses(model, batch, mode)
            breakdown = total_loss(l_e, l_c, l_d, model_config)  # NaN check
            loss = weighted_total(l_e, l_c, l_d, model_config)
            opt.zero_grad()
            loss.backward()
            opt.step()
            entry = {"step": step, **breakdown.to_dict(),
                     "lr": train_config.lr}
            metrics.append(entry)
            if metrics_file and step % train_config.log_every == 0:
                metrics_file.write(json.dumps(entry) + "\n")
            if ckpt_path and (step + 1) % train_config.checkpoint_every == 0:
                save_checkpoint(out_dir / f"ckpt-{step + 1:06d}.sqckpt",
                                model, vocab)
                save_checkpoint(ckpt_path, model, vocab)
    except (FloatingPointError, DegenerateEmbeddingError) as exc:
        # numerical collapse: stop here, last good checkpoint stays on disk
        if metrics_file:
            metrics_file.close()
        raise TrainingAborted(str(exc)) from exc
    if ckpt_path:
        save_checkpoint(ckpt_path, model, vocab)
    if metrics_file:
        metrics_file.close()
    model.eval()
    bundle = ModelBundle(model=model, vocab=vocab, config=model_config)
    return TrainResult(bundle=bundle, metrics=metrics, checkpoint_path=ckpt_path)


def warmup_classifier(manifest: DatasetManifest, vocab: Vocabulary,
                      model_config: ModelConfig, train_config: TrainConfig,
                      seed: int, steps: int = 500,
                      model: SketchTextModel | None = None) -> SketchTextModel:
    """Train only the classifier head on frozen encoder image embeddings.

    The learning rate starts at ``warmup_lr`` and is dropped to
    ``warmup_lr_final`` after ``warmup_lr_drop_step`` steps. Returns the
    model whose head now serves as the fine-tuning init; every non-head
    parameter is bit-identical to its initial value.
    """
    if model is None:
        model = build_model(model_config, seed=seed)
    for name, p in model.named_parameters():
        p.requires_grad = name.startswith("classifier.")
    head_params = [p for n, p in model.named_parameters()
                   if n.startswith("classifier.")]
    opt = torch.optim.Adam(head_params, lr=train_config.warmup_lr)
    augment = AugmentConfig.disabled()
    cfg = model_config
    for step in range(steps):
        if step == train_config.warmup_lr_drop_step:
            for group in opt.param_groups:
                group["lr"] = train_config.warmup_lr_final
        batch = make_batch(manifest, min(train_config.batch_size, len(manifest)),
                           vocab, model_config, augment,
                           seed=seed * 999_983 + step)
        dtype = next(model.parameters()).dtype
        images = _to_images_tensor(batch.images, dtype)
        labels = torch.from_numpy(batch.labels).to(dtype)
        with torch.no_grad():
            img_emb = model.visual(images)
        loss = asl_loss(model.classifier(img_emb), labels,
                        cfg.asl_gamma_pos, cfg.asl_gamma_neg, cfg.asl_margin)
        opt.zero_grad()
        loss.backward()
        opt.step()
    for p in model.parameters():
        p.requires_grad = True
    return model


EVAL_MODES = ("sketch+text", "sketch-only", "text-only")


def evaluate(manifest: DatasetManifest, bundle: ModelBundle,
             eval_mode: str = "sketch+text",
             combine_mode: CombinationMode = CombinationMode.SUM,
             index: retrieval_mod.EmbeddingIndex | None = None) -> dict:
    """Recall@{1,5,10} with each record's own image as the target.

    sketch-only replaces the text with the empty sequence; text-only
    replaces the sketch with the empty sketch, exactly the training-time
    drop semantics.
    """
    if eval_mode not in EVAL_MODES:
        raise ValueError(f"eval_mode must be one of {EVAL_MODES}")
    if index is None:
        index = retrieval_mod.build_index(manifest, bundle)
    queries = []
    for rec in manifest.records:
        if eval_mode == "text-only":
            sketch = StrokeSketch()
        else:
            img = load_image(manifest.image_path(rec))
            sketch = record_sketch(manifest, rec, img)
        if eval_mode == "sketch-only":
            seq = TokenSequence.empty_text()
        else:
            seq = tokenize(rec.captions[0], bundle.vocab,
                           bundle.config.max_caption_len)
        q = combine_query(encode_sketch(sketch, bundle.model),
                          encode_text(seq, bundle.model),
                          combine_mode, model=bundle.model)
        queries.append((rec.id, q))
    results = [retrieval_mod.retrieve(e, index, 10) for _, e in queries]
    targets = [rid for rid, _ in queries]
    return {"r1": retrieval_mod.recall_at_k(results, targets, 1),
            "r5": retrieval_mod.recall_at_k(results, targets, 5),
            "r10": retrieval_mod.recall_at_k(results, targets, 10)}


ABLATION_RUNS = (
    ("l_e", (1.0, 0.0, 0.0), CombinationMode.SUM),
    ("l_e+l_c", (1.0, 1.0, 0.0), CombinationMode.SUM),
    ("l_e+l_c+l_d", (1.0, 1.0, 1.0), CombinationMode.SUM),
    ("feature_max", (1.0, 1.0, 1.0), CombinationMode.MAX),
    ("feature_concat", (1.0, 1.0, 1.0), CombinationMode.CONCAT_PROJECT),
)


def run_ablation(train_manifest: DatasetManifest, eval_manifest: DatasetManifest,
                 vocab: Vocabulary, model_config: ModelConfig,
                 train_config: TrainConfig, augment: AugmentConfig,
                 seed: int) -> list[dict]:
    """Loss-term and combination-mode ablation grid; one table row per run."""
    rows = []
    for name, (me, mc, md), mode in ABLATION_RUNS:
        cfg = ModelConfig.from_dict({**model_config.to_dict(),
                                     "w_embed": model_config.w_embed * me,
                                     "w_class": model_config.w_class * mc,
                                     "w_caption": model_config.w_caption * md})
        result = train(train_manifest, vocab, cfg, train_config, augment,
                       seed=seed, mode=mode)
        recalls = evaluate(eval_manifest, result.bundle,
                           eval_mode="sketch+text", combine_mode=mode)
        rows.append({"run": name, "combine_mode": mode.value,
                     "w_embed": cfg.w_embed, "w_class": cfg.w_class,
                     "w_caption": cfg.w_caption, **recalls})
    return rows


def ablation_to_csv(rows: list[dict]) -> str:
    cols = ["run", "combine_mode", "w_embed", "w_class", "w_caption",
            "r1", "r5", "r10"]
    lines = [",".join(cols)]
    for row in rows:
        lines.append(",".join(str(row[c]) for c in cols))
    return "\n".join(lines) + "\n"

"""Embedding index, exact top-k cosine retrieval, recall@K, and the
query-completeness sweep protocols.

Search is an exact full scan (desk-scale corpora need no ANN); ties break
by ascending id so metrics are seed-stable. The index file format is
"sq-index-v1": one JSON header line, then packed little-endian float32
rows.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .checkpoint import ModelBundle
from .config import ModelConfig
from .core import Embedding, StrokeSketch, TokenSequence
from .data import (DatasetManifest, load_image, load_sketch, record_sketch,
                   tokenize)
from .encoders import CombinationMode, encode_image, encode_sketch, encode_text, combine_query
from .sketchgen import subsample_strokes

INDEX_FORMAT_TAG = "sq-index-v1"


@dataclass(frozen=True)
class EmbeddingIndex:
    """Immutable id-ordered matrix of unit-norm image embeddings."""

    ids: tuple[str, ...]
    matrix: np.ndarray  # N x d float32, rows unit-norm
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.ids) != self.matrix.shape[0]:
            raise ValueError("ids and matrix row count differ")
        if self.matrix.size:
            norms = np.linalg.norm(self.matrix, axis=1)
            if not np.allclose(norms, 1.0, atol=1e-4):
                raise ValueError("index rows must be unit-norm")

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class RetrievalResult:
    """Ranked (id, score) pairs, scores descending, ties by ascending id."""

    ranked: tuple[tuple[str, float], ...]
    query_dim: int

    def ids(self) -> list[str]:
        return [r[0] for r in self.ranked]

    def __len__(self) -> int:
        return len(self.ranked)


def build_index(manifest: DatasetManifest, bundle: ModelBundle,
                checkpoint_hash: str = "") -> EmbeddingIndex:
    """Encode every manifest image in order. Raises with the offending ids
    if any image is unreadable."""
    rows, bad = [], []
    for rec in manifest.records:
        try:
            img = load_image(manifest.image_path(rec))
            rows.append(encode_image(img, bundle.model).values)
        except Exception:
            bad.append(rec.id)
    if bad:
        raise IOError(f"unreadable images for ids: {bad}")
    matrix = (np.stack(rows).astype(np.float32) if rows
              else np.zeros((0, bundle.config.embed_dim), dtype=np.float32))
    meta = {"checkpoint_hash": checkpoint_hash,
            "config": bundle.config.to_dict()}
    return EmbeddingIndex(ids=tuple(r.id for r in manifest.records),
                          matrix=matrix, metadata=meta)


def retrieve(query: Embedding, index: EmbeddingIndex, k: int) -> RetrievalResult:
    """Exact top-min(k, N) by dot product (cosine on unit vectors)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(index) == 0:
        return RetrievalResult(ranked=(), query_dim=query.dim)
    scores = index.matrix.astype(np.float64) @ query.values
    ids_arr = np.array(index.ids)
    order = np.lexsort((ids_arr, -scores))
    top = order[:min(k, len(index))]
    ranked = tuple((str(ids_arr[i]), float(scores[i])) for i in top)
    return RetrievalResult(ranked=ranked, query_dim=query.dim)


def recall_at_k(results: list[RetrievalResult], targets: list[str],
                k: int) -> float:
    """Fraction of queries whose target appears in the top-k. A k beyond
    the result length just scans the whole result."""
    if len(results) != len(targets):
        raise ValueError("one target per query required")
    if not results:
        return 0.0
    hits = sum(1 for res, tgt in zip(results, targets)
               if tgt in res.ids()[:k])
    return hits / len(results)


# ---------------------------------------------------------------------------
# Completeness sweeps
# ---------------------------------------------------------------------------

SKETCH_SWEEP_FRACTIONS = (0.2, 0.4, 0.6, 0.8, 1.0)
TEXT_SWEEP_FRACTIONS = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)


@dataclass(frozen=True)
class SweepRow:
    fraction: float
    r1: float
    r5: float
    r10: float


def _record_queries(manifest: DatasetManifest, bundle: ModelBundle):
    """(record, sketch, caption) triples for evaluation-time querying;
    caption choice is the first one, deterministically."""
    out = []
    for rec in manifest.records:
        img = load_image(manifest.image_path(rec))
        sketch = record_sketch(manifest, rec, img)
        out.append((rec, sketch, rec.captions[0]))
    return out


def _evaluate_queries(queries: list[tuple[str, Embedding]],
                      index: EmbeddingIndex) -> tuple[float, float, float]:
    results = [retrieve(e, index, 10) for _, e in queries]
    targets = [rid for rid, _ in queries]
    return (recall_at_k(results, targets, 1),
            recall_at_k(results, targets, 5),
            recall_at_k(results, targets, 10))


def sketch_completeness_sweep(manifest: DatasetManifest, bundle: ModelBundle,
                              fractions=SKETCH_SWEEP_FRACTIONS,
                              seed: int = 0,
                              mode: CombinationMode = CombinationMode.SUM,
                              index: EmbeddingIndex | None = None) -> list[SweepRow]:
    """Recall@{1,5,10} querying with stroke-subsampled sketches plus the
    full caption, one row per kept fraction."""
    if index is None:
        index = build_index(manifest, bundle)
    triples = _record_queries(manifest, bundle)
    text_emb = {rec.id: encode_text(tokenize(cap, bundle.vocab,
                                             bundle.config.max_caption_len),
                                    bundle.model)
                for rec, _, cap in triples}
    rows = []
    for fi, frac in enumerate(fractions):
        queries = []
        for ri, (rec, sketch, cap) in enumerate(triples):
            sub = subsample_strokes(sketch, frac, seed * 100003 + fi * 1009 + ri) \
                if frac < 1.0 else sketch
            q = combine_query(encode_sketch(sub, bundle.model),
                              text_emb[rec.id], mode, model=bundle.model)
            queries.append((rec.id, q))
        r1, r5, r10 = _evaluate_queries(queries, index)
        rows.append(SweepRow(fraction=frac, r1=r1, r5=r5, r10=r10))
    return rows


def text_completeness_sweep(manifest: DatasetManifest, bundle: ModelBundle,
                            fractions=TEXT_SWEEP_FRACTIONS,
                            seed: int = 0,
                            mode: CombinationMode = CombinationMode.SUM,
                            index: EmbeddingIndex | None = None) -> list[SweepRow]:
    """Recall@{1,5,10} querying with word-subsampled captions plus the
    intact sketch; fraction 0 uses the empty-text query path."""
    if index is None:
        index = build_index(manifest, bundle)
    triples = _record_queries(manifest, bundle)
    sketch_emb = {rec.id: encode_sketch(sk, bundle.model)
                  for rec, sk, _ in triples}
    rows = []
    for fi, frac in enumerate(fractions):
        queries = []
        for ri, (rec, sketch, cap) in enumerate(triples):
            words = cap.split()
            if frac <= 0.0:
                kept = []
            elif frac >= 1.0:
                kept = words
            else:
                rng = np.random.default_rng(seed * 100003 + fi * 1009 + ri)
                k = max(int(np.floor(frac * len(words) + 0.5)), 1)
                chosen = np.sort(rng.choice(len(words), size=min(k, len(words)),
                                            replace=False))
                kept = [words[i] for i in chosen]
            seq = (TokenSequence.empty_text() if not kept
                   else tokenize(" ".join(kept), bundle.vocab,
                                 bundle.config.max_caption_len))
            q = combine_query(sketch_emb[rec.id],
                              encode_text(seq, bundle.model), mode,
                              model=bundle.model)
            queries.append((rec.id, q))
        r1, r5, r10 = _evaluate_queries(queries, index)
        rows.append(SweepRow(fraction=frac, r1=r1, r5=r5, r10=r10))
    return rows


def sweep_to_csv(rows: list[SweepRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["fraction", "r1", "r5", "r10"])
    for row in rows:
        writer.writerow([row.fraction, row.r1, row.r5, row.r10])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Index file I/O
# ---------------------------------------------------------------------------

def save_index(index: EmbeddingIndex, path: str | Path) -> None:
    header = {"format": INDEX_FORMAT_TAG, "dim": int(index.matrix.shape[1]),
              "count": len(index), "ids": list(index.ids),
              "checkpoint_hash": index.metadata.get("checkpoint_hash", ""),
              "config": index.metadata.get("config", {})}
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        f.write(b"\n")
        f.write(index.matrix.astype("<f4").tobytes(order="C"))


def load_index(path: str | Path) -> EmbeddingIndex:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode("utf-8"))
        if header.get("format") != INDEX_FORMAT_TAG:
            raise ValueError(f"not a {INDEX_FORMAT_TAG} index file: {path}")
        raw = f.read()
    matrix = np.frombuffer(raw, dtype="<f4").reshape(
        header["count"], header["dim"]).copy()
    meta = {"checkpoint_hash": header.get("checkpoint_hash", ""),
            "config": header.get("config", {})}
    return EmbeddingIndex(ids=tuple(header["ids"]), matrix=matrix,
                          metadata=meta)

"""HTTP retrieval endpoint serving sketch+text queries.

Sketches arrive as stroke JSON and are rasterized server-side with the
same rasterizer used in training, so query encoding matches the training
path bit-for-bit. Artifacts (checkpoint, index, image dir) live in one
immutable state object swapped atomically on reload, so concurrent
queries never observe a partial load.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from .checkpoint import ModelBundle, file_sha256, load_checkpoint
from .core import RasterImage, StrokeSketch, TokenSequence
from .data import sketch_from_json, tokenize
from .encoders import (CombinationMode, combine_query, encode_image,
                       encode_sketch, encode_text)
from .retrieval import EmbeddingIndex, load_index, retrieve


def _decode_png(b64: str, size: int) -> RasterImage:
    import base64
    import io

    from PIL import Image
    with Image.open(io.BytesIO(base64.b64decode(b64))) as im:
        im = im.convert("RGB")
        if im.size != (size, size):
            im = im.resize((size, size), Image.BILINEAR)
        arr = np.asarray(im, dtype=np.float32) / 255.0
    return RasterImage(pixels=arr)


@dataclass(frozen=True)
class ServiceState:
    bundle: ModelBundle
    index: EmbeddingIndex
    images_dir: Path
    checkpoint_hash: str


class QueryRequest(BaseModel):
    sketch: dict | None = None
    sketch_png: str | None = None  # base64 PNG fallback, pre-rasterized
    text: str | None = None
    k: int = Field(default=10, ge=1, le=100)
    mode: str = "sum"


def load_state(checkpoint: str | Path, index: str | Path,
               images_dir: str | Path) -> ServiceState:
    return ServiceState(bundle=load_checkpoint(checkpoint),
                        index=load_index(index),
                        images_dir=Path(images_dir),
                        checkpoint_hash=file_sha256(checkpoint))


def create_app(checkpoint: str | Path | None = None,
               index: str | Path | None = None,
               images_dir: str | Path | None = None,
               state: ServiceState | None = None) -> FastAPI:
    app = FastAPI(title="sketchquery")
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])
    if state is None and checkpoint is not None:
        state = load_state(checkpoint, index, images_dir)
    app.state.artifacts = state

    def _artifacts() -> ServiceState:
        artifacts = app.state.artifacts
        if artifacts is None:
            raise HTTPException(status_code=503, detail="index not loaded")
        return artifacts

    @app.post("/api/query")
    def query(req: QueryRequest):
        artifacts = _artifacts()
        if req.sketch is None and req.sketch_png is None and req.text is None:
            raise HTTPException(status_code=400,
                                detail="at least one of sketch/text required")
        try:
            mode = CombinationMode.parse(req.mode)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        bundle = artifacts.bundle
        t0 = time.perf_counter()
        if req.sketch is not None:
            # stroke JSON is canonical: server-side rasterization matches
            # training bit-for-bit
            try:
                sketch = sketch_from_json(req.sketch)
            except Exception as exc:
                raise HTTPException(status_code=400,
                                    detail=f"malformed stroke JSON: {exc}")
            sketch_emb = encode_sketch(sketch, bundle.model)
        elif req.sketch_png is not None:
            try:
                raster = _decode_png(req.sketch_png, bundle.config.image_size)
            except Exception as exc:
                raise HTTPException(status_code=400,
                                    detail=f"malformed sketch PNG: {exc}")
            sketch_emb = encode_image(raster, bundle.model)
        else:
            sketch_emb = encode_sketch(StrokeSketch(), bundle.model)
        seq = (TokenSequence.empty_text() if req.text is None
               else tokenize(req.text, bundle.vocab,
                             bundle.config.max_caption_len))
        q = combine_query(sketch_emb, encode_text(seq, bundle.model), mode,
                          model=bundle.model)
        result = retrieve(q, artifacts.index, req.k)
        elapsed_ms = (time.perf_counter() - t0) * 1000.0
        return {"results": [{"id": rid, "score": score,
                             "image_url": f"/api/images/{rid}"}
                            for rid, score in result.ranked],
                "timing_ms": elapsed_ms}

    @app.get("/api/images/{image_id}")
    def image(image_id: str):
        artifacts = _artifacts()
        if image_id not in artifacts.index.ids:
            raise HTTPException(status_code=404, detail="unknown id")
        path = artifacts.images_dir / f"{image_id}.png"
        if not path.exists():
            raise HTTPException(status_code=404, detail="image file missing")
        return Response(content=path.read_bytes(), media_type="image/png")

    @app.get("/api/health")
    def health():
        artifacts = _artifacts()
        return {"status": "ok", "index_size": len(artifacts.index),
                "checkpoint_hash": artifacts.checkpoint_hash}

    @app.post("/api/admin/reload")
    def reload(body: dict):
        """Exclusive artifact swap; readers see old or new state, never a mix."""
        new_state = load_state(body["checkpoint"], body["index"],
                               body["images_dir"])
        app.state.artifacts = new_state
        return {"status": "ok", "index_size": len(new_state.index)}

    return app


def serve(checkpoint: str, index: str, images_dir: str, port: int = 8000,
          host: str = "127.0.0.1") -> None:
    import uvicorn
    app = create_app(checkpoint, index, images_dir)
    uvicorn.run(app, host=host, port=port)

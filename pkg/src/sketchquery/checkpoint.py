"""Checkpoint archive: format tag "sq-ckpt-v1".

A single zip archive holding ``header.json`` (format tag, ModelConfig,
vocabulary) plus one little-endian float32 array per parameter path under
``params/``. The vocabulary travels with the weights because the token
embedding table is meaningless without it.
"""

from __future__ import annotations

import hashlib
import json
import zipfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .config import ModelConfig
from .data import Vocabulary
from .encoders import SketchTextModel

FORMAT_TAG = "sq-ckpt-v1"


@dataclass
class ModelBundle:
    model: SketchTextModel
    vocab: Vocabulary
    config: ModelConfig


def save_checkpoint(path: str | Path, model: SketchTextModel,
                    vocab: Vocabulary) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    state = model.state_dict()
    header = {
        "format": FORMAT_TAG,
        "config": model.config.to_dict(),
        "vocab": list(vocab.id_to_token),
        "params": {name: list(t.shape) for name, t in state.items()},
    }
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        zf.writestr("header.json", json.dumps(header, sort_keys=True))
        for name, tensor in state.items():
            arr = tensor.detach().cpu().numpy().astype("<f4")
            zf.writestr(f"params/{name}.bin", arr.tobytes())


def load_checkpoint(path: str | Path,
                    dtype: torch.dtype = torch.float32) -> ModelBundle:
    path = Path(path)
    with zipfile.ZipFile(path) as zf:
        header = json.loads(zf.read("header.json"))
        if header.get("format") != FORMAT_TAG:
            raise ValueError(f"not a {FORMAT_TAG} checkpoint: {path}")
        config = ModelConfig.from_dict(header["config"])
        vocab = Vocabulary.from_token_list(header["vocab"])
        model = SketchTextModel(config)
        state = {}
        for name, shape in header["params"].items():
            raw = np.frombuffer(zf.read(f"params/{name}.bin"), dtype="<f4")
            state[name] = torch.from_numpy(raw.reshape(shape).copy())
        model.load_state_dict(state)
    model = model.to(dtype)
    model.eval()
    return ModelBundle(model=model, vocab=vocab, config=config)


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()

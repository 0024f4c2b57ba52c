"""Dataset manifests, tokenizer/vocabulary, the toy scene generator, and
batch assembly with augmentation.

External formats:
  - manifest: JSON-Lines, one record per line, UTF-8
  - sketch file: JSON ``{"canvas_aspect": float, "strokes": [[[x,y],...],...]}``
    with normalized coordinates; an importer accepts the SVG
    polyline/path subset and converts to this JSON
  - images: PNG, 8-bit RGB
"""

from __future__ import annotations

import json
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .config import AugmentConfig, ModelConfig
from .core import (BOS_ID, EOS_ID, PAD_ID, UNK_ID, LabelSet, RasterImage,
                   Stroke, StrokeSketch, TokenSequence, TrainingTuple)
from . import sketchgen

_WORD_RE = re.compile(r"[a-z0-9]+")

RESERVED_TOKENS = ("<pad>", "<bos>", "<eos>", "<unk>")


@dataclass(frozen=True)
class Vocabulary:
    """Word -> id map with reserved PAD=0, BOS=1, EOS=2, UNK=3."""

    token_to_id: dict[str, int]
    id_to_token: tuple[str, ...]

    @classmethod
    def from_words(cls, words) -> "Vocabulary":
        ordered = list(RESERVED_TOKENS)
        seen = set(ordered)
        for w in sorted(set(words)):
            if w not in seen:
                ordered.append(w)
                seen.add(w)
        return cls(token_to_id={w: i for i, w in enumerate(ordered)},
                   id_to_token=tuple(ordered))

    @classmethod
    def build(cls, captions) -> "Vocabulary":
        words = []
        for cap in captions:
            words.extend(_WORD_RE.findall(cap.lower()))
        return cls.from_words(words)

    def __len__(self) -> int:
        return len(self.id_to_token)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(list(self.id_to_token)))

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        tokens = json.loads(Path(path).read_text())
        return cls.from_token_list(tokens)

    @classmethod
    def from_token_list(cls, tokens: list[str]) -> "Vocabulary":
        if tuple(tokens[:4]) != RESERVED_TOKENS:
            raise ValueError("vocabulary must start with the reserved tokens")
        return cls(token_to_id={w: i for i, w in enumerate(tokens)},
                   id_to_token=tuple(tokens))


def tokenize(text: str, vocab: Vocabulary, max_len: int = 32) -> TokenSequence:
    """Lowercase, split on whitespace/punctuation, map with UNK fallback,
    wrap in BOS/EOS, truncate so total length <= max_len."""
    words = _WORD_RE.findall(text.lower())
    ids = [vocab.token_to_id.get(w, UNK_ID) for w in words]
    ids = ids[:max_len - 2]
    return TokenSequence(tuple([BOS_ID] + ids + [EOS_ID]))


def detokenize(seq: TokenSequence, vocab: Vocabulary) -> str:
    words = [vocab.id_to_token[t] for t in seq.tokens
             if t not in (PAD_ID, BOS_ID, EOS_ID)]
    return " ".join(words)


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ManifestRecord:
    id: str
    image_path: str
    captions: tuple[str, ...]
    labels: tuple[str, ...]
    sketch_path: str | None = None
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        d = {"id": self.id, "image_path": self.image_path,
             "captions": list(self.captions), "labels": list(self.labels)}
        if self.sketch_path is not None:
            d["sketch_path"] = self.sketch_path
        if self.extra:
            d["extra"] = self.extra
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ManifestRecord":
        return cls(id=str(d["id"]), image_path=d["image_path"],
                   captions=tuple(d["captions"]),
                   labels=tuple(d.get("labels", ())),
                   sketch_path=d.get("sketch_path"),
                   extra=d.get("extra", {}))


@dataclass(frozen=True)
class DatasetManifest:
    records: tuple[ManifestRecord, ...]
    root: Path
    label_names: tuple[str, ...]

    def __post_init__(self):
        ids = [r.id for r in self.records]
        if len(ids) != len(set(ids)):
            raise ValueError("manifest ids must be unique")

    def __len__(self) -> int:
        return len(self.records)

    def image_path(self, rec: ManifestRecord) -> Path:
        return self.root / rec.image_path

    def sketch_path(self, rec: ManifestRecord) -> Path | None:
        return self.root / rec.sketch_path if rec.sketch_path else None

    def label_vector(self, rec: ManifestRecord) -> LabelSet:
        vec = np.zeros(len(self.label_names), dtype=np.float32)
        index = {name: i for i, name in enumerate(self.label_names)}
        for name in rec.labels:
            vec[index[name]] = 1.0
        return LabelSet(labels=vec)


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    lines = [json.dumps(r.to_json(), sort_keys=True) for r in manifest.records]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_manifest(path: str | Path, label_names=None,
                  check_files: bool = True) -> DatasetManifest:
    path = Path(path)
    records = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            records.append(ManifestRecord.from_json(json.loads(line)))
    root = path.parent
    if check_files:
        missing = [r.id for r in records
                   if not (root / r.image_path).exists()
                   or (r.sketch_path and not (root / r.sketch_path).exists())]
        if missing:
            raise FileNotFoundError(f"manifest references missing files for ids: {missing}")
    if label_names is None:
        labels_path = root / "labels.json"
        if labels_path.exists():
            label_names = tuple(json.loads(labels_path.read_text()))
        else:
            label_names = tuple(sorted({n for r in records for n in r.labels}))
    return DatasetManifest(records=tuple(records), root=root,
                           label_names=tuple(label_names))


# ---------------------------------------------------------------------------
# Sketch file I/O
# ---------------------------------------------------------------------------

def sketch_to_json(sketch: StrokeSketch) -> dict:
    return {"canvas_aspect": sketch.canvas_aspect,
            "strokes": [[[float(x), float(y)] for x, y in s.points]
                        for s in sketch.strokes]}


def sketch_from_json(d: dict) -> StrokeSketch:
    raw = d.get("strokes", [])
    if not isinstance(raw, (list, tuple)):
        raise ValueError("strokes must be a list of point lists")
    strokes = []
    for pts in raw:
        if not isinstance(pts, (list, tuple)):
            raise ValueError("each stroke must be a list of [x, y] points")
        if len(pts) < 2:
            continue  # single-point strokes are dropped, not an error
        strokes.append(Stroke(points=tuple(
            (float(x), float(y)) for x, y in pts)))
    return StrokeSketch(strokes=tuple(strokes),
                        canvas_aspect=float(d.get("canvas_aspect", 1.0)))


def save_sketch(sketch: StrokeSketch, path: str | Path) -> None:
    Path(path).write_text(json.dumps(sketch_to_json(sketch)))


def load_sketch(path: str | Path) -> StrokeSketch:
    return sketch_from_json(json.loads(Path(path).read_text()))


def sketch_from_svg(svg_text: str) -> StrokeSketch:
    """Import the polyline/path subset of an SVG drawing.

    Supports <polyline points=...> and <path d="M x y L x y ..."> elements
    (absolute moveto/lineto only); coordinates are normalized by the SVG
    width/height.
    """
    root = ET.fromstring(svg_text)
    width = _svg_length(root.get("width"), 1.0)
    height = _svg_length(root.get("height"), 1.0)
    strokes = []
    for el in root.iter():
        tag = el.tag.rsplit("}", 1)[-1]
        if tag == "polyline":
            nums = [float(v) for v in re.findall(r"-?\d+\.?\d*(?:[eE][+-]?\d+)?",
                                                 el.get("points", ""))]
            pts = [(nums[i] / width, nums[i + 1] / height)
                   for i in range(0, len(nums) - 1, 2)]
            if len(pts) >= 2:
                strokes.append(Stroke(points=tuple(pts)))
        elif tag == "path":
            for pts in _parse_svg_path(el.get("d", "")):
                if len(pts) >= 2:
                    strokes.append(Stroke(points=tuple(
                        (x / width, y / height) for x, y in pts)))
    aspect = width / height if height else 1.0
    return StrokeSketch(strokes=tuple(strokes), canvas_aspect=aspect)


def _svg_length(value: str | None, default: float) -> float:
    if not value:
        return default
    m = re.match(r"-?\d+\.?\d*", value)
    return float(m.group()) if m else default


def _parse_svg_path(d: str) -> list[list[tuple[float, float]]]:
    tokens = re.findall(r"[MmLlZz]|-?\d+\.?\d*(?:[eE][+-]?\d+)?", d)
    polylines, current = [], []
    cmd = None
    i = 0
    while i < len(tokens):
        t = tokens[i]
        if t in "MmLlZz":
            cmd = t
            i += 1
            if cmd in "Zz" and current:
                current.append(current[0])
            continue
        x, y = float(tokens[i]), float(tokens[i + 1])
        i += 2
        if cmd in ("m", "l") and current:
            px, py = current[-1]
            x, y = px + x, py + y
        if cmd in ("M", "m") and current:
            polylines.append(current)
            current = []
        current.append((x, y))
        if cmd == "M":
            cmd = "L"
        elif cmd == "m":
            cmd = "l"
    if current:
        polylines.append(current)
    return polylines


def load_image(path: str | Path) -> RasterImage:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return RasterImage(pixels=arr)


def save_image(img: RasterImage, path: str | Path) -> None:
    arr = np.clip(np.rint(img.pixels * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path, format="PNG")


# ---------------------------------------------------------------------------
# Toy dataset
# ---------------------------------------------------------------------------

SHAPES = ("circle", "square", "triangle", "star")
COLORS = {"red": (0.85, 0.1, 0.1),
          "green": (0.1, 0.7, 0.15),
          "blue": (0.15, 0.2, 0.85)}

TOY_LABELS = tuple(f"{c} {s}" for c in sorted(COLORS) for s in SHAPES)


def _shape_mask(shape: str, cx: float, cy: float, r: float,
                size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5
    if shape == "circle":
        return (xx - cx) ** 2 + (yy - cy) ** 2 <= r ** 2
    if shape == "square":
        s = r * 0.9
        return (np.abs(xx - cx) <= s) & (np.abs(yy - cy) <= s)
    if shape == "triangle":
        verts = [(cx + r * np.cos(a), cy + r * np.sin(a))
                 for a in (-np.pi / 2, np.pi / 6, 5 * np.pi / 6)]
        return _polygon_mask(verts, xx, yy)
    if shape == "star":
        verts = []
        for i in range(10):
            a = -np.pi / 2 + i * np.pi / 5
            rad = r if i % 2 == 0 else r * 0.45
            verts.append((cx + rad * np.cos(a), cy + rad * np.sin(a)))
        return _polygon_mask(verts, xx, yy)
    raise ValueError(f"unknown shape {shape}")


def _polygon_mask(verts, xx, yy):
    inside = np.zeros(xx.shape, dtype=bool)
    n = len(verts)
    for i in range(n):
        x0, y0 = verts[i]
        x1, y1 = verts[(i + 1) % n]
        crosses = ((y0 <= yy) != (y1 <= yy))
        with np.errstate(divide="ignore", invalid="ignore"):
            xi = x0 + (yy - y0) * (x1 - x0) / (y1 - y0)
        inside ^= crosses & (xx < xi)
    return inside


def _render_scene(scene: list[dict], size: int) -> RasterImage:
    px = np.ones((size, size, 3), dtype=np.float32)
    for item in scene:
        mask = _shape_mask(item["shape"], item["cx"], item["cy"],
                           item["r"], size)
        px[mask] = COLORS[item["color"]]
    return RasterImage(pixels=px)


def _scene_caption(scene: list[dict]) -> tuple[str, str]:
    """Two template captions: a spatial-relation chain and an enumeration."""
    parts = [f"a {it['color']} {it['shape']}" for it in scene]
    if len(scene) == 1:
        return parts[0], f"a picture with {parts[0]}"
    rel_chunks = [parts[0]]
    for prev, cur, p in zip(scene[:-1], scene[1:], parts[1:]):
        dx = cur["cx"] - prev["cx"]
        dy = cur["cy"] - prev["cy"]
        if abs(dx) >= abs(dy):
            rel = "right of" if dx > 0 else "left of"
        else:
            rel = "below" if dy > 0 else "above"
        rel_chunks.append(f"{rel} {p}")
    return " ".join(rel_chunks), "a picture with " + " and ".join(parts)


def scene_labels(scene: list[dict]) -> tuple[str, ...]:
    names = sorted({f"{it['color']} {it['shape']}" for it in scene})
    return tuple(names)


def generate_toy_dataset(n: int, seed: int, out_dir: str | Path,
                         canvas: int = 64) -> DatasetManifest:
    """Write n synthetic scenes (PNG + sketch JSON + manifest + vocab).

    Each record carries 1-3 colored shapes, two template captions, the
    shape x color label set, and a contour-traced sketch of the rendered
    image. Byte-identical given (n, seed).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "sketches").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    records = []
    all_captions = []
    for i in range(n):
        scene = _sample_scene(rng, canvas)
        img = _render_scene(scene, canvas)
        sketch = sketchgen.synthesize_sketch(img)
        cap_spatial, cap_list = _scene_caption(scene)
        rec_id = f"toy-{seed:04d}-{i:05d}"
        img_rel = f"images/{rec_id}.png"
        sk_rel = f"sketches/{rec_id}.json"
        save_image(img, out_dir / img_rel)
        save_sketch(sketch, out_dir / sk_rel)
        records.append(ManifestRecord(
            id=rec_id, image_path=img_rel,
            captions=(cap_spatial, cap_list),
            labels=scene_labels(scene), sketch_path=sk_rel,
            extra={"scene": scene}))
        all_captions.extend([cap_spatial, cap_list])
    manifest = DatasetManifest(records=tuple(records), root=out_dir,
                               label_names=TOY_LABELS)
    save_manifest(manifest, out_dir / "manifest.jsonl")
    (out_dir / "labels.json").write_text(json.dumps(list(TOY_LABELS)))
    Vocabulary.build(all_captions).save(out_dir / "vocab.json")
    return manifest


def _sample_scene(rng: np.random.Generator, canvas: int) -> list[dict]:
    count = int(rng.integers(1, 4))
    scene = []
    for _ in range(count):
        for _attempt in range(20):
            r = float(rng.uniform(canvas * 0.14, canvas * 0.22))
            cx = float(rng.uniform(r + 1, canvas - r - 1))
            cy = float(rng.uniform(r + 1, canvas - r - 1))
            if all(np.hypot(cx - it["cx"], cy - it["cy"]) > (r + it["r"]) * 0.9
                   for it in scene):
                break
        scene.append({"shape": SHAPES[rng.integers(len(SHAPES))],
                      "color": sorted(COLORS)[rng.integers(len(COLORS))],
                      "cx": cx, "cy": cy, "r": r})
    return scene


# ---------------------------------------------------------------------------
# COCO-format converter
# ---------------------------------------------------------------------------

def convert_coco(captions_json: str | Path, instances_json: str | Path,
                 images_dir: str, out_path: str | Path) -> DatasetManifest:
    """Convert COCO caption + instance annotation files to a manifest.

    ``images_dir`` is recorded relative to the manifest location; sketch
    paths are left unset (sketches are synthesized at batch time).
    """
    caps = json.loads(Path(captions_json).read_text())
    inst = json.loads(Path(instances_json).read_text())
    cat_names = {c["id"]: c["name"] for c in inst["categories"]}
    captions_by_image: dict[int, list[str]] = {}
    for ann in caps["annotations"]:
        captions_by_image.setdefault(ann["image_id"], []).append(ann["caption"])
    labels_by_image: dict[int, set[str]] = {}
    for ann in inst["annotations"]:
        labels_by_image.setdefault(ann["image_id"], set()).add(
            cat_names[ann["category_id"]])
    records = []
    for im in caps["images"]:
        image_id = im["id"]
        if image_id not in captions_by_image:
            continue
        records.append(ManifestRecord(
            id=str(image_id),
            image_path=f"{images_dir}/{im['file_name']}",
            captions=tuple(captions_by_image[image_id]),
            labels=tuple(sorted(labels_by_image.get(image_id, ())))))
    label_names = tuple(sorted(cat_names.values()))
    out_path = Path(out_path)
    manifest = DatasetManifest(records=tuple(records), root=out_path.parent,
                               label_names=label_names)
    save_manifest(manifest, out_path)
    (out_path.parent / "labels.json").write_text(json.dumps(list(label_names)))
    return manifest


# ---------------------------------------------------------------------------
# Batching
# ---------------------------------------------------------------------------

@dataclass
class Batch:
    """Aligned training arrays; row i of every field describes record i.

    ``query_tokens`` reflects query dropout; ``target_tokens`` keeps the
    original caption for the decoder loss.
    """

    images: np.ndarray          # N x H x W x 3 float32
    sketch_rasters: np.ndarray  # N x H x W x 3 float32
    query_tokens: np.ndarray    # N x T int64, PAD-padded
    target_tokens: np.ndarray   # N x T int64, PAD-padded
    labels: np.ndarray          # N x L float32
    ids: list[str]

    def __len__(self) -> int:
        return self.images.shape[0]


def pad_tokens(seqs: list[TokenSequence], max_len: int) -> np.ndarray:
    out = np.full((len(seqs), max_len), PAD_ID, dtype=np.int64)
    for i, s in enumerate(seqs):
        toks = s.tokens[:max_len]
        out[i, :len(toks)] = toks
    return out


def record_sketch(manifest: DatasetManifest, rec: ManifestRecord,
                  img: RasterImage) -> StrokeSketch:
    sk_path = manifest.sketch_path(rec)
    if sk_path is not None:
        return load_sketch(sk_path)
    return sketchgen.synthesize_sketch(img)


def make_batch(manifest: DatasetManifest, batch_size: int, vocab: Vocabulary,
               model_config: ModelConfig, augment: AugmentConfig,
               seed: int) -> Batch:
    """Assemble one aligned contrastive batch.

    Per record: load image; load or synthesize the sketch; sample one
    caption; apply independent random affines to image and sketch, stroke
    dropout with completeness ~ U[min,max], and query dropout; rasterize
    the query sketch; pad token sequences to the model max length.
    """
    if batch_size > len(manifest):
        raise ValueError("batch_size exceeds dataset size")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(manifest), size=batch_size, replace=False)
    size = model_config.image_size
    images, rasters, q_tokens, t_tokens, labels, ids = [], [], [], [], [], []
    for i in idx:
        rec = manifest.records[int(i)]
        img = load_image(manifest.image_path(rec))
        if img.size != (size, size):
            img = _resize(img, size)
        sketch = record_sketch(manifest, rec, img)
        caption = rec.captions[int(rng.integers(len(rec.captions)))]
        if augment.enabled:
            # independent seeds: one affine draw for the image, a separate
            # one for the sketch, so the pair is deliberately misaligned
            img = sketchgen.affine_image(
                img, sketchgen.sample_affine_params(rng, augment))
            sketch = sketchgen.random_affine(
                sketch, sketchgen.sample_affine_params(rng, augment))
            sketch = sketchgen.stroke_dropout(
                sketch, rng.uniform(augment.completeness_min,
                                    augment.completeness_max), rng)
        target_seq = tokenize(caption, vocab, model_config.max_caption_len)
        tup = TrainingTuple(image=img, sketch=sketch, caption=target_seq,
                            labels=manifest.label_vector(rec), id=rec.id)
        if augment.enabled:
            tup = sketchgen.query_dropout(tup, augment.query_dropout_p, rng)
        raster = rasterize_sketch(tup.sketch, model_config)
        images.append(img.pixels)
        rasters.append(raster.pixels)
        q_tokens.append(tup.caption)
        t_tokens.append(target_seq)
        labels.append(tup.labels.labels)
        ids.append(rec.id)
    # pad to the longest sequence in the batch (never past max_caption_len);
    # masking makes the loss invariant to the pad width
    width = min(max(len(s) for s in q_tokens + t_tokens),
                model_config.max_caption_len)
    return Batch(images=np.stack(images).astype(np.float32),
                 sketch_rasters=np.stack(rasters).astype(np.float32),
                 query_tokens=pad_tokens(q_tokens, width),
                 target_tokens=pad_tokens(t_tokens, width),
                 labels=np.stack(labels).astype(np.float32),
                 ids=ids)


def rasterize_sketch(sketch: StrokeSketch, config: ModelConfig) -> RasterImage:
    from .core import rasterize
    return rasterize(sketch, config.image_size, config.stroke_width)


def _resize(img: RasterImage, size: int) -> RasterImage:
    arr = np.clip(np.rint(img.pixels * 255.0), 0, 255).astype(np.uint8)
    resized = Image.fromarray(arr).resize((size, size), Image.BILINEAR)
    return RasterImage(pixels=np.asarray(resized, dtype=np.float32) / 255.0)

"""Synthetic sketch generation and the sketch/image augmentations.

Sketch synthesis is a contour-tracing stand-in: Sobel gradient magnitude,
thresholded at the 90th percentile, thinned to one-pixel skeletons,
followed into polylines, and simplified with Douglas-Peucker. It is
deliberately swappable behind ``synthesize_sketch``.

All randomized operations take explicit seeds or ``numpy.random.Generator``
streams; callers own the RNG, so everything here is safe to run
concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import AugmentConfig
from .core import RasterImage, Stroke, StrokeSketch, TokenSequence, TrainingTuple

_GRAD_FLOOR = 1e-6  # below this the gradient map counts as flat


@dataclass(frozen=True)
class AffineParams:
    """A sampled affine transform plus the seed that produced it."""

    rotation_deg: float = 0.0
    translate_x: float = 0.0
    translate_y: float = 0.0
    scale: float = 1.0
    shear_deg: float = 0.0
    seed: int | None = None

    @classmethod
    def identity(cls) -> "AffineParams":
        return cls()

    def matrix(self) -> np.ndarray:
        """2x2 linear part: rotation . shear . scale, applied about the
        canvas center by the callers."""
        theta = math.radians(self.rotation_deg)
        rot = np.array([[math.cos(theta), -math.sin(theta)],
                        [math.sin(theta), math.cos(theta)]])
        shear = np.array([[1.0, math.tan(math.radians(self.shear_deg))],
                          [0.0, 1.0]])
        return rot @ shear * self.scale


def sample_affine_params(rng: np.random.Generator, config: AugmentConfig,
                         seed: int | None = None) -> AffineParams:
    return AffineParams(
        rotation_deg=rng.uniform(-config.rotation_deg, config.rotation_deg),
        translate_x=rng.uniform(-config.translate_frac, config.translate_frac),
        translate_y=rng.uniform(-config.translate_frac, config.translate_frac),
        scale=rng.uniform(config.scale_min, config.scale_max),
        shear_deg=rng.uniform(-config.shear_deg, config.shear_deg),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Sketch synthesis: image -> strokes
# ---------------------------------------------------------------------------

def synthesize_sketch(img: RasterImage) -> StrokeSketch:
    """Trace high-gradient contours of an image into polyline strokes.

    Deterministic; a gradient-free (uniform) image yields an empty sketch.
    Output strokes are aligned with the source image; misalignment is
    introduced later by augmentation.
    """
    gray = img.pixels.mean(axis=2)
    mag = _sobel_magnitude(gray)
    if mag.max() <= _GRAD_FLOOR:
        return StrokeSketch()
    thresh = max(float(np.percentile(mag, 90.0)), _GRAD_FLOOR)
    edges = mag > thresh
    if not edges.any():
        return StrokeSketch()
    skeleton = _zhang_suen_thin(edges)
    paths = _trace_paths(skeleton)
    size = gray.shape[0]
    strokes = []
    for path in paths:
        # long contours are broken up so stroke-level dropout has units to
        # act on, mirroring multi-stroke human drawings
        for chunk in _split_path(path, max_len=25):
            simplified = _douglas_peucker(chunk, tolerance=1.5)
            if len(simplified) < 2:
                continue
            pts = tuple(((c + 0.5) / size, (r + 0.5) / size)
                        for r, c in simplified)
            strokes.append(Stroke(points=pts))
    aspect = img.pixels.shape[1] / img.pixels.shape[0]
    return StrokeSketch(strokes=tuple(strokes), canvas_aspect=aspect)


def _sobel_magnitude(gray: np.ndarray) -> np.ndarray:
    g = np.pad(gray, 1, mode="edge")
    gx = (g[:-2, 2:] + 2 * g[1:-1, 2:] + g[2:, 2:]
          - g[:-2, :-2] - 2 * g[1:-1, :-2] - g[2:, :-2])
    gy = (g[2:, :-2] + 2 * g[2:, 1:-1] + g[2:, 2:]
          - g[:-2, :-2] - 2 * g[:-2, 1:-1] - g[:-2, 2:])
    return np.hypot(gx, gy)


def _zhang_suen_thin(mask: np.ndarray) -> np.ndarray:
    """Classic two-subiteration thinning down to one-pixel skeletons."""
    img = mask.astype(np.uint8)
    img = np.pad(img, 1)

    def neighbors(a):
        p2 = a[:-2, 1:-1]; p3 = a[:-2, 2:]; p4 = a[1:-1, 2:]; p5 = a[2:, 2:]
        p6 = a[2:, 1:-1]; p7 = a[2:, :-2]; p8 = a[1:-1, :-2]; p9 = a[:-2, :-2]
        return p2, p3, p4, p5, p6, p7, p8, p9

    changed = True
    while changed:
        changed = False
        for phase in (0, 1):
            p2, p3, p4, p5, p6, p7, p8, p9 = neighbors(img)
            b = (p2 + p3 + p4 + p5 + p6 + p7 + p8 + p9)
            ring = [p2, p3, p4, p5, p6, p7, p8, p9, p2]
            a = np.zeros_like(b)
            for q, r in zip(ring[:-1], ring[1:]):
                a += ((q == 0) & (r == 1)).astype(np.uint8)
            if phase == 0:
                c1 = p2 * p4 * p6
                c2 = p4 * p6 * p8
            else:
                c1 = p2 * p4 * p8
                c2 = p2 * p6 * p8
            cond = ((img[1:-1, 1:-1] == 1) & (b >= 2) & (b <= 6)
                    & (a == 1) & (c1 == 0) & (c2 == 0))
            if cond.any():
                img[1:-1, 1:-1][cond] = 0
                changed = True
    return img[1:-1, 1:-1].astype(bool)


_NEIGHBOR_OFFSETS = ((-1, -1), (-1, 0), (-1, 1), (0, -1),
                     (0, 1), (1, -1), (1, 0), (1, 1))


def _trace_paths(skeleton: np.ndarray) -> list[list[tuple[int, int]]]:
    """Follow 8-connected skeleton pixels into ordered pixel paths.

    Endpoints (degree-1 pixels) are consumed first in row-major order, so
    the result is deterministic; remaining cycles start from their
    row-major-first pixel.
    """
    remaining = {(int(r), int(c)) for r, c in zip(*np.nonzero(skeleton))}

    def live_neighbors(p):
        r, c = p
        return [(r + dr, c + dc) for dr, dc in _NEIGHBOR_OFFSETS
                if (r + dr, c + dc) in remaining]

    def walk(start):
        path = [start]
        remaining.discard(start)
        cur = start
        while True:
            nxt = live_neighbors(cur)
            if not nxt:
                break
            cur = min(nxt)
            remaining.discard(cur)
            path.append(cur)
        return path

    paths = []
    while remaining:
        endpoints = sorted(p for p in remaining if len(live_neighbors(p)) <= 1)
        start = endpoints[0] if endpoints else min(remaining)
        path = walk(start)
        if len(path) >= 2:
            paths.append(path)
    return paths


def _split_path(path: list[tuple[int, int]],
                max_len: int) -> list[list[tuple[int, int]]]:
    if len(path) <= max_len:
        return [path]
    chunks = []
    for start in range(0, len(path) - 1, max_len - 1):
        chunk = path[start:start + max_len]
        if len(chunk) >= 2:
            chunks.append(chunk)
    return chunks


def _douglas_peucker(points: list[tuple[int, int]],
                     tolerance: float) -> list[tuple[int, int]]:
    if len(points) < 3:
        return list(points)
    keep = np.zeros(len(points), dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, len(points) - 1)]
    pts = np.asarray(points, dtype=np.float64)
    while stack:
        lo, hi = stack.pop()
        if hi - lo < 2:
            continue
        seg = pts[hi] - pts[lo]
        seg_len = np.hypot(*seg)
        mid = pts[lo + 1:hi]
        if seg_len < 1e-12:
            dist = np.hypot(*(mid - pts[lo]).T)
        else:
            rel = mid - pts[lo]
            dist = np.abs(seg[0] * rel[:, 1] - seg[1] * rel[:, 0]) / seg_len
        worst = int(np.argmax(dist))
        if dist[worst] > tolerance:
            idx = lo + 1 + worst
            keep[idx] = True
            stack.append((lo, idx))
            stack.append((idx, hi))
    return [points[i] for i in np.nonzero(keep)[0]]


# ---------------------------------------------------------------------------
# Augmentations
# ---------------------------------------------------------------------------

def random_affine(sketch: StrokeSketch, params: AffineParams) -> StrokeSketch:
    """Map every stroke point by the affine transform about the canvas
    center; results are clamped back into [0,1]^2 by the Stroke type."""
    identity = (params.rotation_deg == 0.0 and params.translate_x == 0.0
                and params.translate_y == 0.0 and params.scale == 1.0
                and params.shear_deg == 0.0)
    if sketch.is_empty or identity:
        return sketch
    mat = params.matrix()
    cx = cy = 0.5
    strokes = []
    for stroke in sketch.strokes:
        pts = np.asarray(stroke.points, dtype=np.float64) - (cx, cy)
        mapped = pts @ mat.T + (cx + params.translate_x, cy + params.translate_y)
        strokes.append(Stroke(points=tuple(map(tuple, mapped))))
    return StrokeSketch(strokes=tuple(strokes), canvas_aspect=sketch.canvas_aspect)


def affine_image(img: RasterImage, params: AffineParams) -> RasterImage:
    """Warp a raster by the same affine family (inverse-mapped, nearest
    neighbor, white fill), used to misalign image and sketch."""
    h, w = img.size
    mat = params.matrix()
    inv = np.linalg.inv(mat)
    rows, cols = np.mgrid[0:h, 0:w]
    # pixel centers in normalized coordinates
    x = (cols + 0.5) / w
    y = (rows + 0.5) / h
    src = np.stack([x - 0.5 - params.translate_x,
                    y - 0.5 - params.translate_y], axis=-1) @ inv.T + 0.5
    sc = np.floor(src[..., 0] * w).astype(int)
    sr = np.floor(src[..., 1] * h).astype(int)
    valid = (sr >= 0) & (sr < h) & (sc >= 0) & (sc < w)
    out = np.ones_like(img.pixels)
    out[valid] = img.pixels[sr[valid], sc[valid]]
    return RasterImage(pixels=out)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _keep_strokes(sketch: StrokeSketch, fraction: float,
                  rng: np.random.Generator) -> StrokeSketch:
    n = len(sketch.strokes)
    if n == 0:
        return sketch
    k = max(_round_half_up(fraction * n), 1)
    k = min(k, n)
    if k == n:
        return sketch
    chosen = np.sort(rng.choice(n, size=k, replace=False))
    strokes = tuple(sketch.strokes[i] for i in chosen)
    return StrokeSketch(strokes=strokes, canvas_aspect=sketch.canvas_aspect)


def stroke_dropout(sketch: StrokeSketch, completeness: float,
                   seed: int | np.random.Generator) -> StrokeSketch:
    """Keep round(completeness * n) uniformly chosen strokes (floor 1),
    preserving stroke order. Training draws completeness from U[0.6, 1]."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return _keep_strokes(sketch, completeness, rng)


def subsample_strokes(sketch: StrokeSketch, fraction: float,
                      seed: int | np.random.Generator) -> StrokeSketch:
    """Evaluation-side stroke subsampling for the completeness sweeps;
    same semantics as ``stroke_dropout``."""
    if not (0.0 < fraction <= 1.0):
        raise ValueError("fraction must be in (0, 1]")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return _keep_strokes(sketch, fraction, rng)


def query_dropout(tup: TrainingTuple, p: float,
                  seed: int | np.random.Generator) -> TrainingTuple:
    """With probability p, drop exactly one query modality, chosen
    uniformly: the sketch (replaced by the empty sketch) or the
    caption-as-query (replaced by BOS/EOS only). Never both. The image
    is untouched; callers keep the original caption as the decoder target.
    """
    if not (0.0 <= p <= 1.0):
        raise ValueError("p must be in [0, 1]")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if rng.random() >= p:
        return tup
    if rng.integers(2) == 0:
        return TrainingTuple(image=tup.image, sketch=StrokeSketch(),
                             caption=tup.caption, labels=tup.labels, id=tup.id)
    return TrainingTuple(image=tup.image, sketch=tup.sketch,
                         caption=TokenSequence.empty_text(),
                         labels=tup.labels, id=tup.id)

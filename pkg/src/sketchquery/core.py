"""Shared domain types and normalization/rasterization primitives.

All types here are immutable value objects; the operations are pure
functions, so everything in this module is safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Reserved vocabulary ids, shared with the tokenizer.
PAD_ID = 0
BOS_ID = 1
EOS_ID = 2
UNK_ID = 3


class DegenerateEmbeddingError(ValueError):
    """Raised when an operation would have to normalize a zero vector."""


@dataclass(frozen=True)
class Stroke:
    """Ordered polyline in normalized [0,1]^2 canvas coordinates."""

    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.points) < 2:
            raise ValueError("a stroke needs at least 2 points")
        clamped = tuple(
            (min(max(float(x), 0.0), 1.0), min(max(float(y), 0.0), 1.0))
            for x, y in self.points
        )
        object.__setattr__(self, "points", clamped)


@dataclass(frozen=True)
class StrokeSketch:
    """Vector sketch: ordered strokes plus the source canvas aspect ratio.

    May be empty (the "dropped sketch" case), which rasterizes to an
    all-white image.
    """

    strokes: tuple[Stroke, ...] = ()
    canvas_aspect: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "strokes", tuple(self.strokes))
        if self.canvas_aspect <= 0:
            raise ValueError("canvas_aspect must be positive")

    @property
    def is_empty(self) -> bool:
        return len(self.strokes) == 0

    def __len__(self) -> int:
        return len(self.strokes)


@dataclass(frozen=True)
class RasterImage:
    """H x W x 3 grid of intensities in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"expected HxWx3 pixels, got shape {px.shape}")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ValueError("pixel intensities must lie in [0, 1]")
        object.__setattr__(self, "pixels", px)

    @property
    def size(self) -> tuple[int, int]:
        return self.pixels.shape[0], self.pixels.shape[1]


@dataclass(frozen=True)
class Embedding:
    """Vector in the shared text/sketch/image space."""

    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "values", v)
        if self.normalized and abs(np.linalg.norm(v) - 1.0) > 1e-6:
            raise ValueError("embedding flagged normalized but has non-unit norm")

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class TokenSequence:
    """Caption as vocabulary ids, bracketed by BOS/EOS."""

    tokens: tuple[int, ...]

    def __post_init__(self):
        toks = tuple(int(t) for t in self.tokens)
        if len(toks) < 1:
            raise ValueError("token sequence must be non-empty")
        object.__setattr__(self, "tokens", toks)

    def __len__(self) -> int:
        return len(self.tokens)

    @classmethod
    def empty_text(cls) -> "TokenSequence":
        """The dropped-text query: BOS immediately followed by EOS."""
        return cls((BOS_ID, EOS_ID))


@dataclass(frozen=True)
class LabelSet:
    """Binary category indicator vector; all-zero is legal."""

    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels, dtype=np.float32).reshape(-1)
        if not np.all((lab == 0.0) | (lab == 1.0)):
            raise ValueError("labels must be binary")
        object.__setattr__(self, "labels", lab)

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class TrainingTuple:
    """One (image, sketch, caption, labels) training record."""

    image: RasterImage
    sketch: StrokeSketch
    caption: TokenSequence
    labels: LabelSet
    id: str


def normalize(e: np.ndarray) -> Embedding:
    """Project a raw vector onto the unit sphere, preserving direction.

    Raises ``DegenerateEmbeddingError`` on (numerically) zero input.
    """
    v = np.asarray(e, dtype=np.float64).reshape(-1)
    norm = float(np.linalg.norm(v))
    if norm < 1e-12:
        raise DegenerateEmbeddingError("cannot normalize a zero vector")
    return Embedding(values=v / norm, normalized=True)


def _draw_segment(canvas: np.ndarray, r0: int, c0: int, r1: int, c1: int,
                  width: int) -> None:
    """Bresenham line from (r0,c0) to (r1,c1), stamped with a width x width
    square brush. Pure integer arithmetic for bit-exact reproducibility."""
    size = canvas.shape[0]
    lo = -((width - 1) // 2)
    hi = width // 2
    dr = abs(r1 - r0)
    dc = abs(c1 - c0)
    sr = 1 if r0 < r1 else -1
    sc = 1 if c0 < c1 else -1
    err = dc - dr
    r, c = r0, c0
    while True:
        rmin = max(r + lo, 0)
        rmax = min(r + hi, size - 1)
        cmin = max(c + lo, 0)
        cmax = min(c + hi, size - 1)
        if rmin <= rmax and cmin <= cmax:
            canvas[rmin:rmax + 1, cmin:cmax + 1] = 0.0
        if r == r1 and c == c1:
            break
        e2 = 2 * err
        if e2 > -dr:
            err -= dr
            c += sc
        if e2 < dc:
            err += dc
            r += sr
    return


def rasterize(sketch: StrokeSketch, size: int, stroke_width: int = 2) -> RasterImage:
    """Draw black strokes on a white size x size canvas.

    Deterministic: anti-aliasing-free integer line drawing. The empty
    sketch yields the canonical all-white "dropped sketch" image.
    """
    if size <= 0:
        raise ValueError("size must be positive")
    gray = np.ones((size, size), dtype=np.float32)
    for stroke in sketch.strokes:
        pts = [(_to_px(y, size), _to_px(x, size)) for x, y in stroke.points]
        for (r0, c0), (r1, c1) in zip(pts[:-1], pts[1:]):
            _draw_segment(gray, r0, c0, r1, c1, stroke_width)
    return RasterImage(pixels=np.repeat(gray[:, :, None], 3, axis=2))


def _to_px(coord: float, size: int) -> int:
    """Map a normalized coordinate in [0,1] to a pixel index in [0, size-1]."""
    return min(int(coord * size), size - 1)

#!/usr/bin/env python3
"""Regenerate the frontend raster-parity fixture.

Rasterizes a scripted stroke sequence with the exact function the
retrieval service uses and dumps the binary grid, so the frontend test
can assert client-preview/server IoU without a running service:

    python3 scripts/export_raster_fixture.py
"""

import json
from pathlib import Path

from sketchquery.core import Stroke, StrokeSketch, rasterize

SIZE = 64
STROKE_WIDTH = 2

# A fixed drawing: box, diagonal, zig-zag, and an edge-clipping stroke.
SCRIPTED_STROKES = [
    [[0.1, 0.1], [0.9, 0.1], [0.9, 0.9], [0.1, 0.9], [0.1, 0.1]],
    [[0.15, 0.2], [0.85, 0.8]],
    [[0.2, 0.7], [0.35, 0.4], [0.5, 0.7], [0.65, 0.4], [0.8, 0.7]],
    [[0.0, 0.5], [0.3, 0.45], [1.0, 0.55]],
]


def main() -> int:
    sketch = StrokeSketch(tuple(
        Stroke(tuple(map(tuple, pts))) for pts in SCRIPTED_STROKES))
    raster = rasterize(sketch, SIZE, STROKE_WIDTH)
    dark = (raster.pixels[:, :, 0] == 0.0).astype(int)
    fixture = {
        "size": SIZE,
        "stroke_width": STROKE_WIDTH,
        "strokes": SCRIPTED_STROKES,
        "rows": ["".join(str(v) for v in row) for row in dark.tolist()],
    }
    out = (Path(__file__).resolve().parent.parent
           / "frontend" / "tests" / "fixtures" / "server_raster.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(fixture, indent=1))
    print(f"wrote {out} ({int(dark.sum())} dark pixels)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

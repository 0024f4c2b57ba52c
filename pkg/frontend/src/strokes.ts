/**
 * Stroke and sketch types plus lossless serialization.
 *
 * Coordinates are normalized to [0,1]^2 so the same sketch serves any
 * raster size; the JSON shape matches the retrieval service exactly:
 * {"canvas_aspect": number, "strokes": [[[x,y],...], ...]}.
 */

export type Point = readonly [number, number];

export interface Stroke {
  readonly points: readonly Point[];
}

export interface Sketch {
  readonly canvasAspect: number;
  readonly strokes: readonly Stroke[];
}

export interface SketchJson {
  canvas_aspect: number;
  strokes: number[][][];
}

const clamp01 = (v: number) => Math.min(Math.max(v, 0), 1);

export function makeStroke(points: readonly Point[]): Stroke | null {
  // single-point strokes are discarded
  if (points.length < 2) return null;
  return { points: points.map(([x, y]) => [clamp01(x), clamp01(y)] as Point) };
}

export function serializeSketch(strokes: readonly Stroke[],
                                canvasAspect = 1.0): SketchJson {
  return {
    canvas_aspect: canvasAspect,
    strokes: strokes.map((s) => s.points.map(([x, y]) => [x, y])),
  };
}

export function parseSketch(json: SketchJson): Sketch {
  if (!Array.isArray(json.strokes)) {
    throw new Error("strokes must be a list of point lists");
  }
  const strokes: Stroke[] = [];
  for (const pts of json.strokes) {
    if (!Array.isArray(pts)) throw new Error("stroke must be a point list");
    if (pts.length < 2) continue;
    strokes.push({ points: pts.map(([x, y]) => [clamp01(x), clamp01(y)] as Point) });
  }
  return { canvasAspect: json.canvas_aspect ?? 1.0, strokes };
}

/** SVG export for interoperability with vector sketch collections. */
export function sketchToSvg(strokes: readonly Stroke[], width = 256,
                            height = 256): string {
  const polylines = strokes.map((s) => {
    const pts = s.points
      .map(([x, y]) => `${(x * width).toFixed(2)},${(y * height).toFixed(2)}`)
      .join(" ");
    return `<polyline points="${pts}" fill="none" stroke="black" stroke-width="2"/>`;
  });
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}">` +
    polylines.join("") +
    `</svg>`
  );
}

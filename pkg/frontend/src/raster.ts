/**
 * Client-side preview rasterizer.
 *
 * This is a port of the server's integer line algorithm (Bresenham with a
 * square width stamp and floor coordinate mapping) so the preview the
 * user sees matches what the retrieval service encodes, pixel for pixel.
 */

import { Stroke } from "./strokes.js";

export type BinaryGrid = Uint8Array; // row-major, 1 = dark

const toPx = (coord: number, size: number) =>
  Math.min(Math.floor(coord * size), size - 1);

function drawSegment(grid: Uint8Array, size: number, r0: number, c0: number,
                     r1: number, c1: number, width: number): void {
  const lo = -Math.floor((width - 1) / 2);
  const hi = Math.floor(width / 2);
  const dr = Math.abs(r1 - r0);
  const dc = Math.abs(c1 - c0);
  const sr = r0 < r1 ? 1 : -1;
  const sc = c0 < c1 ? 1 : -1;
  let err = dc - dr;
  let r = r0;
  let c = c0;
  for (;;) {
    for (let rr = Math.max(r + lo, 0); rr <= Math.min(r + hi, size - 1); rr++) {
      for (let cc = Math.max(c + lo, 0); cc <= Math.min(c + hi, size - 1); cc++) {
        grid[rr * size + cc] = 1;
      }
    }
    if (r === r1 && c === c1) break;
    const e2 = 2 * err;
    if (e2 > -dr) {
      err -= dr;
      c += sc;
    }
    if (e2 < dc) {
      err += dc;
      r += sr;
    }
  }
}

export function rasterizeStrokes(strokes: readonly Stroke[], size: number,
                                 strokeWidth = 2): BinaryGrid {
  const grid = new Uint8Array(size * size);
  for (const stroke of strokes) {
    const px = stroke.points.map(([x, y]) =>
      [toPx(y, size), toPx(x, size)] as const);
    for (let i = 0; i + 1 < px.length; i++) {
      drawSegment(grid, size, px[i][0], px[i][1], px[i + 1][0], px[i + 1][1],
                  strokeWidth);
    }
  }
  return grid;
}

/** Intersection-over-union of dark pixels between two binary grids. */
export function gridIoU(a: BinaryGrid, b: BinaryGrid): number {
  if (a.length !== b.length) throw new Error("grid sizes differ");
  let inter = 0;
  let union = 0;
  for (let i = 0; i < a.length; i++) {
    const da = a[i] === 1;
    const db = b[i] === 1;
    if (da && db) inter++;
    if (da || db) union++;
  }
  return union === 0 ? 1.0 : inter / union;
}

import { describe, expect, it } from "vitest";

import { CanvasState } from "../src/canvas_state.js";
import { Point, Stroke } from "../src/strokes.js";

function randomPoints(rng: () => number, n: number): Point[] {
  return Array.from({ length: n }, () => [rng(), rng()] as Point);
}

/** Deterministic LCG so the property test is reproducible. */
function makeRng(seed: number): () => number {
  let s = seed >>> 0;
  return () => {
    s = (1664525 * s + 1013904223) >>> 0;
    return s / 2 ** 32;
  };
}

const strokeList = (state: CanvasState): Stroke[] => [...state.strokes];

describe("CanvasState basics", () => {
  it("commits multi-point strokes and discards single points", () => {
    const state = new CanvasState();
    expect(state.commitStroke([[0.5, 0.5]])).toBe(false);
    expect(state.strokes.length).toBe(0);
    expect(state.commitStroke([[0, 0.5], [1, 0.5]])).toBe(true);
    expect(state.strokes.length).toBe(1);
    expect(state.strokes[0].points[0]).toEqual([0, 0.5]);
  });

  it("clamps coordinates into the unit square", () => {
    const state = new CanvasState();
    state.commitStroke([[-0.2, 0.4], [1.3, 2.0]]);
    expect(state.strokes[0].points).toEqual([[0, 0.4], [1, 1]]);
  });

  it("undo after one stroke empties the canvas; redo restores it", () => {
    const state = new CanvasState();
    state.commitStroke([[0, 0], [1, 1]]);
    const before = strokeList(state);
    expect(state.undo()).toBe(true);
    expect(state.strokes.length).toBe(0);
    expect(state.redo()).toBe(true);
    expect(strokeList(state)).toEqual(before);
  });

  it("clear is undoable", () => {
    const state = new CanvasState();
    state.commitStroke([[0, 0], [1, 1]]);
    state.commitStroke([[0, 1], [1, 0]]);
    const before = strokeList(state);
    state.clear();
    expect(state.strokes.length).toBe(0);
    state.undo();
    expect(strokeList(state)).toEqual(before);
  });

  it("a new stroke clears the redo stack", () => {
    const state = new CanvasState();
    state.commitStroke([[0, 0], [1, 1]]);
    state.undo();
    expect(state.canRedo()).toBe(true);
    state.commitStroke([[0, 1], [1, 0]]);
    expect(state.canRedo()).toBe(false);
  });

  it("eraser removes whole strokes under the pointer", () => {
    const state = new CanvasState();
    state.commitStroke([[0.1, 0.1], [0.2, 0.1]]);
    state.commitStroke([[0.8, 0.8], [0.9, 0.9]]);
    expect(state.eraseAt(0.1, 0.1)).toBe(true);
    expect(state.strokes.length).toBe(1);
    expect(state.strokes[0].points[0]).toEqual([0.8, 0.8]);
    state.undo();
    expect(state.strokes.length).toBe(2);
  });
});

describe("undo/redo property", () => {
  it("undo and redo are exact inverses over 1000 random event sequences", () => {
    for (let trial = 0; trial < 1000; trial++) {
      const rng = makeRng(trial + 1);
      const state = new CanvasState();
      const history: Stroke[][] = [strokeList(state)];
      const events = 3 + Math.floor(rng() * 12);
      for (let e = 0; e < events; e++) {
        const roll = rng();
        if (roll < 0.45) {
          if (state.commitStroke(randomPoints(rng, 2 + Math.floor(rng() * 4)))) {
            history.push(strokeList(state));
          }
        } else if (roll < 0.6) {
          if (state.eraseAt(rng(), rng(), 0.2)) history.push(strokeList(state));
        } else if (roll < 0.7) {
          state.clear();
          history.push(strokeList(state));
        } else if (roll < 0.85) {
          if (state.undo()) history.pop();
          // after undo, current state must equal the previous history entry
          expect(strokeList(state)).toEqual(history[history.length - 1]);
        } else {
          const beforeRedo = strokeList(state);
          if (state.redo()) {
            history.push(strokeList(state));
            state.undo();
            expect(strokeList(state)).toEqual(beforeRedo);
            state.redo();
            history.pop();
            history.push(strokeList(state));
          }
        }
      }
      // a full unwind always reaches the empty initial state
      while (state.undo()) { /* drain */ }
      expect(state.strokes.length).toBe(0);
    }
  });
});

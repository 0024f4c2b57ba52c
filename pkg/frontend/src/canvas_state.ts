/**
 * Drawing state machine: committed strokes, undo/redo stacks, and the
 * active tool. All mutating operations snapshot the previous stroke list,
 * so undo followed by redo restores the exact stroke list, and clear is
 * itself undoable. The eraser removes whole strokes under the pointer.
 */

import { Point, Stroke, makeStroke } from "./strokes.js";

export type Tool = "draw" | "erase";

type Snapshot = readonly Stroke[];

export class CanvasState {
  private committed: Snapshot = [];
  private undoStack: Snapshot[] = [];
  private redoStack: Snapshot[] = [];
  tool: Tool = "draw";

  get strokes(): Snapshot {
    return this.committed;
  }

  private apply(next: Snapshot): void {
    this.undoStack.push(this.committed);
    this.redoStack = [];
    this.committed = next;
  }

  /** Commit a captured stroke; single-point strokes are discarded. */
  commitStroke(points: readonly Point[]): boolean {
    const stroke = makeStroke(points);
    if (stroke === null) return false;
    this.apply([...this.committed, stroke]);
    return true;
  }

  /** Remove every stroke with a point within `radius` of the pointer. */
  eraseAt(x: number, y: number, radius = 0.03): boolean {
    const keep = this.committed.filter(
      (s) => !s.points.some(([px, py]) => Math.hypot(px - x, py - y) <= radius),
    );
    if (keep.length === this.committed.length) return false;
    this.apply(keep);
    return true;
  }

  /** Empty the canvas; the previous state stays undoable. */
  clear(): void {
    this.apply([]);
  }

  canUndo(): boolean {
    return this.undoStack.length > 0;
  }

  canRedo(): boolean {
    return this.redoStack.length > 0;
  }

  undo(): boolean {
    const prev = this.undoStack.pop();
    if (prev === undefined) return false;
    this.redoStack.push(this.committed);
    this.committed = prev;
    return true;
  }

  redo(): boolean {
    const next = this.redoStack.pop();
    if (next === undefined) return false;
    this.undoStack.push(this.committed);
    this.committed = next;
    return true;
  }
}

/**
 * Memorization drawing session for sketch collection: the target image is
 * shown for a fixed 15 seconds with the canvas disabled, then hidden so
 * the participant draws from memory. The exported record bundles the
 * sketch JSON (service schema) with a free-text tag.
 */

import { Stroke, SketchJson, serializeSketch } from "./strokes.js";

export type SessionPhase = "idle" | "showing" | "drawing" | "done";

export interface ExportedRecord {
  target: string;
  sketch: SketchJson;
  tag: string;
}

export interface MemorizationOptions {
  durationMs?: number; // 15 seconds per the collection protocol
  setTimeoutFn?: (fn: () => void, ms: number) => unknown;
  onPhaseChange?: (phase: SessionPhase) => void;
}

export const MEMORIZATION_MS = 15_000;

export class MemorizationSession {
  phase: SessionPhase = "idle";
  readonly durationMs: number;
  private readonly setTimeoutFn: (fn: () => void, ms: number) => unknown;

  constructor(readonly targetImage: string,
              opts: MemorizationOptions = {}) {
    this.durationMs = opts.durationMs ?? MEMORIZATION_MS;
    this.setTimeoutFn = opts.setTimeoutFn ?? ((fn, ms) => setTimeout(fn, ms));
    this.onPhaseChange = opts.onPhaseChange;
  }

  private onPhaseChange?: (phase: SessionPhase) => void;

  private transition(phase: SessionPhase): void {
    this.phase = phase;
    this.onPhaseChange?.(phase);
  }

  /** Show the target and arm the exact-duration timer. */
  start(): void {
    if (this.phase !== "idle") throw new Error("session already started");
    this.transition("showing");
    this.setTimeoutFn(() => {
      if (this.phase === "showing") this.transition("drawing");
    }, this.durationMs);
  }

  /** Drawing is locked out while the target image is visible. */
  canvasEnabled(): boolean {
    return this.phase === "drawing";
  }

  imageVisible(): boolean {
    return this.phase === "showing";
  }

  exportRecord(strokes: readonly Stroke[], tag: string): ExportedRecord {
    if (this.phase !== "drawing") {
      throw new Error("can only export while drawing");
    }
    this.transition("done");
    return {
      target: this.targetImage,
      sketch: serializeSketch(strokes),
      tag,
    };
  }
}

import { describe, expect, it } from "vitest";

import { MEMORIZATION_MS, MemorizationSession } from "../src/memorization.js";

describe("memorization mode", () => {
  it("arms a timer for exactly 15 seconds", () => {
    const scheduled: number[] = [];
    const session = new MemorizationSession("img.png", {
      setTimeoutFn: (fn, ms) => {
        scheduled.push(ms);
        return 0;
      },
    });
    session.start();
    expect(scheduled).toEqual([MEMORIZATION_MS]);
    expect(MEMORIZATION_MS).toBe(15_000);
  });

  it("canvas is disabled while the target image is visible", () => {
    let fire: (() => void) | null = null;
    const session = new MemorizationSession("img.png", {
      setTimeoutFn: (fn) => {
        fire = fn as () => void;
        return 0;
      },
    });
    session.start();
    expect(session.imageVisible()).toBe(true);
    expect(session.canvasEnabled()).toBe(false);
    fire!();
    expect(session.imageVisible()).toBe(false);
    expect(session.canvasEnabled()).toBe(true);
  });

  it("exported record bundles schema-valid sketch JSON with the tag", () => {
    let fire: (() => void) | null = null;
    const session = new MemorizationSession("target.png", {
      setTimeoutFn: (fn) => {
        fire = fn as () => void;
        return 0;
      },
    });
    session.start();
    fire!();
    const record = session.exportRecord(
      [{ points: [[0.1, 0.1], [0.9, 0.9]] }], "dog park");
    expect(record.target).toBe("target.png");
    expect(record.tag).toBe("dog park");
    expect(record.sketch.canvas_aspect).toBe(1);
    expect(record.sketch.strokes).toEqual([[[0.1, 0.1], [0.9, 0.9]]]);
    expect(session.phase).toBe("done");
  });

  it("cannot export while the image is still showing", () => {
    const session = new MemorizationSession("t.png", {
      setTimeoutFn: () => 0,
    });
    session.start();
    expect(() => session.exportRecord([], "x")).toThrow();
  });

  it("cannot start twice", () => {
    const session = new MemorizationSession("t.png", { setTimeoutFn: () => 0 });
    session.start();
    expect(() => session.start()).toThrow();
  });
});

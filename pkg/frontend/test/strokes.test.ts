import { describe, expect, it } from "vitest";

import { StrokeStore, clipStroke, rasterizePreview } from "../src/strokes.js";
import type { Stroke } from "../src/strokes.js";

const W = 10;
const H = 10;

function stroke(label: number, points: [number, number][], radius = 1): Stroke {
  return { label, points, radius };
}

describe("StrokeStore", () => {
  it("undo restores the exact prior stroke set", () => {
    const store = new StrokeStore();
    store.add(stroke(0, [[2, 2], [4, 2]]), W, H);
    const before = store.strokes;
    store.add(stroke(1, [[5, 5]]), W, H);
    expect(store.size).toBe(2);
    store.undo();
    expect(store.strokes).toEqual(before);
    expect(store.strokes).toHaveLength(1);
  });

  it("undo at the initial empty state is a no-op", () => {
    const store = new StrokeStore();
    store.undo();
    expect(store.strokes).toEqual([]);
  });

  it("clear can itself be undone", () => {
    const store = new StrokeStore();
    store.add(stroke(0, [[1, 1]]), W, H);
    store.add(stroke(1, [[2, 2]]), W, H);
    store.clear();
    expect(store.size).toBe(0);
    store.undo();
    expect(store.size).toBe(2);
  });

  it("clips stroke points into the image rectangle", () => {
    const store = new StrokeStore();
    store.add(stroke(0, [[-3, 4], [25, 12]]), W, H);
    expect(store.strokes[0]!.points).toEqual([[0, 4], [9, 9]]);
  });

  it("rejects malformed strokes", () => {
    const store = new StrokeStore();
    expect(() => store.add(stroke(0, []), W, H)).toThrow(/at least one point/);
    expect(() => store.add(stroke(-1, [[1, 1]]), W, H)).toThrow(/nonnegative/);
    expect(() => store.add({ label: 0, points: [[1, 1]], radius: 0 }, W, H)).toThrow(/positive/);
  });
});

describe("clipStroke", () => {
  it("leaves in-bounds points untouched", () => {
    const s = clipStroke(stroke(2, [[3.5, 7.25]]), W, H);
    expect(s.points).toEqual([[3.5, 7.25]]);
    expect(s.label).toBe(2);
  });
});

describe("rasterizePreview", () => {
  it("marks unseeded pixels with -1", () => {
    const seeds = rasterizePreview([], W, H);
    expect(seeds.every((v) => v === -1)).toBe(true);
  });

  it("stamps a disk for a single-point stroke", () => {
    const seeds = rasterizePreview([stroke(3, [[5, 5]], 2)], W, H);
    expect(seeds[5 * W + 5]).toBe(3);
    expect(seeds[5 * W + 7]).toBe(3); // distance 2, on the rim
    expect(seeds[5 * W + 8]).toBe(-1); // distance 3, outside
    expect(seeds[3 * W + 5]).toBe(3);
    expect(seeds[2 * W + 2]).toBe(-1);
  });

  it("covers every pixel along a segment, not just the endpoints", () => {
    const seeds = rasterizePreview([stroke(1, [[1, 5], [8, 5]], 1)], W, H);
    for (let x = 1; x <= 8; x++) {
      expect(seeds[5 * W + x]).toBe(1);
    }
    expect(seeds[5 * W + 0]).toBe(1); // brushed by the radius-1 disk at x=1
    expect(seeds[0]).toBe(-1);
  });

  it("lets the later stroke win where labels overlap", () => {
    const seeds = rasterizePreview(
      [stroke(0, [[4, 4], [6, 4]], 1.5), stroke(1, [[5, 4]], 1)],
      W, H,
    );
    expect(seeds[4 * W + 5]).toBe(1);
    // pixels only the first stroke reaches keep its label
    expect(seeds[4 * W + 3]).toBe(0);
    expect(seeds[4 * W + 7]).toBe(0);
  });

  it("never writes outside the image", () => {
    const seeds = rasterizePreview([stroke(0, [[0, 0], [9, 9]], 4)], W, H);
    expect(seeds).toHaveLength(W * H);
    expect(seeds[0]).toBe(0);
  });
});

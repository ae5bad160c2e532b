import { describe, expect, it } from "vitest";

import { blendMask, grayToLabels, labelHistogram } from "../src/mask.js";
import { LABEL_COLORS, colorizeLabels, labelColor, labelCss } from "../src/palette.js";

describe("grayToLabels", () => {
  it("shifts stored values down by one, zero meaning unlabeled", () => {
    const labels = grayToLabels(Uint8Array.from([0, 1, 2, 7]));
    expect(Array.from(labels)).toEqual([-1, 0, 1, 6]);
  });
});

describe("blendMask", () => {
  it("interpolates linearly between image and label color", () => {
    const image = Uint8ClampedArray.from([100, 100, 100, 255]);
    blendMask(image, Int32Array.from([0]), 0.5);
    const [r, g, b] = labelColor(0);
    expect(image[0]).toBe(Math.round(50 + r / 2));
    expect(image[1]).toBe(Math.round(50 + g / 2));
    expect(image[2]).toBe(Math.round(50 + b / 2));
    expect(image[3]).toBe(255);
  });

  it("leaves unlabeled pixels untouched and clamps opacity", () => {
    const image = Uint8ClampedArray.from([10, 20, 30, 255, 10, 20, 30, 255]);
    blendMask(image, Int32Array.from([-1, 1]), 2.0);
    expect(Array.from(image.slice(0, 4))).toEqual([10, 20, 30, 255]);
    expect(Array.from(image.slice(4, 7))).toEqual(Array.from(labelColor(1)));
  });

  it("rejects a size mismatch", () => {
    expect(() => blendMask(new Uint8ClampedArray(8), new Int32Array(3), 0.5)).toThrow(/bytes/);
  });
});

describe("labelHistogram", () => {
  it("counts only labels inside the segment range", () => {
    const counts = labelHistogram(Int32Array.from([0, 0, 1, -1, 2, 9]), 3);
    expect(counts).toEqual([2, 1, 1]);
  });
});

describe("palette", () => {
  it("wraps around after the fixed colors run out", () => {
    expect(labelColor(0)).toEqual(LABEL_COLORS[0]);
    expect(labelColor(LABEL_COLORS.length)).toEqual(LABEL_COLORS[0]);
    expect(labelColor(LABEL_COLORS.length + 3)).toEqual(LABEL_COLORS[3]);
  });

  it("formats CSS colors", () => {
    const [r, g, b] = labelColor(4);
    expect(labelCss(4)).toBe(`rgb(${r}, ${g}, ${b})`);
  });

  it("colorizes labels to RGBA with transparent free pixels", () => {
    const rgba = colorizeLabels(Int32Array.from([-1, 2]), 0.5);
    expect(rgba).toHaveLength(8);
    expect(rgba[3]).toBe(0);
    expect(Array.from(rgba.slice(4, 7))).toEqual(Array.from(labelColor(2)));
    expect(rgba[7]).toBe(Math.round(0.5 * 255));
  });
});

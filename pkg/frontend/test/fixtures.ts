/** Deterministic test images, generated rather than checked in. */

import { encodeRgbPng } from "./png.js";

/** 32-bit linear congruential generator; same sequence on every run. */
export function makeLcg(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (Math.imul(state, 1664525) + 1013904223) >>> 0;
    return state >>> 24;
  };
}

/** Two-tone RGB image: dark left half, bright right half, plus a little
 * deterministic noise so neighbouring pixels are not bit-identical. */
export function twoToneImage(width: number, height: number, seed = 7): {
  png: Uint8Array;
  rgb: Uint8Array;
} {
  const next = makeLcg(seed);
  const rgb = new Uint8Array(width * height * 3);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const base = x < width / 2 ? 40 : 210;
      const offset = (y * width + x) * 3;
      for (let c = 0; c < 3; c++) {
        const noise = (next() % 21) - 10;
        rgb[offset + c] = Math.min(Math.max(base + noise, 0), 255);
      }
    }
  }
  return { png: encodeRgbPng(width, height, rgb), rgb };
}

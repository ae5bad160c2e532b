/** Mask decoding and overlay math.
 *
 * The service returns an 8-bit grayscale PNG whose pixel value is the
 * segment label plus one. Decoding the PNG itself is left to the host
 * (browser canvas, or a test helper); these functions handle the value
 * mapping and the alpha blend that paints the mask over the photo.
 */

import { labelColor } from "./palette.js";

/** Map stored gray values back to labels; 0 marks an unlabeled pixel. */
export function grayToLabels(gray: Uint8Array | Uint8ClampedArray): Int32Array {
  const labels = new Int32Array(gray.length);
  for (let i = 0; i < gray.length; i++) {
    labels[i] = gray[i]! - 1;
  }
  return labels;
}

/** Alpha-blend the label colors over an RGBA image, in place.
 * Pixels with a negative label are left untouched. */
export function blendMask(
  image: Uint8ClampedArray, labels: Int32Array, opacity: number,
): void {
  if (image.length !== labels.length * 4) {
    throw new Error(`image has ${image.length} bytes for ${labels.length} labels`);
  }
  const a = Math.min(Math.max(opacity, 0), 1);
  for (let i = 0; i < labels.length; i++) {
    const label = labels[i]!;
    if (label < 0) continue;
    const [r, g, b] = labelColor(label);
    const o = i * 4;
    image[o] = Math.round((1 - a) * image[o]! + a * r);
    image[o + 1] = Math.round((1 - a) * image[o + 1]! + a * g);
    image[o + 2] = Math.round((1 - a) * image[o + 2]! + a * b);
  }
}

/** Count how many pixels of each label appear in a decoded mask. */
export function labelHistogram(labels: Int32Array, k: number): number[] {
  const counts = new Array<number>(k).fill(0);
  for (const label of labels) {
    if (label >= 0 && label < k) counts[label]! += 1;
  }
  return counts;
}

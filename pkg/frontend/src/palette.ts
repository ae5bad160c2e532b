/** Fixed display palette, one RGB row per label, matching the colors the
 * service's own overlay renderer uses. Wraps around past ten labels. */
export const LABEL_COLORS: ReadonlyArray<readonly [number, number, number]> = [
  [230, 25, 75],
  [60, 180, 75],
  [255, 225, 25],
  [0, 130, 200],
  [245, 130, 48],
  [145, 30, 180],
  [70, 240, 240],
  [240, 50, 230],
  [210, 245, 60],
  [170, 110, 40],
];

export function labelColor(label: number): readonly [number, number, number] {
  const row = LABEL_COLORS[((label % LABEL_COLORS.length) + LABEL_COLORS.length) % LABEL_COLORS.length];
  if (row === undefined) throw new Error("empty palette");
  return row;
}

export function labelCss(label: number): string {
  const [r, g, b] = labelColor(label);
  return `rgb(${r}, ${g}, ${b})`;
}

/** Expand a per-pixel label array into RGBA bytes using the palette.
 * Labels below zero come out fully transparent. */
export function colorizeLabels(labels: Int32Array | Uint8Array, alpha: number): Uint8ClampedArray {
  const a = Math.round(Math.min(Math.max(alpha, 0), 1) * 255);
  const out = new Uint8ClampedArray(labels.length * 4);
  for (let i = 0; i < labels.length; i++) {
    const lab = labels[i]!;
    if (lab < 0) continue;
    const [r, g, b] = labelColor(lab);
    out[i * 4] = r;
    out[i * 4 + 1] = g;
    out[i * 4 + 2] = b;
    out[i * 4 + 3] = a;
  }
  return out;
}

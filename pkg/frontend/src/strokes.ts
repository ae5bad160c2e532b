/** Stroke state for the scribble canvas.
 *
 * Strokes are vector polylines with a brush radius, exactly what the
 * service consumes. The store keeps every past stroke set, so undo
 * restores the exact prior state, and the preview rasterizer mirrors the
 * server's later-stroke-wins stamping rule so what the user sees is what
 * the solver will be constrained by.
 */

export interface Stroke {
  readonly label: number;
  readonly points: ReadonlyArray<readonly [number, number]>;
  readonly radius: number;
}

function clamp(v: number, lo: number, hi: number): number {
  return Math.min(Math.max(v, lo), hi);
}

/** Clamp every point of a stroke into the image rectangle. */
export function clipStroke(stroke: Stroke, width: number, height: number): Stroke {
  return {
    label: stroke.label,
    radius: stroke.radius,
    points: stroke.points.map(
      ([x, y]) => [clamp(x, 0, width - 1), clamp(y, 0, height - 1)] as const,
    ),
  };
}

export class StrokeStore {
  private history: ReadonlyArray<readonly Stroke[]> = [[]];

  get strokes(): readonly Stroke[] {
    const top = this.history[this.history.length - 1];
    if (top === undefined) throw new Error("stroke history is empty");
    return top;
  }

  get size(): number {
    return this.strokes.length;
  }

  /** Append a stroke (clipped to the image); a new history entry is pushed
   * so a later undo restores exactly the set before this call. */
  add(stroke: Stroke, width: number, height: number): void {
    if (stroke.points.length === 0) throw new Error("stroke needs at least one point");
    if (stroke.label < 0) throw new Error("stroke label must be nonnegative");
    if (!(stroke.radius > 0)) throw new Error("stroke radius must be positive");
    this.history = [...this.history, [...this.strokes, clipStroke(stroke, width, height)]];
  }

  clear(): void {
    this.history = [...this.history, []];
  }

  /** Step back to the previous stroke set; no-op at the initial state. */
  undo(): void {
    if (this.history.length > 1) this.history = this.history.slice(0, -1);
  }
}

function stampDisk(
  seeds: Int32Array, width: number, height: number,
  cx: number, cy: number, radius: number, label: number,
): void {
  const x0 = Math.max(Math.floor(cx - radius), 0);
  const x1 = Math.min(Math.ceil(cx + radius), width - 1);
  const y0 = Math.max(Math.floor(cy - radius), 0);
  const y1 = Math.min(Math.ceil(cy + radius), height - 1);
  const r2 = radius * radius;
  for (let y = y0; y <= y1; y++) {
    for (let x = x0; x <= x1; x++) {
      if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r2) {
        seeds[y * width + x] = label;
      }
    }
  }
}

/** Per-pixel seed preview: -1 where unconstrained, else the stroke label.
 * Strokes are stamped in order along 0.5 px polyline steps, so where two
 * overlap the later one wins, the same rule the service applies. */
export function rasterizePreview(
  strokes: readonly Stroke[], width: number, height: number,
): Int32Array {
  const seeds = new Int32Array(width * height).fill(-1);
  for (const stroke of strokes) {
    const pts = stroke.points;
    for (let i = 0; i + 1 < pts.length; i++) {
      const [ax, ay] = pts[i]!;
      const [bx, by] = pts[i + 1]!;
      const steps = Math.ceil(Math.hypot(bx - ax, by - ay) / 0.5) + 1;
      for (let s = 0; s < steps; s++) {
        const t = steps === 1 ? 0 : s / (steps - 1);
        stampDisk(seeds, width, height,
          (1 - t) * ax + t * bx, (1 - t) * ay + t * by,
          stroke.radius, stroke.label);
      }
    }
    if (pts.length === 1) {
      const [x, y] = pts[0]!;
      stampDisk(seeds, width, height, x, y, stroke.radius, stroke.label);
    }
  }
  return seeds;
}

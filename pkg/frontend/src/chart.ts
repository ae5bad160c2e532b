/** Energy chart model: the service trace, verbatim.
 *
 * Each solve contributes one segment of (iteration, energy, bound) points
 * copied straight out of the response. Nothing is smoothed, resampled or
 * clipped here; the chart renderer draws exactly these numbers.
 */

import type { TraceRecord } from "./api.js";

export interface ChartSegment {
  readonly records: readonly TraceRecord[];
}

export class EnergyChartModel {
  private readonly all: ChartSegment[] = [];

  get segments(): readonly ChartSegment[] {
    return this.all;
  }

  appendSegment(records: readonly TraceRecord[]): void {
    this.all.push({ records: records.map((r) => ({ ...r })) });
  }

  clear(): void {
    this.all.length = 0;
  }

  /** All plotted energies in order, for axis scaling. */
  energyRange(): { min: number; max: number } | null {
    let min = Infinity;
    let max = -Infinity;
    for (const segment of this.all) {
      for (const record of segment.records) {
        min = Math.min(min, record.energy, record.bound);
        max = Math.max(max, record.energy, record.bound);
      }
    }
    return min <= max ? { min, max } : null;
  }
}

/** True when energies never rise within the segment, up to a relative
 * slack for floating-point noise in the reported sums. */
export function isNonIncreasing(
  records: readonly TraceRecord[], relTolerance = 1e-9,
): boolean {
  for (let i = 1; i < records.length; i++) {
    const prev = records[i - 1]!.energy;
    const cur = records[i]!.energy;
    const slack = relTolerance * Math.max(Math.abs(prev), Math.abs(cur), 1);
    if (cur > prev + slack) return false;
  }
  return true;
}

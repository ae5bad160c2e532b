/** Side-by-side comparison of two solver configurations.
 *
 * Each side gets its own fresh service session on the same image bytes,
 * so neither run warm-starts off the other and identical parameter sets
 * produce identical masks. A side that has not been run yet stays null
 * and the view renders a placeholder for it.
 */

import { ApiClient } from "./api.js";
import type { SolveResult } from "./api.js";
import type { SolveParams } from "./params.js";
import type { Stroke } from "./strokes.js";

export type Side = "a" | "b";

export interface SideRun {
  readonly params: SolveParams;
  readonly result: SolveResult;
  /** Solve calls issued before the service reported convergence. */
  readonly rounds: number;
}

/** Keep issuing solves on one session until the service reports
 * convergence, so the displayed energy is the configuration's fixed
 * point rather than an interactive-budget snapshot. */
export async function solveUntilConverged(
  api: ApiClient, sessionId: string,
  strokes: readonly Stroke[], params: SolveParams,
  maxRounds = 10,
): Promise<{ result: SolveResult; rounds: number }> {
  let result = await api.solve(sessionId, strokes, params);
  let rounds = 1;
  while (!result.converged && rounds < maxRounds) {
    result = await api.solve(sessionId, strokes, params);
    rounds += 1;
  }
  return { result, rounds };
}

export class CompareModel {
  private readonly runs: { a: SideRun | null; b: SideRun | null } = { a: null, b: null };

  constructor(private readonly api: ApiClient) {}

  get a(): SideRun | null {
    return this.runs.a;
  }

  get b(): SideRun | null {
    return this.runs.b;
  }

  async runSide(
    side: Side, image: Uint8Array, contentType: string,
    strokes: readonly Stroke[], params: SolveParams,
  ): Promise<SideRun> {
    const info = await this.api.createSession(image, contentType);
    const { result, rounds } = await solveUntilConverged(this.api, info.id, strokes, params);
    const run: SideRun = { params: { ...params }, result, rounds };
    this.runs[side] = run;
    return run;
  }

  clearSide(side: Side): void {
    this.runs[side] = null;
  }

  /** Difference of final energies (a minus b); null until both sides ran. */
  energyGap(): number | null {
    if (this.runs.a === null || this.runs.b === null) return null;
    return this.runs.a.result.energy.total - this.runs.b.result.energy.total;
  }
}

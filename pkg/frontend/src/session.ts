/** Session controller: one image, its strokes, and the solve lifecycle.
 *
 * The controller owns the single-in-flight rule (the UI disables its
 * solve button off the `busy` flag, and a concurrent call is rejected
 * here as well), keeps strokes intact across failed requests so retry is
 * a plain re-call, and records every successful solve so a session can be
 * replayed bit-for-bit later.
 */

import { ApiClient } from "./api.js";
import type { SessionInfo, SolveResult } from "./api.js";
import { EnergyChartModel } from "./chart.js";
import { DEFAULT_PARAMS } from "./params.js";
import type { SolveParams } from "./params.js";
import { StrokeStore } from "./strokes.js";
import type { Stroke } from "./strokes.js";

function cloneStroke(stroke: Stroke): Stroke {
  return {
    label: stroke.label,
    radius: stroke.radius,
    points: stroke.points.map(([x, y]) => [x, y] as const),
  };
}

export interface RecordedSolve {
  readonly strokes: readonly Stroke[];
  readonly params: SolveParams;
}

export interface RecordedSession {
  readonly contentType: string;
  readonly solves: readonly RecordedSolve[];
}

export class BusyError extends Error {
  constructor() {
    super("a solve is already in flight");
    this.name = "BusyError";
  }
}

export class SessionController {
  readonly strokes = new StrokeStore();
  readonly chart = new EnergyChartModel();
  params: SolveParams = { ...DEFAULT_PARAMS };

  private info: SessionInfo | null = null;
  private pending = false;
  private contentType = "";
  private readonly solveLog: RecordedSolve[] = [];

  lastResult: SolveResult | null = null;
  lastError: string | null = null;

  constructor(private readonly api: ApiClient) {}

  get sessionInfo(): SessionInfo | null {
    return this.info;
  }

  get busy(): boolean {
    return this.pending;
  }

  async open(image: Uint8Array, contentType: string): Promise<SessionInfo> {
    this.info = await this.api.createSession(image, contentType);
    this.contentType = contentType;
    this.solveLog.length = 0;
    this.chart.clear();
    this.lastResult = null;
    this.lastError = null;
    return this.info;
  }

  addStroke(stroke: Stroke): void {
    if (this.info === null) throw new Error("no open session");
    this.strokes.add(stroke, this.info.width, this.info.height);
  }

  /** Run one solve with the current strokes and params. Rejects with
   * BusyError while another solve is pending; on failure the strokes and
   * params are untouched, so calling again retries the same request. */
  async solve(): Promise<SolveResult> {
    if (this.info === null) throw new Error("no open session");
    if (this.pending) throw new BusyError();
    this.pending = true;
    this.lastError = null;
    const strokes = this.strokes.strokes.map(cloneStroke);
    const params: SolveParams = { ...this.params };
    try {
      const result = await this.api.solve(this.info.id, strokes, params);
      this.lastResult = result;
      this.chart.appendSegment(result.trace.records);
      this.solveLog.push({ strokes, params });
      return result;
    } catch (err) {
      this.lastError = err instanceof Error ? err.message : String(err);
      throw err;
    } finally {
      this.pending = false;
    }
  }

  /** Everything needed to reproduce this session against the service. */
  record(): RecordedSession {
    return {
      contentType: this.contentType,
      solves: this.solveLog.map((s) => ({
        params: { ...s.params },
        strokes: s.strokes.map(cloneStroke),
      })),
    };
  }
}

/** Re-run a recorded session from scratch: fresh service session on the
 * same image bytes, each solve reissued in order. Returns the last solve's
 * result, whose mask should match the original run byte for byte. */
export async function replaySession(
  api: ApiClient, image: Uint8Array, recorded: RecordedSession,
): Promise<SolveResult> {
  if (recorded.solves.length === 0) throw new Error("recorded session has no solves");
  const info = await api.createSession(image, recorded.contentType);
  let last: SolveResult | null = null;
  for (const solve of recorded.solves) {
    last = await api.solve(info.id, solve.strokes, solve.params);
  }
  return last!;
}

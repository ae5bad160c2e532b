/** Typed client for the segmentation service's /v1 endpoints.
 *
 * Every response is run through a zod schema before it reaches the UI, so
 * a service change or a proxy mangling a payload surfaces as a clear
 * error instead of NaN rendering. The fetch function is injectable for
 * tests.
 */

import { z } from "zod";
import type { Stroke } from "./strokes.js";
import type { SolveParams } from "./params.js";

export const SessionInfoSchema = z.object({
  id: z.string().min(1),
  height: z.number().int().positive(),
  width: z.number().int().positive(),
  downscaled: z.boolean(),
});
export type SessionInfo = z.infer<typeof SessionInfoSchema>;

export const EnergyBreakdownSchema = z.object({
  clustering: z.number(),
  potts: z.number(),
  label_cost: z.number(),
  robust_pn: z.number(),
  gamma: z.number(),
  total: z.number(),
});
export type EnergyBreakdown = z.infer<typeof EnergyBreakdownSchema>;

export const TraceRecordSchema = z.object({
  iteration: z.number().int(),
  energy: z.number(),
  bound: z.number(),
  labeling_hash: z.string(),
});
export type TraceRecord = z.infer<typeof TraceRecordSchema>;

export const SolveTraceSchema = z.object({
  meta: z.record(z.unknown()),
  records: z.array(TraceRecordSchema),
});
export type SolveTrace = z.infer<typeof SolveTraceSchema>;

export const SolveResultSchema = z.object({
  mask_png: z.string().min(1),
  height: z.number().int().positive(),
  width: z.number().int().positive(),
  k: z.number().int().min(2),
  energy: EnergyBreakdownSchema,
  iterations: z.number().int().nonnegative(),
  converged: z.boolean(),
  trace: SolveTraceSchema,
});
export type SolveResult = z.infer<typeof SolveResultSchema>;

export const TraceHistorySchema = z.object({
  segments: z.array(SolveTraceSchema),
});
export type TraceHistory = z.infer<typeof TraceHistorySchema>;

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function errorDetail(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { detail?: unknown };
    if (typeof body.detail === "string") return body.detail;
    if (body.detail !== undefined) return JSON.stringify(body.detail);
  } catch {
    // non-JSON error body; fall through to the status line
  }
  return `request failed with status ${response.status}`;
}

export class ApiClient {
  private readonly base: string;
  private readonly fetchFn: FetchLike;

  constructor(base: string, fetchFn?: FetchLike) {
    this.base = base.replace(/\/+$/, "");
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  async createSession(image: Uint8Array | ArrayBuffer, contentType: string): Promise<SessionInfo> {
    const body = image instanceof Uint8Array
      ? image.slice().buffer
      : image;
    const response = await this.fetchFn(`${this.base}/v1/sessions`, {
      method: "POST",
      headers: { "content-type": contentType },
      body,
    });
    if (!response.ok) throw new ApiError(response.status, await errorDetail(response));
    return SessionInfoSchema.parse(await response.json());
  }

  async solve(
    sessionId: string, strokes: readonly Stroke[], params: SolveParams,
  ): Promise<SolveResult> {
    const payload = {
      strokes: strokes.map((s) => ({
        label: s.label,
        points: s.points.map(([x, y]) => [x, y]),
        radius: s.radius,
      })),
      params,
    };
    const response = await this.fetchFn(
      `${this.base}/v1/sessions/${encodeURIComponent(sessionId)}/solve`,
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(payload),
      },
    );
    if (!response.ok) throw new ApiError(response.status, await errorDetail(response));
    return SolveResultSchema.parse(await response.json());
  }

  async trace(sessionId: string): Promise<TraceHistory> {
    const response = await this.fetchFn(
      `${this.base}/v1/sessions/${encodeURIComponent(sessionId)}/trace`,
    );
    if (!response.ok) throw new ApiError(response.status, await errorDetail(response));
    return TraceHistorySchema.parse(await response.json());
  }
}

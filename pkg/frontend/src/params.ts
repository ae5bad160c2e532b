/** Solver parameter schema and the kernel / bound flag grammars.
 *
 * The shapes here mirror the service's request validation, so a params
 * object that passes locally will not bounce off the API with a 422. No
 * numerics happen client-side: this file only decides whether a string or
 * number is well-formed before it is sent.
 */

import { z } from "zod";

export interface KernelSpec {
  readonly family: "gaussian" | "knn" | "adaptive";
  /** gaussian: sigma; knn: neighbour count; adaptive: diagonal shift. */
  readonly primary: number;
  /** knn: optional landmark sample count. */
  readonly sample?: number;
  /** adaptive: bandwidth transform. */
  readonly transform?: "const" | "log";
  /** adaptive: transform strength. */
  readonly alpha?: number;
}

export interface BoundSpec {
  readonly kind: "kernel" | "pseudo" | "spectral";
  /** spectral: embedding rank, omitted means the solver picks. */
  readonly rank?: number;
}

function asInt(text: string): number | null {
  if (!/^[0-9]+$/.test(text)) return null;
  return Number.parseInt(text, 10);
}

function asFloat(text: string): number | null {
  if (text.trim() === "") return null;
  const v = Number(text);
  return Number.isFinite(v) ? v : null;
}

/** Parse "gaussian:SIGMA", "knn:K[,SAMPLE]" or
 * "adaptive:DELTA[,TRANSFORM[,ALPHA]]"; null when malformed. */
export function parseKernel(text: string): KernelSpec | null {
  const sep = text.indexOf(":");
  if (sep < 0) return null;
  const family = text.slice(0, sep);
  const args = text.slice(sep + 1).split(",");
  if (family === "gaussian") {
    if (args.length !== 1) return null;
    const sigma = asFloat(args[0]!);
    if (sigma === null || sigma <= 0) return null;
    return { family: "gaussian", primary: sigma };
  }
  if (family === "knn") {
    if (args.length < 1 || args.length > 2) return null;
    const k = asInt(args[0]!);
    if (k === null || k < 1) return null;
    if (args.length === 1) return { family: "knn", primary: k };
    const sample = asInt(args[1]!);
    if (sample === null || sample < 1) return null;
    return { family: "knn", primary: k, sample };
  }
  if (family === "adaptive") {
    if (args.length < 1 || args.length > 3) return null;
    const delta = asFloat(args[0]!);
    if (delta === null || delta < 0) return null;
    if (args.length === 1) return { family: "adaptive", primary: delta };
    const transform = args[1]!;
    if (transform !== "const" && transform !== "log") return null;
    if (args.length === 2) return { family: "adaptive", primary: delta, transform };
    const alpha = asFloat(args[2]!);
    if (alpha === null) return null;
    return { family: "adaptive", primary: delta, transform, alpha };
  }
  return null;
}

/** Parse "kernel", "pseudo" or "spectral[:M]"; null when malformed. */
export function parseBound(text: string): BoundSpec | null {
  if (text === "kernel" || text === "pseudo") return { kind: text };
  if (text === "spectral") return { kind: "spectral" };
  if (text.startsWith("spectral:")) {
    const rank = asInt(text.slice("spectral:".length));
    if (rank === null || rank < 1) return null;
    return { kind: "spectral", rank };
  }
  return null;
}

export const SolveParamsSchema = z.object({
  objective: z.enum(["aa", "ac", "nc"]),
  kernel: z.string().refine((s) => parseKernel(s) !== null, {
    message: "expected gaussian:SIGMA, knn:K[,SAMPLE] or adaptive:DELTA[,TRANSFORM[,ALPHA]]",
  }),
  bound: z.string().refine((s) => parseBound(s) !== null, {
    message: "expected kernel, pseudo or spectral[:M]",
  }),
  gamma: z.number().nonnegative(),
  k: z.number().int().min(2).max(254),
  beta: z.number().nonnegative(),
  smoothness: z.enum(["contrast", "length"]),
  seed: z.number().int(),
});

export type SolveParams = z.infer<typeof SolveParamsSchema>;

export const DEFAULT_PARAMS: SolveParams = {
  objective: "aa",
  kernel: "knn:100,50",
  bound: "kernel",
  gamma: 1.0,
  k: 2,
  beta: 0.1,
  smoothness: "contrast",
  seed: 0,
};

/** Validate a candidate params object; returns the issues when invalid. */
export function validateParams(
  candidate: unknown,
): { ok: true; params: SolveParams } | { ok: false; issues: string[] } {
  const parsed = SolveParamsSchema.safeParse(candidate);
  if (parsed.success) return { ok: true, params: parsed.data };
  return {
    ok: false,
    issues: parsed.error.issues.map((i) => `${i.path.join(".")}: ${i.message}`),
  };
}

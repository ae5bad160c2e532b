import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { CompareModel, solveUntilConverged } from "../src/compare.js";
import { DEFAULT_PARAMS } from "../src/params.js";
import type { SolveParams } from "../src/params.js";

/** Deterministic fake service: the mask depends only on the solve
 * payload, and each session create gets a fresh id. Convergence flags are
 * popped from a queue so retry loops can be scripted. */
function fakeService(convergedQueue: boolean[] = []) {
  let sessions = 0;
  const fetchFn = async (url: string, init?: RequestInit): Promise<Response> => {
    if (url.endsWith("/v1/sessions")) {
      sessions += 1;
      return new Response(
        JSON.stringify({ id: `s${sessions}`, height: 8, width: 8, downscaled: false }),
        { status: 201 },
      );
    }
    const payload = JSON.parse(init?.body as string) as { params: SolveParams; strokes: unknown[] };
    const fingerprint = Buffer.from(
      JSON.stringify([payload.params, payload.strokes.length]),
    ).toString("base64");
    const total = -payload.params.gamma - (payload.params.bound === "pseudo" ? 0.5 : 0);
    const converged = convergedQueue.length > 0 ? convergedQueue.shift()! : true;
    return new Response(JSON.stringify({
      mask_png: fingerprint,
      height: 8,
      width: 8,
      k: payload.params.k,
      energy: { clustering: total, potts: 0, label_cost: 0, robust_pn: 0, gamma: payload.params.gamma, total },
      iterations: 3,
      converged,
      trace: { meta: {}, records: [{ iteration: 0, energy: total, bound: total, labeling_hash: "h" }] },
    }), { status: 200 });
  };
  return { fetchFn, sessionCount: () => sessions };
}

const IMAGE = new Uint8Array(16);

describe("CompareModel", () => {
  it("gives each side its own session and identical params identical masks", async () => {
    const service = fakeService();
    const model = new CompareModel(new ApiClient("http://x", service.fetchFn));
    const a = await model.runSide("a", IMAGE, "image/png", [], DEFAULT_PARAMS);
    const b = await model.runSide("b", IMAGE, "image/png", [], DEFAULT_PARAMS);
    expect(service.sessionCount()).toBe(2);
    expect(a.result.mask_png).toBe(b.result.mask_png);
    expect(model.energyGap()).toBe(0);
  });

  it("reports the displayed energy difference between configurations", async () => {
    const model = new CompareModel(new ApiClient("http://x", fakeService().fetchFn));
    await model.runSide("a", IMAGE, "image/png", [], { ...DEFAULT_PARAMS, bound: "kernel" });
    await model.runSide("b", IMAGE, "image/png", [], { ...DEFAULT_PARAMS, bound: "pseudo" });
    // the fake gives the pseudo bound a strictly lower final energy
    expect(model.a!.result.energy.total).toBeGreaterThan(model.b!.result.energy.total);
    expect(model.energyGap()).toBeCloseTo(0.5, 12);
  });

  it("leaves a missing side null with no gap instead of failing", async () => {
    const model = new CompareModel(new ApiClient("http://x", fakeService().fetchFn));
    await model.runSide("a", IMAGE, "image/png", [], DEFAULT_PARAMS);
    expect(model.a).not.toBeNull();
    expect(model.b).toBeNull();
    expect(model.energyGap()).toBeNull();
    model.clearSide("a");
    expect(model.a).toBeNull();
  });
});

describe("solveUntilConverged", () => {
  it("reissues solves until the service reports convergence", async () => {
    const service = fakeService([false, false, true]);
    const api = new ApiClient("http://x", service.fetchFn);
    const info = await api.createSession(IMAGE, "image/png");
    const { result, rounds } = await solveUntilConverged(api, info.id, [], DEFAULT_PARAMS);
    expect(rounds).toBe(3);
    expect(result.converged).toBe(true);
  });

  it("stops at the round cap when convergence never arrives", async () => {
    const service = fakeService([false, false, false, false, false]);
    const api = new ApiClient("http://x", service.fetchFn);
    const info = await api.createSession(IMAGE, "image/png");
    const { result, rounds } = await solveUntilConverged(api, info.id, [], DEFAULT_PARAMS, 4);
    expect(rounds).toBe(4);
    expect(result.converged).toBe(false);
  });
});

/** Browser entry point: canvas layers, parameter panel, solve loop.
 *
 * All segmentation math lives behind the HTTP API; this file only draws
 * what the service returns. Three stacked canvases keep concerns apart:
 * the photo at the bottom, the solved mask in the middle (CSS opacity
 * drives the overlay slider), and the vector strokes on top so seed
 * scribbles stay visible over any mask.
 */

import { ApiClient, ApiError } from "./api.js";
import type { SolveResult } from "./api.js";
import { EnergyChartModel, isNonIncreasing } from "./chart.js";
import { CompareModel } from "./compare.js";
import type { Side } from "./compare.js";
import { grayToLabels } from "./mask.js";
import { colorizeLabels, labelCss } from "./palette.js";
import { validateParams, DEFAULT_PARAMS } from "./params.js";
import { SessionController, replaySession, BusyError } from "./session.js";
import type { Stroke } from "./strokes.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

// served next to the API by default; "?api=http://host:port" points the UI
// at a service running on another origin (the service allows cross-origin use)
const apiBase = new URLSearchParams(window.location.search).get("api") ?? window.location.origin;
const api = new ApiClient(apiBase);
const controller = new SessionController(api);
const compare = new CompareModel(api);

const imageCanvas = el<HTMLCanvasElement>("layer-image");
const maskCanvas = el<HTMLCanvasElement>("layer-mask");
const strokeCanvas = el<HTMLCanvasElement>("layer-strokes");
const chartCanvas = el<HTMLCanvasElement>("energy-chart");
const solveButton = el<HTMLButtonElement>("solve");
const undoButton = el<HTMLButtonElement>("undo");
const clearButton = el<HTMLButtonElement>("clear-strokes");
const replayButton = el<HTMLButtonElement>("replay");
const statusLine = el<HTMLDivElement>("status");
const toastBox = el<HTMLDivElement>("toast");
const issuesBox = el<HTMLDivElement>("param-issues");
const energyBox = el<HTMLDivElement>("energy-readout");

let imageBytes: Uint8Array | null = null;
let imageContentType = "";
let imageBitmap: ImageBitmap | null = null;
let activeLabel = 0;
let brushRadius = 2.0;
let drawing: { label: number; radius: number; points: [number, number][] } | null = null;

// ---------------------------------------------------------------- params

const paramInputs = {
  objective: el<HTMLSelectElement>("param-objective"),
  kernel: el<HTMLInputElement>("param-kernel"),
  bound: el<HTMLInputElement>("param-bound"),
  gamma: el<HTMLInputElement>("param-gamma"),
  k: el<HTMLInputElement>("param-k"),
  beta: el<HTMLInputElement>("param-beta"),
  smoothness: el<HTMLSelectElement>("param-smoothness"),
  seed: el<HTMLInputElement>("param-seed"),
};

function readParamsFromPanel(): boolean {
  const candidate = {
    objective: paramInputs.objective.value,
    kernel: paramInputs.kernel.value.trim(),
    bound: paramInputs.bound.value.trim(),
    gamma: Number(paramInputs.gamma.value),
    k: Number(paramInputs.k.value),
    beta: Number(paramInputs.beta.value),
    smoothness: paramInputs.smoothness.value,
    seed: Number(paramInputs.seed.value),
  };
  const checked = validateParams(candidate);
  if (checked.ok) {
    controller.params = checked.params;
    issuesBox.textContent = "";
    rebuildLabelButtons(checked.params.k);
    updateControls();
    return true;
  }
  issuesBox.textContent = checked.issues.join("; ");
  updateControls();
  return false;
}

function writeParamsToPanel(): void {
  paramInputs.objective.value = controller.params.objective;
  paramInputs.kernel.value = controller.params.kernel;
  paramInputs.bound.value = controller.params.bound;
  paramInputs.gamma.value = String(controller.params.gamma);
  paramInputs.k.value = String(controller.params.k);
  paramInputs.beta.value = String(controller.params.beta);
  paramInputs.smoothness.value = controller.params.smoothness;
  paramInputs.seed.value = String(controller.params.seed);
}

for (const input of Object.values(paramInputs)) {
  input.addEventListener("change", readParamsFromPanel);
}

// ---------------------------------------------------------------- labels

function rebuildLabelButtons(k: number): void {
  const bar = el<HTMLDivElement>("label-bar");
  bar.textContent = "";
  if (activeLabel >= k) activeLabel = 0;
  for (let label = 0; label < k; label++) {
    const button = document.createElement("button");
    button.textContent = String(label);
    button.style.background = labelCss(label);
    button.className = label === activeLabel ? "label-btn active" : "label-btn";
    button.addEventListener("click", () => {
      activeLabel = label;
      rebuildLabelButtons(k);
    });
    bar.appendChild(button);
  }
}

el<HTMLInputElement>("brush-radius").addEventListener("input", (event) => {
  brushRadius = Number((event.target as HTMLInputElement).value);
});

el<HTMLInputElement>("mask-opacity").addEventListener("input", (event) => {
  maskCanvas.style.opacity = (event.target as HTMLInputElement).value;
});

// ---------------------------------------------------------------- layers

function redrawImage(): void {
  const ctx = imageCanvas.getContext("2d");
  if (ctx === null || imageBitmap === null) return;
  ctx.clearRect(0, 0, imageCanvas.width, imageCanvas.height);
  ctx.drawImage(imageBitmap, 0, 0, imageCanvas.width, imageCanvas.height);
}

function redrawStrokes(): void {
  const ctx = strokeCanvas.getContext("2d");
  if (ctx === null) return;
  ctx.clearRect(0, 0, strokeCanvas.width, strokeCanvas.height);
  const pending = drawing === null ? [] : [drawing as Stroke];
  for (const stroke of [...controller.strokes.strokes, ...pending]) {
    ctx.strokeStyle = labelCss(stroke.label);
    ctx.fillStyle = ctx.strokeStyle;
    ctx.lineWidth = stroke.radius * 2;
    ctx.lineCap = "round";
    ctx.lineJoin = "round";
    const first = stroke.points[0];
    if (first === undefined) continue;
    if (stroke.points.length === 1) {
      ctx.beginPath();
      ctx.arc(first[0], first[1], stroke.radius, 0, 2 * Math.PI);
      ctx.fill();
      continue;
    }
    ctx.beginPath();
    ctx.moveTo(first[0], first[1]);
    for (const [x, y] of stroke.points.slice(1)) ctx.lineTo(x, y);
    ctx.stroke();
  }
}

async function drawMask(result: SolveResult, target: HTMLCanvasElement): Promise<void> {
  const gray = await decodeMaskPng(result.mask_png, result.width, result.height);
  const labels = grayToLabels(gray);
  const rgba = colorizeLabels(labels, 1.0);
  target.width = result.width;
  target.height = result.height;
  const ctx = target.getContext("2d");
  if (ctx === null) return;
  ctx.putImageData(new ImageData(new Uint8ClampedArray(rgba), result.width, result.height), 0, 0);
}

/** Decode the base64 mask PNG through an offscreen canvas; the PNG is
 * grayscale so any one channel carries the label values. */
async function decodeMaskPng(maskB64: string, width: number, height: number): Promise<Uint8Array> {
  const image = new Image();
  const loaded = new Promise<void>((resolve, reject) => {
    image.onload = () => resolve();
    image.onerror = () => reject(new Error("mask PNG failed to decode"));
  });
  image.src = `data:image/png;base64,${maskB64}`;
  await loaded;
  const scratch = document.createElement("canvas");
  scratch.width = width;
  scratch.height = height;
  const ctx = scratch.getContext("2d");
  if (ctx === null) throw new Error("2d context unavailable");
  ctx.drawImage(image, 0, 0);
  const data = ctx.getImageData(0, 0, width, height).data;
  const gray = new Uint8Array(width * height);
  for (let i = 0; i < gray.length; i++) gray[i] = data[i * 4]!;
  return gray;
}

// ---------------------------------------------------------------- input

function canvasPoint(event: PointerEvent): [number, number] {
  const rect = strokeCanvas.getBoundingClientRect();
  const x = ((event.clientX - rect.left) / rect.width) * strokeCanvas.width;
  const y = ((event.clientY - rect.top) / rect.height) * strokeCanvas.height;
  return [x, y];
}

strokeCanvas.addEventListener("pointerdown", (event) => {
  if (controller.sessionInfo === null) return;
  strokeCanvas.setPointerCapture(event.pointerId);
  drawing = { label: activeLabel, radius: brushRadius, points: [canvasPoint(event)] };
  redrawStrokes();
});

strokeCanvas.addEventListener("pointermove", (event) => {
  if (drawing === null) return;
  drawing.points.push(canvasPoint(event));
  redrawStrokes();
});

strokeCanvas.addEventListener("pointerup", () => {
  if (drawing === null) return;
  controller.addStroke(drawing);
  drawing = null;
  redrawStrokes();
  updateControls();
});

undoButton.addEventListener("click", () => {
  controller.strokes.undo();
  redrawStrokes();
  updateControls();
});

clearButton.addEventListener("click", () => {
  controller.strokes.clear();
  redrawStrokes();
  updateControls();
});

// ---------------------------------------------------------------- upload

el<HTMLInputElement>("image-file").addEventListener("change", async (event) => {
  const input = event.target as HTMLInputElement;
  const file = input.files?.[0];
  if (file === undefined) return;
  try {
    const bytes = new Uint8Array(await file.arrayBuffer());
    const info = await controller.open(bytes, file.type || "image/png");
    imageBytes = bytes;
    imageContentType = file.type || "image/png";
    imageBitmap = await createImageBitmap(file);
    for (const canvas of [imageCanvas, maskCanvas, strokeCanvas]) {
      canvas.width = info.width;
      canvas.height = info.height;
    }
    redrawImage();
    redrawStrokes();
    drawChart();
    statusLine.textContent = info.downscaled
      ? `session ${info.id} (${info.width}x${info.height}, downscaled)`
      : `session ${info.id} (${info.width}x${info.height})`;
  } catch (err) {
    showToast(describeError(err), false);
  }
  updateControls();
});

// ---------------------------------------------------------------- solve

function describeError(err: unknown): string {
  if (err instanceof ApiError) return `service error ${err.status}: ${err.message}`;
  if (err instanceof Error) return err.message;
  return String(err);
}

function showToast(message: string, offerRetry: boolean): void {
  toastBox.textContent = "";
  const text = document.createElement("span");
  text.textContent = message;
  toastBox.appendChild(text);
  if (offerRetry) {
    const retry = document.createElement("button");
    retry.textContent = "retry";
    retry.addEventListener("click", () => {
      toastBox.classList.remove("visible");
      void runSolve();
    });
    toastBox.appendChild(retry);
  }
  toastBox.classList.add("visible");
  if (!offerRetry) {
    setTimeout(() => toastBox.classList.remove("visible"), 6000);
  }
}

async function runSolve(): Promise<void> {
  if (!readParamsFromPanel()) return;
  updateControls();
  try {
    const result = await controller.solve();
    await drawMask(result, maskCanvas);
    drawChart();
    const parts = result.energy;
    energyBox.textContent =
      `total ${parts.total.toFixed(6)} | clustering ${parts.clustering.toFixed(6)}` +
      ` | smoothness ${parts.potts.toFixed(6)} | labels ${parts.label_cost.toFixed(6)}` +
      ` | ${result.converged ? "converged" : `iteration budget hit (${result.iterations})`}`;
    if (!isNonIncreasing(result.trace.records)) {
      showToast("energy rose during the solve; please report this trace", false);
    }
  } catch (err) {
    if (!(err instanceof BusyError)) {
      showToast(describeError(err), true);
    }
  } finally {
    updateControls();
  }
}

solveButton.addEventListener("click", () => void runSolve());

replayButton.addEventListener("click", async () => {
  if (imageBytes === null || controller.lastResult === null) return;
  try {
    const replayed = await replaySession(api, imageBytes, controller.record());
    const same = replayed.mask_png === controller.lastResult.mask_png;
    showToast(same ? "replay reproduced the mask exactly" : "replay diverged from the live mask", false);
  } catch (err) {
    showToast(describeError(err), false);
  }
});

function updateControls(): void {
  const ready = controller.sessionInfo !== null && !controller.busy;
  solveButton.disabled = !ready || issuesBox.textContent !== "";
  replayButton.disabled = controller.busy || controller.lastResult === null;
  undoButton.disabled = controller.strokes.size === 0;
  clearButton.disabled = controller.strokes.size === 0;
  solveButton.textContent = controller.busy ? "solving..." : "solve";
}

// ---------------------------------------------------------------- chart

function drawChart(): void {
  const ctx = chartCanvas.getContext("2d");
  if (ctx === null) return;
  ctx.clearRect(0, 0, chartCanvas.width, chartCanvas.height);
  const range = controller.chart.energyRange();
  if (range === null) return;
  const pad = 8;
  const w = chartCanvas.width - 2 * pad;
  const h = chartCanvas.height - 2 * pad;
  const span = range.max - range.min || 1;
  const total = controller.chart.segments.reduce((n, s) => n + s.records.length, 0);
  const toY = (e: number): number => pad + h * (1 - (e - range.min) / span);
  let index = 0;
  for (const segment of controller.chart.segments) {
    if (index > 0) {
      const x = pad + (w * (index - 0.5)) / Math.max(total - 1, 1);
      ctx.strokeStyle = "#8884";
      ctx.beginPath();
      ctx.moveTo(x, pad);
      ctx.lineTo(x, pad + h);
      ctx.stroke();
    }
    for (const [key, style] of [["bound", "#999"], ["energy", "#d33"]] as const) {
      ctx.strokeStyle = style;
      ctx.setLineDash(key === "bound" ? [4, 3] : []);
      ctx.beginPath();
      segment.records.forEach((record, i) => {
        const x = pad + (w * (index + i)) / Math.max(total - 1, 1);
        const y = toY(record[key]);
        if (i === 0) ctx.moveTo(x, y);
        else ctx.lineTo(x, y);
      });
      ctx.stroke();
      ctx.setLineDash([]);
    }
    index += segment.records.length;
  }
}

// ---------------------------------------------------------------- compare

async function runCompareSide(side: Side): Promise<void> {
  if (imageBytes === null) return;
  if (!readParamsFromPanel()) return;
  const button = el<HTMLButtonElement>(`compare-run-${side}`);
  button.disabled = true;
  try {
    const run = await compare.runSide(
      side, imageBytes, imageContentType, controller.strokes.strokes, controller.params,
    );
    await drawMask(run.result, el<HTMLCanvasElement>(`compare-${side}`));
    el<HTMLDivElement>(`compare-${side}-caption`).textContent =
      `${run.params.objective} / ${run.params.bound}: total ${run.result.energy.total.toFixed(6)}` +
      ` after ${run.rounds} round${run.rounds === 1 ? "" : "s"}`;
  } catch (err) {
    showToast(describeError(err), false);
  } finally {
    button.disabled = false;
  }
  const gap = compare.energyGap();
  el<HTMLDivElement>("compare-gap").textContent =
    gap === null ? "run both sides to compare energies" : `energy gap (A - B): ${gap.toFixed(6)}`;
}

el<HTMLButtonElement>("compare-run-a").addEventListener("click", () => void runCompareSide("a"));
el<HTMLButtonElement>("compare-run-b").addEventListener("click", () => void runCompareSide("b"));

// ---------------------------------------------------------------- boot

controller.params = { ...DEFAULT_PARAMS };
writeParamsToPanel();
rebuildLabelButtons(controller.params.k);
updateControls();
statusLine.textContent = "load an image to begin";

"""HTTP sessions for interactive scribble segmentation.

A session wraps one uploaded image. Each solve call carries the full stroke
set and the parameter snapshot; the server rasterizes strokes, enforces them
as hard constraints, and continues from the previous labeling when the label
count allows, so repeated solves keep descending. Solves are capped at a few
outer iterations per request to stay interactive; the client simply calls
again to continue. Everything lives in process memory with a TTL, one lock
per session.
"""

from __future__ import annotations

import base64
import io
import threading
import time
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from PIL import Image, UnidentifiedImageError
from pydantic import BaseModel, Field

from .cli import parse_bound, parse_kernel
from .model import JointEnergySpec, Labeling
from .objectives import eval_joint
from .optimize import Schedule, initial_labeling, kernel_cut, pseudo_bound_cut, spectral_cut
from .segmentation import Stroke, affinity_from_policy, contrast_potts, image_features, rasterize_strokes

__all__ = ["create_app", "app"]

MAX_PIXELS = 200_000
MAX_UPLOAD_BYTES = 16 * 1024 * 1024
SESSION_TTL_SECONDS = 3600.0
SOLVE_OUTER_ITERS = 3

_ACCEPTED_TYPES = {"image/png": "PNG", "image/jpeg": "JPEG"}


class StrokeIn(BaseModel):
    label: int = Field(ge=0)
    points: list[tuple[float, float]] = Field(min_length=1)
    radius: float = Field(default=2.0, gt=0)


class SolveParams(BaseModel):
    objective: str = Field(default="aa", pattern="^(aa|ac|nc)$")
    kernel: str = "knn:100,50"
    bound: str = "kernel"
    gamma: float = Field(default=1.0, ge=0)
    k: int = Field(default=2, ge=2, le=254)
    beta: float = Field(default=0.1, ge=0)
    smoothness: str = Field(default="contrast", pattern="^(contrast|length)$")
    seed: int = 0

    def cache_key(self) -> tuple:
        return (self.kernel, self.beta, self.seed)


class SolveRequest(BaseModel):
    strokes: list[StrokeIn] = Field(default_factory=list)
    params: SolveParams = Field(default_factory=SolveParams)


@dataclass
class _Session:
    image: np.ndarray
    height: int
    width: int
    created: float
    last_used: float
    lock: threading.Lock = field(default_factory=threading.Lock)
    datasets: dict = field(default_factory=dict)     # beta -> Dataset
    affinities: dict = field(default_factory=dict)   # (kernel, beta, seed) -> matrix
    potts: dict = field(default_factory=dict)        # smoothness -> PottsEdges
    labeling: Labeling | None = None
    segments: list = field(default_factory=list)     # one trace dict per solve


def _downscale(img: Image.Image, max_pixels: int) -> Image.Image:
    w, h = img.size
    if w * h <= max_pixels:
        return img
    scale = (max_pixels / (w * h)) ** 0.5
    return img.resize((max(int(w * scale), 1), max(int(h * scale), 1)),
                      Image.LANCZOS)


def _mask_base64(labeling: Labeling, height: int, width: int) -> str:
    arr = (labeling.labels + 1).astype(np.uint8).reshape(height, width)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="L").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _jsonable(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    return value


def _trace_payload(trace) -> dict:
    return {
        "meta": _jsonable(trace.meta),
        "records": [
            {
                "iteration": int(r.iteration),
                "energy": float(r.energy),
                "bound": float(r.bound),
                "labeling_hash": r.labeling_hash,
            }
            for r in trace.records
        ],
    }


def create_app(
    max_pixels: int = MAX_PIXELS,
    max_upload_bytes: int = MAX_UPLOAD_BYTES,
    ttl_seconds: float = SESSION_TTL_SECONDS,
    solve_outer_iters: int = SOLVE_OUTER_ITERS,
) -> FastAPI:
    app = FastAPI(title="scribble segmentation service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    sessions: dict[str, _Session] = {}
    store_lock = threading.Lock()

    def _purge(now: float) -> None:
        with store_lock:
            dead = [sid for sid, s in sessions.items()
                    if now - s.last_used > ttl_seconds]
            for sid in dead:
                del sessions[sid]

    def _get(sid: str) -> _Session:
        _purge(time.monotonic())
        with store_lock:
            session = sessions.get(sid)
        if session is None:
            raise HTTPException(status_code=404, detail=f"no session {sid!r}")
        session.last_used = time.monotonic()
        return session

    @app.post("/v1/sessions", status_code=201)
    async def create_session(request: Request):
        content_type = request.headers.get("content-type", "").split(";")[0].strip()
        if content_type not in _ACCEPTED_TYPES:
            raise HTTPException(
                status_code=415,
                detail=f"expected image/png or image/jpeg, got {content_type!r}",
            )
        body = await request.body()
        if len(body) > max_upload_bytes:
            raise HTTPException(
                status_code=413,
                detail=f"upload exceeds {max_upload_bytes} bytes",
            )
        try:
            img = Image.open(io.BytesIO(body))
            img.load()
        except (UnidentifiedImageError, OSError):
            raise HTTPException(status_code=415, detail="image failed to decode")

        original = img.size
        img = _downscale(img, max_pixels)
        if img.mode not in ("L", "RGB"):
            img = img.convert("RGB")
        arr = np.asarray(img)
        now = time.monotonic()
        sid = uuid.uuid4().hex
        with store_lock:
            sessions[sid] = _Session(
                image=arr,
                height=arr.shape[0],
                width=arr.shape[1],
                created=now,
                last_used=now,
            )
        return JSONResponse(
            status_code=201,
            content={
                "id": sid,
                "height": arr.shape[0],
                "width": arr.shape[1],
                "downscaled": img.size != original,
            },
        )

    @app.post("/v1/sessions/{sid}/solve")
    def solve(sid: str, req: SolveRequest):
        session = _get(sid)
        params = req.params
        for stroke in req.strokes:
            if stroke.label >= params.k:
                raise HTTPException(
                    status_code=422,
                    detail=f"stroke label {stroke.label} exceeds K={params.k}",
                )
        try:
            policy = parse_kernel(params.kernel)
            bound_kind, m = parse_bound(params.bound)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))

        with session.lock:
            dataset = session.datasets.get(params.beta)
            if dataset is None:
                dataset = image_features(session.image, beta=params.beta)
                session.datasets[params.beta] = dataset
            grid = dataset.grid

            key = params.cache_key()
            affinity = session.affinities.get(key)
            if affinity is None:
                affinity = affinity_from_policy(dataset, policy, seed=params.seed)
                session.affinities[key] = affinity

            potts = None
            if params.gamma > 0:
                potts = session.potts.get(params.smoothness)
                if potts is None:
                    potts = contrast_potts(session.image, grid.connectivity,
                                           params.smoothness)
                    session.potts[params.smoothness] = potts

            spec = JointEnergySpec(params.objective, affinity,
                                   gamma=params.gamma, potts=potts)
            seeds = None
            if req.strokes:
                seeds = rasterize_strokes(
                    [Stroke(s.label, s.points, s.radius) for s in req.strokes],
                    grid,
                )

            if session.labeling is not None and session.labeling.k == params.k:
                init = session.labeling
            else:
                init = initial_labeling(spec, params.k, method="patches",
                                        grid=grid, seed=params.seed)

            schedule = Schedule(max_outer=solve_outer_iters)
            if bound_kind == "kernel":
                labeling, trace = kernel_cut(spec, init, schedule=schedule,
                                             constraints=seeds)
            elif bound_kind == "pseudo":
                labeling, trace = pseudo_bound_cut(spec, init, schedule=schedule,
                                                   constraints=seeds)
            else:
                labeling, trace = spectral_cut(spec, init, m=m,
                                               schedule=schedule,
                                               constraints=seeds)

            session.labeling = labeling
            session.segments.append(_trace_payload(trace))
            breakdown = {k: float(v) for k, v in
                         eval_joint(spec, labeling).as_dict().items()}

        return {
            "mask_png": _mask_base64(labeling, session.height, session.width),
            "height": session.height,
            "width": session.width,
            "k": params.k,
            "energy": breakdown,
            "iterations": trace.meta.get("iterations"),
            "converged": trace.meta.get("converged"),
            "trace": _trace_payload(trace),
        }

    @app.get("/v1/sessions/{sid}/trace")
    def get_trace(sid: str):
        session = _get(sid)
        with session.lock:
            return {"segments": list(session.segments)}

    return app


app = create_app()

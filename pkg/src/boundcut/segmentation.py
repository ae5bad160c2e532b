"""Pixel-grid segmentation: feature assembly, scribble seeds, and the solve
driver shared by the command line and the HTTP service.

Images become point clouds in color-plus-position space. Color channels are
normalized to [0, 1]; pixel coordinates are appended scaled by a factor beta
so one knob trades color similarity against spatial coherence. User guidance
arrives either as stroke polylines (rasterized here with a brush radius), as
a scribble mask image, or as a bounding box, and is enforced through hard
label constraints inside the optimizers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .affinity import (
    BandwidthPolicy,
    adaptive_bandwidths,
    adaptive_gaussian_kernel,
    gaussian_kernel,
    knn_affinity,
    parzen_density,
)
from .model import Dataset, Grid, JointEnergySpec, Labeling
from .objectives import contrast_weights
from .optimize import (
    RunTrace,
    Schedule,
    initial_labeling,
    kernel_cut,
    pseudo_bound_cut,
    spectral_cut,
)

__all__ = [
    "Stroke",
    "SegmentationResult",
    "image_features",
    "contrast_potts",
    "affinity_from_policy",
    "rasterize_strokes",
    "seeds_from_mask",
    "box_background_seeds",
    "merge_seeds",
    "segment_image",
    "overlay_image",
    "LABEL_COLORS",
]

# Fixed display palette, one RGB row per label; wraps around past 10 labels.
LABEL_COLORS = np.array([
    [230, 25, 75], [60, 180, 75], [255, 225, 25], [0, 130, 200],
    [245, 130, 48], [145, 30, 180], [70, 240, 240], [240, 50, 230],
    [210, 245, 60], [170, 110, 40],
], dtype=np.uint8)


def _color_channels(image: np.ndarray) -> tuple[np.ndarray, int, int]:
    """Normalize an image to (n, channels) floats in [0, 1].

    Grayscale arrays keep one channel. RGB arrays are converted to the LAB
    color space first, then each channel is mapped to [0, 1] by its fixed
    nominal range, so the scaling does not depend on image content.
    """
    img = np.asarray(image)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[:, :, 0]
    if img.ndim not in (2, 3):
        raise ValueError(f"expected (H, W) or (H, W, 3) image, got shape {img.shape}")
    h, w = img.shape[:2]

    if img.ndim == 2:
        chan = img.astype(np.float64)
        if img.dtype == np.uint8:
            chan = chan / 255.0
        elif img.dtype == np.uint16:
            chan = chan / 65535.0
        elif chan.min() < 0.0 or chan.max() > 1.0:
            span = max(float(np.ptp(chan)), 1e-12)
            chan = (chan - chan.min()) / span
        return chan.reshape(-1, 1), h, w

    if img.shape[2] != 3:
        raise ValueError(f"expected 3 color channels, got {img.shape[2]}")
    from skimage.color import rgb2lab

    rgb = img.astype(np.float64) / 255.0 if img.dtype == np.uint8 else img.astype(np.float64)
    lab = rgb2lab(np.clip(rgb, 0.0, 1.0))
    out = np.empty((h * w, 3))
    out[:, 0] = lab[:, :, 0].ravel() / 100.0
    out[:, 1] = (lab[:, :, 1].ravel() + 128.0) / 255.0
    out[:, 2] = (lab[:, :, 2].ravel() + 128.0) / 255.0
    return out, h, w


def image_features(image: np.ndarray, beta: float = 0.1,
                   connectivity: int = 8) -> Dataset:
    """Color channels plus beta-scaled pixel coordinates as a point cloud.

    Coordinates are normalized to [0, 1] over the image extent before
    scaling, so beta has the same meaning at every resolution.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    colors, h, w = _color_channels(image)
    ys, xs = np.divmod(np.arange(h * w), w)
    feats = np.column_stack([
        colors,
        beta * xs / max(w - 1, 1),
        beta * ys / max(h - 1, 1),
    ])
    return Dataset(features=feats, grid=Grid(h, w, connectivity))


def contrast_potts(image: np.ndarray, connectivity: int = 8,
                   mode: str = "contrast"):
    """Grid smoothness term computed from color channels only.

    Position channels are deliberately excluded: neighbor offsets are
    constant on a grid and would only dilute the edge contrast.
    """
    colors, h, w = _color_channels(image)
    return contrast_weights(Dataset(colors, grid=Grid(h, w, connectivity)), mode)


def affinity_from_policy(dataset: Dataset, policy: BandwidthPolicy, seed: int = 0):
    """Build the affinity matrix a BandwidthPolicy describes.

    The KNN neighbor count is capped at n - 1 so downscaled images never ask
    for more neighbors than there are other points.
    """
    if policy.kind == "fixed":
        return gaussian_kernel(dataset, policy.sigma)
    if policy.kind == "adaptive":
        dens = parzen_density(dataset, policy.delta)
        sig = adaptive_bandwidths(dens, transform=policy.transform,
                                  dim=dataset.dim, alpha=policy.alpha)
        return adaptive_gaussian_kernel(dataset, sig)
    k = min(policy.knn, dataset.n - 1)
    sample = policy.sample if policy.sample is None else min(policy.sample, k)
    return knn_affinity(dataset, k, sample, seed=seed)


@dataclass(frozen=True)
class Stroke:
    """One brush stroke: a polyline in pixel coordinates with a radius.

    points are (x, y) pairs, x along the width axis; fractional positions
    are fine. A single point paints one disk.
    """

    label: int
    points: np.ndarray
    radius: float = 2.0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        if pts.shape[0] < 1:
            raise ValueError("stroke needs at least one point")
        if self.label < 0:
            raise ValueError("stroke label must be nonnegative")
        if self.radius <= 0:
            raise ValueError("stroke radius must be positive")
        object.__setattr__(self, "points", pts)


def _stamp_disk(seeds: np.ndarray, h: int, w: int, cx: float, cy: float,
                radius: float, label: int) -> None:
    x0 = max(int(np.floor(cx - radius)), 0)
    x1 = min(int(np.ceil(cx + radius)), w - 1)
    y0 = max(int(np.floor(cy - radius)), 0)
    y1 = min(int(np.ceil(cy + radius)), h - 1)
    if x0 > x1 or y0 > y1:
        return
    ys, xs = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
    inside = (xs - cx) ** 2 + (ys - cy) ** 2 <= radius * radius
    seeds[(ys[inside] * w + xs[inside]).ravel()] = label


def rasterize_strokes(strokes, grid: Grid) -> np.ndarray:
    """Paint strokes into a per-pixel seed vector; -1 means unconstrained.

    Strokes are applied in order, so where two overlap the later one wins.
    Parts of a stroke outside the image are clipped away.
    """
    h, w = grid.height, grid.width
    seeds = np.full(h * w, -1, dtype=np.int64)
    for stroke in strokes:
        pts = stroke.points
        for a, b in zip(pts[:-1], pts[1:]):
            steps = int(np.ceil(np.hypot(*(b - a)) / 0.5)) + 1
            for t in np.linspace(0.0, 1.0, steps):
                c = (1 - t) * a + t * b
                _stamp_disk(seeds, h, w, c[0], c[1], stroke.radius, stroke.label)
        if pts.shape[0] == 1:
            _stamp_disk(seeds, h, w, pts[0, 0], pts[0, 1], stroke.radius,
                        stroke.label)
    return seeds


def seeds_from_mask(mask: np.ndarray, k: int) -> np.ndarray:
    """Scribble mask to seed vector: pixel value 0 = free, v = hard label v.

    Mask values are 1-based so an all-zero image constrains nothing.
    """
    arr = np.asarray(mask, dtype=np.int64).reshape(-1)
    if arr.min() < 0:
        raise ValueError("scribble mask values must be nonnegative")
    if arr.max() > k:
        raise ValueError(
            f"scribble mask names label {arr.max()} but the run has K={k}"
        )
    return arr - 1


def box_background_seeds(box, grid: Grid) -> np.ndarray:
    """Bounding-box protocol: pixels outside (x, y, w, h) are fixed to
    label 0, the background; pixels inside stay free."""
    x, y, bw, bh = (int(v) for v in box)
    if bw < 1 or bh < 1:
        raise ValueError("box width and height must be positive")
    if x >= grid.width or y >= grid.height or x + bw <= 0 or y + bh <= 0:
        raise ValueError("box does not intersect the image")
    seeds = np.zeros(grid.height * grid.width, dtype=np.int64)
    cols = np.arange(grid.width)
    rows = np.arange(grid.height)
    inside = ((rows[:, None] >= y) & (rows[:, None] < y + bh)
              & (cols[None, :] >= x) & (cols[None, :] < x + bw))
    seeds[inside.ravel()] = -1
    return seeds


def merge_seeds(*seed_vectors: np.ndarray) -> np.ndarray:
    """Overlay seed vectors; later vectors overwrite where they are >= 0."""
    vectors = [v for v in seed_vectors if v is not None]
    if not vectors:
        raise ValueError("no seed vectors given")
    out = vectors[0].copy()
    for v in vectors[1:]:
        if v.shape != out.shape:
            raise ValueError("seed vectors cover different pixel counts")
        fixed = v >= 0
        out[fixed] = v[fixed]
    return out


@dataclass(frozen=True)
class SegmentationResult:
    labeling: Labeling
    trace: RunTrace
    dataset: Dataset
    spec: JointEnergySpec
    seeds: np.ndarray | None = None


def segment_image(
    image: np.ndarray,
    k: int,
    *,
    objective: str = "aa",
    bandwidth: BandwidthPolicy | None = None,
    gamma: float = 1.0,
    beta: float = 0.1,
    smoothness: str = "contrast",
    connectivity: int = 8,
    strokes=None,
    seed_mask: np.ndarray | None = None,
    box=None,
    bound: str = "kernel",
    m: int | None = None,
    moves: str = "expansion",
    schedule: Schedule | None = None,
    warm_start: Labeling | None = None,
    seed: int = 0,
) -> SegmentationResult:
    """Segment one image with the chosen objective, kernel, and bound.

    Guidance combines in a fixed order: the box first, then the scribble
    mask, then strokes, so hand-drawn strokes always have the last word.
    Seeded pixels are hard constraints; the result honors them exactly.
    """
    if bandwidth is None:
        bandwidth = BandwidthPolicy("knn", knn=400, sample=50)
    dataset = image_features(image, beta=beta, connectivity=connectivity)
    grid = dataset.grid

    parts = []
    if box is not None:
        parts.append(box_background_seeds(box, grid))
    if seed_mask is not None:
        parts.append(seeds_from_mask(seed_mask, k))
    if strokes:
        for s in strokes:
            if s.label >= k:
                raise ValueError(f"stroke label {s.label} exceeds K={k}")
        parts.append(rasterize_strokes(strokes, grid))
    seeds = merge_seeds(*parts) if parts else None

    affinity = affinity_from_policy(dataset, bandwidth, seed=seed)
    potts = contrast_potts(image, connectivity, smoothness) if gamma > 0 else None
    spec = JointEnergySpec(objective, affinity, gamma=gamma, potts=potts)

    if warm_start is not None:
        if warm_start.n != dataset.n or warm_start.k != k:
            raise ValueError("warm start labeling does not match image and K")
        init = warm_start
    else:
        init = initial_labeling(spec, k, method="patches", grid=grid, seed=seed)

    if bound == "kernel":
        labeling, trace = kernel_cut(spec, init, schedule=schedule,
                                     moves=moves, constraints=seeds)
    elif bound == "pseudo":
        labeling, trace = pseudo_bound_cut(spec, init, schedule=schedule,
                                           constraints=seeds)
    elif bound == "spectral":
        labeling, trace = spectral_cut(spec, init, m=m, schedule=schedule,
                                       moves=moves, constraints=seeds)
    else:
        raise ValueError(f"unknown bound type {bound!r}")
    return SegmentationResult(labeling, trace, dataset, spec, seeds)


def overlay_image(image: np.ndarray, labeling: Labeling, grid: Grid,
                  alpha: float = 0.45) -> np.ndarray:
    """Blend the label palette over the image for quick visual checks."""
    img = np.asarray(image)
    if img.ndim == 2:
        base = np.repeat(img[:, :, None], 3, axis=2)
    else:
        base = img[:, :, :3]
    base = base.astype(np.float64)
    if img.dtype != np.uint8:
        base = 255.0 * np.clip(base, 0.0, 1.0)
    colors = LABEL_COLORS[labeling.labels % len(LABEL_COLORS)]
    colors = colors.reshape(grid.height, grid.width, 3).astype(np.float64)
    out = (1.0 - alpha) * base + alpha * colors
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)
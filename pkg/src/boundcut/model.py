"""Shared data contracts: datasets, labelings, indicators, joint-energy specs.

Every other module imports its types from here. Labels are 0-based internally
and 1-based in all external formats (PNG masks, CSV); the converters in this
file are the only place the shift happens.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Dataset",
    "Grid",
    "Labeling",
    "SegmentIndicator",
    "PottsEdges",
    "LabelCost",
    "RobustPnPotts",
    "JointEnergySpec",
    "indicators",
    "onehot",
    "validate",
    "labeling_to_png",
    "labeling_from_png",
    "labeling_to_csv",
    "labeling_from_csv",
]

# A segment indicator is a plain boolean vector of length n (one per point).
SegmentIndicator = np.ndarray


@dataclass(frozen=True)
class Grid:
    """Pixel-grid geometry for image datasets.

    connectivity is 4 or 8; height * width must equal the point count.
    """

    height: int
    width: int
    connectivity: int = 8

    def __post_init__(self):
        if self.connectivity not in (4, 8):
            raise ValueError(f"connectivity must be 4 or 8, got {self.connectivity}")
        if self.height < 1 or self.width < 1:
            raise ValueError("grid dimensions must be positive")


@dataclass(frozen=True)
class Dataset:
    """n points with feature vectors, optional grid geometry and point weights.

    features : (n, dim) float array, one observation per row
    grid     : optional Grid; rows are in row-major pixel order when present
    weights  : optional (n,) positive reals
    """

    features: np.ndarray
    grid: Grid | None = None
    weights: np.ndarray | None = None

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim == 1:
            feats = feats[:, None]
        if feats.ndim != 2 or feats.shape[0] < 1:
            raise ValueError("features must be a nonempty (n, dim) array")
        if not np.all(np.isfinite(feats)):
            raise ValueError("features contain non-finite entries")
        object.__setattr__(self, "features", feats)
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=np.float64)
            if w.shape != (feats.shape[0],):
                raise ValueError("weights length must match point count")
            if not np.all(w > 0):
                raise ValueError("weights must be strictly positive")
            object.__setattr__(self, "weights", w)
        if self.grid is not None and self.grid.height * self.grid.width != feats.shape[0]:
            raise ValueError(
                f"grid {self.grid.height}x{self.grid.width} does not cover "
                f"{feats.shape[0]} points"
            )

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class Labeling:
    """Assignment of each point to one of k labels (0-based internally).

    Empty labels are permitted and retained; move-making may empty and later
    repopulate a label, so the label set never shrinks during optimization.
    """

    labels: np.ndarray
    k: int

    def __post_init__(self):
        lab = np.asarray(self.labels, dtype=np.int64)
        if lab.ndim != 1 or lab.size < 1:
            raise ValueError("labels must be a nonempty vector")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if lab.min() < 0 or lab.max() >= self.k:
            raise ValueError(f"labels must lie in [0, {self.k})")
        object.__setattr__(self, "labels", lab)

    @property
    def n(self) -> int:
        return self.labels.size

    def segment_sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)

    def nonempty_count(self) -> int:
        return int(np.count_nonzero(self.segment_sizes()))

    def with_labels(self, labels: np.ndarray) -> "Labeling":
        return Labeling(labels, self.k)

    @classmethod
    def from_external(cls, labels_1based, k: int) -> "Labeling":
        """Build from 1-based labels as used in files and the API."""
        return cls(np.asarray(labels_1based, dtype=np.int64) - 1, k)

    def to_external(self) -> np.ndarray:
        return self.labels + 1


def indicators(labeling: Labeling) -> list[SegmentIndicator]:
    """Boolean indicator vectors, one per label (including empty labels)."""
    return [labeling.labels == k for k in range(labeling.k)]


def onehot(labeling: Labeling) -> np.ndarray:
    """(n, k) float 0/1 matrix whose columns are the indicators."""
    out = np.zeros((labeling.n, labeling.k))
    out[np.arange(labeling.n), labeling.labels] = 1.0
    return out


@dataclass(frozen=True)
class PottsEdges:
    """Weighted edge list for the pairwise discontinuity penalty.

    edges   : (m, 2) int array of endpoint indices, p != q, each unordered
              pair listed once
    weights : (m,) nonnegative reals
    """

    edges: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if e.shape[0] != w.shape[0]:
            raise ValueError("edges and weights length mismatch")
        if e.shape[0] and np.any(e[:, 0] == e[:, 1]):
            raise ValueError("self-loop edge")
        if np.any(w < 0):
            raise ValueError("negative edge weight")
        key = np.sort(e, axis=1)
        if e.shape[0] and len(np.unique(key, axis=0)) != e.shape[0]:
            raise ValueError("duplicate unordered edge")
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class LabelCost:
    """Per-label activation costs h_k, charged for every nonempty label."""

    h: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.h, dtype=np.float64).reshape(-1)
        if np.any(h < 0):
            raise ValueError("label costs must be nonnegative")
        object.__setattr__(self, "h", h)


@dataclass(frozen=True)
class RobustPnPotts:
    """Higher-order consistency factors with truncated penalty.

    Each factor is a set of point indices; the penalty per factor is
    min(T, |c| - size of the largest single-label group inside c), i.e. the
    truncated count of points disagreeing with the factor's dominant label.
    """

    factors: list[np.ndarray]
    T: float

    def __post_init__(self):
        if self.T < 0:
            raise ValueError("truncation T must be nonnegative")
        cleaned = []
        for c in self.factors:
            idx = np.sort(np.asarray(c, dtype=np.int64))
            if idx.size == 0:
                raise ValueError("empty factor")
            if np.unique(idx).size != idx.size:
                raise ValueError("factor contains repeated point indices")
            cleaned.append(idx)
        object.__setattr__(self, "factors", cleaned)

    @classmethod
    def with_fractional_threshold(cls, factors, fraction: float) -> "RobustPnPotts":
        """Convenience: T as a fraction of the largest factor size."""
        sizes = [len(np.unique(np.asarray(c))) for c in factors]
        return cls(factors, fraction * max(sizes))


@dataclass(frozen=True)
class JointEnergySpec:
    """Clustering objective plus gamma-weighted MRF terms.

    objective : one of "aa", "ac", "nc", "wkkm"
    affinity  : (n, n) symmetric matrix (dense array or scipy sparse)
    weights   : per-point weights for "wkkm" (ignored otherwise; "nc" uses
                degrees internally)
    gamma     : nonnegative multiplier on the sum of MRF terms
    """

    objective: str
    affinity: object
    gamma: float = 0.0
    weights: np.ndarray | None = None
    potts: PottsEdges | None = None
    label_cost: LabelCost | None = None
    robust_pn: RobustPnPotts | None = None

    def __post_init__(self):
        if self.objective not in ("aa", "ac", "nc", "wkkm"):
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")

    def mrf_terms(self):
        out = []
        if self.potts is not None:
            out.append(("potts", self.potts))
        if self.label_cost is not None:
            out.append(("label_cost", self.label_cost))
        if self.robust_pn is not None:
            out.append(("robust_pn", self.robust_pn))
        return out


def validate(spec: JointEnergySpec, dataset: Dataset) -> list[str]:
    """Dimensional consistency checks; returns a list of violations (empty = ok).

    Reports every problem found rather than stopping at the first.
    """
    problems = []
    n = dataset.n
    shape = getattr(spec.affinity, "shape", None)
    if shape != (n, n):
        problems.append(f"affinity shape {shape} does not match n={n}")
    if spec.weights is not None:
        w = np.asarray(spec.weights)
        if w.shape != (n,):
            problems.append(f"weights length {w.shape} does not match n={n}")
        elif np.any(w <= 0):
            problems.append("weights must be strictly positive")
    if spec.potts is not None and spec.potts.edges.shape[0]:
        if spec.potts.edges.min() < 0 or spec.potts.edges.max() >= n:
            problems.append("potts edge endpoint out of range")
    if spec.label_cost is not None and spec.label_cost.h.size == 0:
        problems.append("label cost vector is empty")
    if spec.robust_pn is not None:
        for i, c in enumerate(spec.robust_pn.factors):
            if c.min() < 0 or c.max() >= n:
                problems.append(f"factor {i} contains an index outside [0, {n})")
            if spec.robust_pn.T > c.size / 2:
                problems.append(
                    f"factor {i}: truncation T={spec.robust_pn.T} exceeds half the "
                    f"factor size ({c.size}); within-move encoding weakens above |c|/2"
                )
    return problems


# ---------------------------------------------------------------------------
# serialization: PNG for grid labelings, CSV otherwise
# ---------------------------------------------------------------------------

def labeling_to_png(labeling: Labeling, grid: Grid, path) -> None:
    """Write as 16-bit grayscale PNG, pixel value = 1-based label."""
    from PIL import Image

    arr = labeling.to_external().reshape(grid.height, grid.width).astype(np.uint16)
    Image.fromarray(arr).save(path)


def labeling_from_png(path, k: int | None = None) -> Labeling:
    from PIL import Image

    arr = np.asarray(Image.open(path), dtype=np.int64).reshape(-1)
    if k is None:
        k = int(arr.max())
    return Labeling.from_external(arr, k)


def labeling_to_csv(labeling: Labeling, path) -> None:
    ext = labeling.to_external()
    with open(path, "w") as f:
        f.write("index,label\n")
        for i, lab in enumerate(ext):
            f.write(f"{i},{lab}\n")


def labeling_from_csv(path, k: int | None = None) -> Labeling:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
    if rows.ndim != 2 or rows.shape[1] != 2:
        raise ValueError(f"{path}: expected an index,label CSV with a header row")
    order = np.argsort(rows[:, 0])
    ext = rows[order, 1]
    if k is None:
        k = int(ext.max())
    return Labeling.from_external(ext, k)

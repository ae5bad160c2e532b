"""Energy evaluation for balanced clustering objectives and MRF terms.

Clustering energies are sums over segments of a quadratic form divided by a
segment mass; the four variants differ in which matrix and which mass:

    aa    -X'AX / 1'X          association normalized by count
    ac     X'(D-A)X / 1'X      cut normalized by count
    nc    -X'AX / d'X          association normalized by volume
    wkkm  -X'WKWX / w'X        kernel form with explicit point weights

Empty segments contribute exactly zero everywhere. MRF terms (pairwise
smoothness, per-label charges, truncated group consistency) are evaluated
separately and combined by eval_joint with the JointEnergySpec gamma.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse

from .affinity import degrees
from .model import (
    Dataset,
    Grid,
    JointEnergySpec,
    LabelCost,
    Labeling,
    PottsEdges,
    RobustPnPotts,
    indicators,
)

__all__ = [
    "EnergyBreakdown",
    "eval_aa",
    "eval_ac",
    "eval_nc",
    "eval_wkkm",
    "eval_potts",
    "eval_label_cost",
    "eval_robust_pn",
    "eval_joint",
    "grid_edges",
    "contrast_weights",
]


def _quad(A, x: np.ndarray) -> float:
    """x'Ax for dense or sparse symmetric A."""
    return float(x @ (A @ x))


def eval_aa(affinity, labeling: Labeling) -> float:
    """Average association energy -sum_k X'AX / 1'X."""
    total = 0.0
    for ind in indicators(labeling):
        size = ind.sum()
        if size == 0:
            continue
        x = ind.astype(np.float64)
        total -= _quad(affinity, x) / size
    return total


def eval_ac(affinity, labeling: Labeling) -> float:
    """Average cut energy sum_k X'(D-A)X / 1'X, D = diag(A 1)."""
    d = degrees(affinity)
    total = 0.0
    for ind in indicators(labeling):
        size = ind.sum()
        if size == 0:
            continue
        x = ind.astype(np.float64)
        total += (d @ x - _quad(affinity, x)) / size
    return total


def eval_nc(affinity, labeling: Labeling) -> float:
    """Normalized cut in its association form -sum_k X'AX / d'X.

    Requires strictly positive degrees; an isolated point leaves its
    segment mass undefined.
    """
    d = degrees(affinity)
    if np.any(d <= 0):
        raise ValueError("nonpositive degree: volume-normalized energy undefined")
    total = 0.0
    for ind in indicators(labeling):
        if not ind.any():
            continue
        x = ind.astype(np.float64)
        total -= _quad(affinity, x) / (d @ x)
    return total


def eval_wkkm(kernel, labeling: Labeling, weights: np.ndarray | None = None) -> float:
    """Weighted kernel clustering energy -sum_k X'WKWX / w'X, W = diag(w)."""
    n = labeling.labels.size
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    if np.any(w <= 0):
        raise ValueError("weights must be strictly positive")
    total = 0.0
    for ind in indicators(labeling):
        if not ind.any():
            continue
        x = ind.astype(np.float64)
        wx = w * x
        total -= _quad(kernel, wx) / (w @ x)
    return total


def eval_potts(potts: PottsEdges, labeling: Labeling) -> float:
    """Pairwise smoothness sum over edges of w_pq [S_p != S_q]."""
    lab = labeling.labels
    cut = lab[potts.edges[:, 0]] != lab[potts.edges[:, 1]]
    return float(potts.weights[cut].sum())


def eval_label_cost(cost: LabelCost, labeling: Labeling) -> float:
    """Sum of h_k over labels that are actually used."""
    if cost.h.size != labeling.k:
        raise ValueError(
            f"label cost vector has {cost.h.size} entries for k={labeling.k}"
        )
    return float(cost.h[labeling.segment_sizes() > 0].sum())


def eval_robust_pn(rp: RobustPnPotts, labeling: Labeling) -> float:
    """Truncated consistency: per factor c, min(T, |c| - largest label count)."""
    lab = labeling.labels
    total = 0.0
    for c in rp.factors:
        counts = np.bincount(lab[c], minlength=labeling.k)
        total += min(rp.T, c.size - counts.max())
    return float(total)


@dataclass(frozen=True)
class EnergyBreakdown:
    """Joint energy split into its parts; total already includes gamma."""

    clustering: float
    potts: float
    label_cost: float
    robust_pn: float
    gamma: float
    total: float

    def as_dict(self) -> dict:
        return asdict(self)


def eval_joint(spec: JointEnergySpec, labeling: Labeling) -> EnergyBreakdown:
    """Clustering energy plus gamma times the sum of all MRF terms."""
    if spec.objective == "aa":
        clustering = eval_aa(spec.affinity, labeling)
    elif spec.objective == "ac":
        clustering = eval_ac(spec.affinity, labeling)
    elif spec.objective == "nc":
        clustering = eval_nc(spec.affinity, labeling)
    else:
        clustering = eval_wkkm(spec.affinity, labeling, spec.weights)

    potts = eval_potts(spec.potts, labeling) if spec.potts is not None else 0.0
    lcost = (
        eval_label_cost(spec.label_cost, labeling)
        if spec.label_cost is not None
        else 0.0
    )
    rpn = (
        eval_robust_pn(spec.robust_pn, labeling)
        if spec.robust_pn is not None
        else 0.0
    )
    total = clustering + spec.gamma * (potts + lcost + rpn)
    return EnergyBreakdown(clustering, potts, lcost, rpn, spec.gamma, total)


# ---------------------------------------------------------------------------
# pixel-grid smoothness weights
# ---------------------------------------------------------------------------

_OFFSETS_4 = ((0, 1), (1, 0))
_OFFSETS_8 = ((0, 1), (1, 0), (1, 1), (1, -1))


def grid_edges(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Neighbor pairs of a pixel grid in scan order.

    Returns (edges, dists): an (m, 2) index array (each unordered pair once)
    and the Euclidean pixel distance per edge (1 or sqrt(2)).
    """
    h, w = grid.height, grid.width
    ids = np.arange(h * w).reshape(h, w)
    offsets = _OFFSETS_8 if grid.connectivity == 8 else _OFFSETS_4
    pairs, dists = [], []
    for dy, dx in offsets:
        src = ids[max(0, -dy) : h - max(0, dy), max(0, -dx) : w - max(0, dx)]
        dst = ids[max(0, dy) : h - max(0, -dy), max(0, dx) : w - max(0, -dx)]
        pairs.append(np.stack([src.ravel(), dst.ravel()], axis=1))
        dists.append(np.full(src.size, np.hypot(dy, dx)))
    return np.concatenate(pairs), np.concatenate(dists)


def contrast_weights(dataset: Dataset, mode: str = "contrast") -> PottsEdges:
    """Smoothness weights on the dataset's grid.

    mode "length": w_pq = 1 / dist(p, q), a discretized boundary length.
    mode "contrast": the length weight times exp(-0.5 ||I_p - I_q||^2 / eta),
    where eta is the average squared feature difference over the same
    neighborhood, so weights drop across strong feature edges.
    """
    if dataset.grid is None:
        raise ValueError("dataset has no grid")
    if mode not in ("contrast", "length"):
        raise ValueError(f"unknown smoothness mode {mode!r}")
    edges, dists = grid_edges(dataset.grid)
    w = 1.0 / dists
    if mode == "contrast":
        diff = dataset.features[edges[:, 0]] - dataset.features[edges[:, 1]]
        sq = (diff * diff).sum(axis=1)
        eta = max(float(sq.mean()), 1e-300)
        w = w * np.exp(-0.5 * sq / eta)
    return PottsEdges(edges, w)

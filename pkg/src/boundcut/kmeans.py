"""K-means procedures: explicit, implicit (kernelized), weighted, and the
weak variant whose centers live in the original data space (K-modes).

All solvers are block-coordinate descent and report a non-increasing energy
trace. Assignment ties always go to the lowest label index, and empty
clusters are reseeded with the point farthest from its current center
(disable with reseed_empty=False).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse

from .model import Grid, Labeling, onehot

__all__ = [
    "KMState",
    "km_assign",
    "kkm_assign_implicit",
    "km_energy",
    "kkm_energy",
    "run_kmeans",
    "kmodes_weak_kkm",
    "grid_patch_init",
    "farthest_point_init",
]


@dataclass
class KMState:
    """Result of one K-means style run.

    centers are explicit K×m coordinates when the solver has them (plain KM
    and K-modes); implicit kernel runs leave them as None. The energy list
    is one value per iteration, never increasing.
    """

    labeling: Labeling
    centers: np.ndarray | None
    energy: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def km_assign(points: np.ndarray, means: np.ndarray, weights=None) -> Labeling:
    """Nearest-mean assignment; ties go to the lowest label index.

    Positive per-point weights scale every candidate distance of a point
    equally, so they never change the argmin; the parameter is accepted for
    interface symmetry with the update and energy steps.
    """
    d2 = ((points[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    return Labeling(np.argmin(d2, axis=1), means.shape[0])


def _segment_stats(kernel, X: np.ndarray, w: np.ndarray):
    """Per-segment weight masses, K (w*X) products, and quadratic forms."""
    wx = w[:, None] * X
    kwx = kernel @ wx
    masses = w @ X
    quads = np.einsum("nk,nk->k", wx, kwx)
    return masses, kwx, quads


def kkm_assign_implicit(kernel, labeling: Labeling, weights=None) -> Labeling:
    """One kernelized assignment step without explicit coordinates.

    cost(p, k) = (wX)'K(wX) / (w'X)^2 - 2 [K(wX)]_p / (w'X), which is the
    squared embedding distance to segment k's weighted mean up to a per-point
    term that does not depend on k. Empty segments are excluded from the
    candidate set for this step.
    """
    n = labeling.labels.size
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    X = onehot(labeling)
    masses, kwx, quads = _segment_stats(kernel, X, w)
    costs = np.full((n, labeling.k), np.inf)
    live = masses > 0
    costs[:, live] = (quads[live] / masses[live] ** 2)[None, :] - 2.0 * kwx[
        :, live
    ] / masses[live][None, :]
    return Labeling(np.argmin(costs, axis=1), labeling.k)


def km_energy(points: np.ndarray, labeling: Labeling, weights=None) -> float:
    """Weighted within-cluster squared distances to segment means."""
    n = points.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    total = 0.0
    for k in range(labeling.k):
        sel = labeling.labels == k
        if not sel.any():
            continue
        wk = w[sel]
        mu = wk @ points[sel] / wk.sum()
        total += float((wk * ((points[sel] - mu) ** 2).sum(axis=1)).sum())
    return total


def kkm_energy(kernel, labeling: Labeling, weights=None) -> float:
    """Kernel form of km_energy: sum_p w_p K_pp - sum_k (wX)'K(wX) / w'X."""
    n = labeling.labels.size
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    diag = kernel.diagonal() if scipy.sparse.issparse(kernel) else np.diag(kernel)
    X = onehot(labeling)
    masses, _, quads = _segment_stats(kernel, X, w)
    live = masses > 0
    return float((w * diag).sum() - (quads[live] / masses[live]).sum())


def grid_patch_init(grid: Grid, k: int) -> Labeling:
    """Tile the grid into k rectangular patches, row-major."""
    if k < 1:
        raise ValueError("k must be >= 1")
    rows = max(1, int(round(np.sqrt(k * grid.height / grid.width))))
    rows = min(rows, k)
    cols = int(np.ceil(k / rows))
    r = np.minimum(np.arange(grid.height) * rows // grid.height, rows - 1)
    c = np.minimum(np.arange(grid.width) * cols // grid.width, cols - 1)
    patch = np.minimum(r[:, None] * cols + c[None, :], k - 1)
    return Labeling(patch.reshape(-1), k)


def _point_distances(points, kernel, ref: int) -> np.ndarray:
    if kernel is not None:
        diag = kernel.diagonal() if scipy.sparse.issparse(kernel) else np.diag(kernel)
        col = kernel[:, ref]
        if scipy.sparse.issparse(col):
            col = col.toarray().ravel()
        return diag + diag[ref] - 2.0 * np.asarray(col).ravel()
    return ((points - points[ref]) ** 2).sum(axis=1)


def farthest_point_init(data, k: int, kernel: bool = False) -> Labeling:
    """Deterministic farthest-point seeding, then nearest-seed labels."""
    points = None if kernel else np.asarray(data, dtype=np.float64)
    kmat = data if kernel else None
    n = data.shape[0]
    seeds = [0]
    dist = _point_distances(points, kmat, 0)
    for _ in range(1, k):
        nxt = int(np.argmax(dist))
        seeds.append(nxt)
        dist = np.minimum(dist, _point_distances(points, kmat, nxt))
    all_d = np.stack([_point_distances(points, kmat, s) for s in seeds], axis=1)
    return Labeling(np.argmin(all_d, axis=1), k)


def _reseed_empty(labels: np.ndarray, k: int, point_costs: np.ndarray) -> np.ndarray:
    """Give each empty label the point currently farthest from its center."""
    labels = labels.copy()
    for j in range(k):
        if (labels == j).any():
            continue
        costs = point_costs[np.arange(labels.size), labels]
        labels[int(np.argmax(costs))] = j
        point_costs = point_costs.copy()
        point_costs[labels == j] = 0.0
    return labels


def run_kmeans(
    data,
    k: int,
    *,
    kernel: bool = False,
    weights=None,
    init="random",
    restarts: int = 5,
    max_iters: int = 100,
    tol: float = 1e-7,
    seed: int = 0,
    reseed_empty: bool = True,
) -> KMState:
    """Lloyd-style descent on points (kernel=False) or a kernel matrix.

    init is "random" (seeded labels, `restarts` attempts, best final energy
    wins), "farthest", or a Labeling to start from. Stops when the labeling
    repeats, the relative energy drop falls below tol, or at max_iters.
    """
    n = data.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)

    if isinstance(init, Labeling):
        starts = [init]
    elif init == "farthest":
        starts = [farthest_point_init(data, k, kernel=kernel)]
    elif init == "random":
        starts = [
            Labeling(np.random.default_rng(seed + i).integers(0, k, n), k)
            for i in range(max(1, restarts))
        ]
    else:
        raise ValueError(f"unknown init {init!r}")

    best: KMState | None = None
    for start in starts:
        state = _run_once(data, k, kernel, w, start, max_iters, tol, reseed_empty)
        if best is None or state.energy[-1] < best.energy[-1]:
            best = state
    return best


def _explicit_step(points, w, labels, k):
    means = np.zeros((k, points.shape[1]))
    for j in range(k):
        sel = labels == j
        if sel.any():
            means[j] = (w[sel] @ points[sel]) / w[sel].sum()
    d2 = ((points[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    d2[:, [not (labels == j).any() for j in range(k)]] = np.inf
    return means, d2


def _run_once(data, k, kernel, w, start, max_iters, tol, reseed_empty) -> KMState:
    labeling = start
    state = KMState(labeling=labeling, centers=None)
    prev_energy = np.inf
    for it in range(max_iters):
        if kernel:
            X = onehot(labeling)
            masses, kwx, quads = _segment_stats(data, X, w)
            live = masses > 0
            costs = np.full((data.shape[0], k), np.inf)
            costs[:, live] = (quads[live] / masses[live] ** 2)[
                None, :
            ] - 2.0 * kwx[:, live] / masses[live][None, :]
            labels = np.argmin(costs, axis=1)
            if reseed_empty:
                diag = (
                    data.diagonal()
                    if scipy.sparse.issparse(data)
                    else np.diag(data)
                )
                labels = _reseed_empty(labels, k, costs + diag[:, None])
            labeling = Labeling(labels, k)
            energy = kkm_energy(data, labeling, w)
        else:
            state.centers, d2 = _explicit_step(data, w, labeling.labels, k)
            labels = np.argmin(d2, axis=1)
            if reseed_empty:
                labels = _reseed_empty(labels, k, d2)
            labeling = Labeling(labels, k)
            state.centers, _ = _explicit_step(data, w, labels, k)
            energy = km_energy(data, labeling, w)

        state.energy.append(energy)
        state.iterations = it + 1
        unchanged = np.array_equal(labeling.labels, state.labeling.labels)
        state.labeling = labeling
        if unchanged or abs(prev_energy - energy) <= tol * (1.0 + abs(energy)):
            state.converged = True
            break
        prev_energy = energy
    return state


# ---------------------------------------------------------------------------
# weak kernel K-means: centers constrained to the original space
# ---------------------------------------------------------------------------

def _gauss(points, center, sigma):
    return np.exp(-((points - center) ** 2).sum(axis=1) / (2.0 * sigma * sigma))


def _mean_shift(points, start, sigma, steps=20):
    m = start.copy()
    for _ in range(steps):
        resp = _gauss(points, m, sigma)
        total = resp.sum()
        if total <= 0:
            break
        nxt = resp @ points / total
        if ((nxt - m) ** 2).sum() <= 1e-18:
            m = nxt
            break
        m = nxt
    return m


def _best_mode(points, sigma, refine_steps, previous=None):
    """Strongest density peak: exhaustive over observed points, then local
    mean-shift refinement. The previous mode stays in the candidate set so
    an update can never lower the segment's density."""
    scores = np.array([_gauss(points, p, sigma).sum() for p in points])
    start = points[int(np.argmax(scores))]
    candidates = [start, _mean_shift(points, start, sigma, steps=refine_steps)]
    if previous is not None:
        candidates.append(previous)
    values = [_gauss(points, c, sigma).sum() for c in candidates]
    return candidates[int(np.argmax(values))]


def kmodes_weak_kkm(
    points: np.ndarray,
    sigma: float,
    k: int,
    init="random",
    seed: int = 0,
    max_iters: int = 100,
    refine_steps: int = 20,
) -> KMState:
    """Block-coordinate descent on -sum_k sum_{p in S_k} exp-affinity(I_p, m_k).

    Centers m_k are explicit points in the data space, updated to the
    strongest density peak of their segment; assignment sends each point to
    the center with the highest kernel value. This is the pointwise
    counterpart of kernel K-means and upper-bounds it at every labeling.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if isinstance(init, Labeling):
        labeling = init
    elif init == "random":
        labeling = Labeling(np.random.default_rng(seed).integers(0, k, n), k)
    elif init == "farthest":
        labeling = farthest_point_init(points, k)
    else:
        raise ValueError(f"unknown init {init!r}")

    state = KMState(labeling=labeling, centers=np.zeros((k, points.shape[1])))
    prev_energy = np.inf
    rng = np.random.default_rng(seed)
    for it in range(max_iters):
        labels = state.labeling.labels.copy()
        for j in range(k):
            if not (labels == j).any():
                labels[rng.integers(0, n)] = j
        for j in range(k):
            previous = state.centers[j] if it > 0 else None
            state.centers[j] = _best_mode(
                points[labels == j], sigma, refine_steps, previous=previous
            )

        affin = np.stack(
            [_gauss(points, state.centers[j], sigma) for j in range(k)], axis=1
        )
        labels = np.argmax(affin, axis=1)
        labeling = Labeling(labels, k)
        energy = -float(affin[np.arange(n), labels].sum())

        state.energy.append(energy)
        state.iterations = it + 1
        unchanged = np.array_equal(labels, state.labeling.labels)
        state.labeling = labeling
        if unchanged or abs(prev_energy - energy) <= 1e-9 * (1.0 + abs(energy)):
            state.converged = True
            break
        prev_energy = energy
    return state


def weak_kkm_energy(points: np.ndarray, state: KMState, sigma: float) -> float:
    """Kernel-distance energy sum_k sum_{p in S_k} ||I_p - m_k||_k^2 with the
    state's centers, comparable against kkm_energy of the same labeling."""
    labels = state.labeling.labels
    total = 0.0
    for j in range(state.labeling.k):
        sel = labels == j
        if sel.any():
            total += float((2.0 - 2.0 * _gauss(points[sel], state.centers[j], sigma)).sum())
    return total

"""Affinity construction: Gaussian and adaptive kernels, symmetric KNN graphs,
degree vectors, and diagonal shifts that make a symmetric matrix p.s.d.

Dense kernels are plain (n, n) float arrays; sparse affinities are scipy CSR
matrices with entries in {0, 1, 2}. Everything here is immutable once built.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist, pdist, squareform

from .model import Dataset

__all__ = [
    "BandwidthPolicy",
    "NumericalError",
    "gaussian_kernel",
    "adaptive_gaussian_kernel",
    "knn_affinity",
    "parzen_density",
    "adaptive_bandwidths",
    "transformed_density",
    "degrees",
    "symmetrize",
    "smallest_eigenvalue",
    "psd_shift",
    "dump_dense_kernel",
    "load_dense_kernel",
    "sparse_to_csv",
    "sparse_from_csv",
]

DENSE_EIG_LIMIT = 2000


class NumericalError(RuntimeError):
    """Raised when an iterative numeric routine fails to converge."""


@dataclass(frozen=True)
class BandwidthPolicy:
    """How kernel bandwidths are chosen.

    kind = "fixed":    use sigma everywhere.
    kind = "adaptive": per-point sigma from a density transform; `transform`
                       is "const" or "log" (with strength alpha), `delta` is
                       the width of the density estimate behind it.
    kind = "knn":      no bandwidth; symmetric KNN graph with K neighbors,
                       optionally subsampled to `sample` per point.
    """

    kind: str
    sigma: float = 1.0
    transform: str = "const"
    delta: float = 1.0
    alpha: float = 1.0
    knn: int = 400
    sample: int | None = 50

    def __post_init__(self):
        if self.kind not in ("fixed", "adaptive", "knn"):
            raise ValueError(f"unknown bandwidth policy {self.kind!r}")
        if self.kind == "fixed" and self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.kind == "knn":
            if self.knn < 1:
                raise ValueError("knn must be >= 1")
            if self.sample is not None and self.sample > self.knn:
                raise ValueError("sample size cannot exceed the neighbor count")


def _sq_dists(X: np.ndarray) -> np.ndarray:
    d2 = squareform(pdist(X, metric="sqeuclidean"))
    return d2


def gaussian_kernel(dataset: Dataset, sigma: float) -> np.ndarray:
    """Dense kernel exp(-||I_p - I_q||^2 / (2 sigma^2)).

    Unit diagonal by construction; symmetric because the distance matrix is.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    d2 = _sq_dists(dataset.features)
    k = np.exp(-d2 / (2.0 * sigma * sigma))
    np.fill_diagonal(k, 1.0)
    return k


def adaptive_gaussian_kernel(dataset: Dataset, sigmas: np.ndarray) -> np.ndarray:
    """Variable-bandwidth kernel exp(-||I_p - I_q||^2 / (2 sigma_p sigma_q)).

    Symmetric with unit diagonal for any positive per-point bandwidths,
    typically produced by adaptive_bandwidths.
    """
    s = np.asarray(sigmas, dtype=np.float64)
    if np.any(s <= 0):
        raise ValueError("bandwidths must be positive")
    d2 = _sq_dists(dataset.features)
    k = np.exp(-d2 / (2.0 * np.outer(s, s)))
    np.fill_diagonal(k, 1.0)
    return k


def knn_affinity(
    dataset: Dataset,
    K: int,
    sample_size: int | None = None,
    seed: int = 0,
) -> scipy.sparse.csr_matrix:
    """Symmetric KNN affinity: value(p, q) = [q in KNN(p)] + [p in KNN(q)].

    Neighbor search is exact (kd-tree). When sample_size is given, each
    point's K-neighbor list is first subsampled uniformly without replacement
    (seeded), and symmetrization happens after sampling, so the result is
    always a symmetric matrix with entries in {0, 1, 2} and no self-loops.
    """
    n = dataset.n
    if not 1 <= K < n:
        raise ValueError(f"need 1 <= K < n, got K={K}, n={n}")
    if sample_size is not None and not 1 <= sample_size <= K:
        raise ValueError("sample_size must be in [1, K]")

    tree = cKDTree(dataset.features)
    _, idx = tree.query(dataset.features, k=K + 1)
    idx = np.atleast_2d(idx)

    neighbor_lists = np.empty((n, K), dtype=np.int64)
    for p in range(n):
        row = idx[p]
        self_pos = np.nonzero(row == p)[0]
        if self_pos.size:
            row = np.delete(row, self_pos[0])
        else:
            # p tied with K+ coincident points and fell off its own list
            row = row[:-1]
        neighbor_lists[p] = row[:K]

    if sample_size is not None and sample_size < K:
        rng = np.random.default_rng(seed)
        keep = np.empty((n, sample_size), dtype=np.int64)
        for p in range(n):
            keep[p] = neighbor_lists[p][
                rng.choice(K, size=sample_size, replace=False)
            ]
        neighbor_lists = keep

    m = neighbor_lists.shape[1]
    rows = np.repeat(np.arange(n), m)
    cols = neighbor_lists.ravel()
    directed = scipy.sparse.coo_matrix(
        (np.ones(n * m), (rows, cols)), shape=(n, n)
    ).tocsr()
    out = directed + directed.T
    out.sum_duplicates()
    return out


def parzen_density(dataset: Dataset, delta: float) -> np.ndarray:
    """Fixed-width kernel density at every observed point (unnormalized).

    d_p = sum_q (1 / delta^dim) exp(-||I_p - I_q||^2 / (2 delta^2)),
    self term included.
    """
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    d2 = _sq_dists(dataset.features)
    return np.exp(-d2 / (2.0 * delta * delta)).sum(axis=1) / delta**dataset.dim


def adaptive_bandwidths(
    densities: np.ndarray,
    transform: str = "const",
    dim: int = 1,
    alpha: float = 1.0,
    target_median: float = 1.0,
) -> np.ndarray:
    """Per-point bandwidths sigma_p = (d'(d_p) / d_p)^(1/dim).

    transform "const" targets a flat density d'(d) = 1; "log" targets
    d'(d) = log(1 + alpha d) / alpha. The result is defined up to scale, so
    it is rescaled globally to put the median at target_median.
    """
    d = np.asarray(densities, dtype=np.float64)
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        raise ValueError("densities must be finite and strictly positive")
    if transform == "const":
        target = np.ones_like(d)
    elif transform == "log":
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        target = np.log1p(alpha * d) / alpha
    else:
        raise ValueError(f"unknown transform {transform!r}")
    sig = (target / d) ** (1.0 / dim)
    return sig * (target_median / np.median(sig))


def transformed_density(dataset: Dataset, sigmas: np.ndarray) -> np.ndarray:
    """Density seen after the bandwidth change of variables (non-normalized):
    d'_p = sum_q exp(-||I_p - I_q||^2 / (2 sigma_q^2)).
    """
    s = np.asarray(sigmas, dtype=np.float64)
    d2 = _sq_dists(dataset.features)
    return np.exp(-d2 / (2.0 * s[None, :] ** 2)).sum(axis=1)


def degrees(affinity) -> np.ndarray:
    """Row sums d = A 1 of a dense or sparse affinity."""
    if scipy.sparse.issparse(affinity):
        return np.asarray(affinity.sum(axis=1)).ravel()
    return np.asarray(affinity).sum(axis=1)


def symmetrize(A: np.ndarray) -> np.ndarray:
    """(A + A') / 2; errors on non-square input."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    return 0.5 * (A + A.T)


def _gershgorin_upper(M) -> float:
    if scipy.sparse.issparse(M):
        absrow = np.asarray(abs(M).sum(axis=1)).ravel()
        diag = M.diagonal()
    else:
        absrow = np.abs(M).sum(axis=1)
        diag = np.diag(M)
    return float(np.max(diag + (absrow - np.abs(diag))))


def smallest_eigenvalue(M, max_iters: int = 10000, tol: float = 1e-12) -> float:
    """Smallest eigenvalue of a symmetric matrix.

    Small problems (n <= 2000) go through a full symmetric eigendecomposition.
    Larger ones run power iteration on (c I - M) with c from the Gershgorin
    bound, which converges to c - lambda_min.
    """
    n = M.shape[0]
    if n <= DENSE_EIG_LIMIT:
        dense = M.toarray() if scipy.sparse.issparse(M) else np.asarray(M)
        return float(scipy.linalg.eigvalsh(dense)[0])

    c = _gershgorin_upper(M) + 1.0
    v = np.ones(n) + 1e-3 * np.sin(np.arange(n))
    v /= np.linalg.norm(v)
    mu_prev = np.inf
    for it in range(max_iters):
        w = c * v - M @ v
        nw = np.linalg.norm(w)
        if nw == 0:
            # v is an exact eigenvector of M with eigenvalue c, i.e. lambda_min = c
            return c
        v = w / nw
        mu = float(v @ (c * v - M @ v))
        if abs(mu - mu_prev) <= tol * (1.0 + abs(mu)):
            return c - mu
        mu_prev = mu
    raise NumericalError(
        f"power iteration did not converge in {max_iters} iterations "
        f"(last shift estimate {c - mu_prev:.6g})"
    )


def psd_shift(M, weights: np.ndarray | None = None) -> float:
    """Diagonal shift delta making M (or its weight-normalized form) p.s.d.

    Returns delta = max(0, -lambda_min) plus a small safety margin, where
    lambda_min is taken from M itself, or from W^(-1/2) M W^(-1/2) when
    weights are given (W = diag(weights)).
    """
    if weights is not None:
        w = np.asarray(weights, dtype=np.float64)
        if np.any(w <= 0):
            raise ValueError("weights must be strictly positive")
        rs = 1.0 / np.sqrt(w)
        if scipy.sparse.issparse(M):
            R = scipy.sparse.diags(rs)
            M = R @ M @ R
        else:
            M = M * np.outer(rs, rs)
    lam0 = smallest_eigenvalue(M)
    return max(0.0, -lam0) + 1e-6 * (1.0 + abs(lam0))


# ---------------------------------------------------------------------------
# on-disk formats
# ---------------------------------------------------------------------------

def dump_dense_kernel(k: np.ndarray, path) -> None:
    """Binary row-major float64 dump with an 8-byte point-count header."""
    with open(path, "wb") as f:
        f.write(np.int64(k.shape[0]).tobytes())
        f.write(np.ascontiguousarray(k, dtype=np.float64).tobytes())


def load_dense_kernel(path) -> np.ndarray:
    with open(path, "rb") as f:
        n = int(np.frombuffer(f.read(8), dtype=np.int64)[0])
        data = np.frombuffer(f.read(), dtype=np.float64)
    return data.reshape(n, n).copy()


def sparse_to_csv(affinity: scipy.sparse.spmatrix, path) -> None:
    coo = affinity.tocoo()
    with open(path, "w") as f:
        f.write("p,q,value\n")
        for p, q, v in zip(coo.row, coo.col, coo.data):
            f.write(f"{p},{q},{v:.17g}\n")


def sparse_from_csv(path, n: int) -> scipy.sparse.csr_matrix:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return scipy.sparse.coo_matrix(
        (rows[:, 2], (rows[:, 0].astype(int), rows[:, 1].astype(int))),
        shape=(n, n),
    ).tocsr()

"""Low-dimensional Euclidean embeddings whose dot products reproduce a
clustering kernel, plus the K-means style unary bound computed on them.

The route is always the same: take the objective's base matrix (the affinity
for association objectives, its sign-flipped Laplacian for the cut form, the
degree-normalized affinity for the volume-normalized form), keep the top m
eigenpairs, shift the kept eigenvalues by delta, and scale rows so the
embedding Gram matrix approximates the shifted kernel. At m = n the
approximation is exact and everything here collapses to the kernel bound.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .affinity import NumericalError, degrees, psd_shift
from .bounds import UnaryBound
from .model import Labeling, onehot

__all__ = [
    "EigenDecomposition",
    "Embedding",
    "eig_sym",
    "exact_embedding",
    "rank_m_embedding",
    "frobenius_error",
    "optimal_shift",
    "default_rank",
    "spectral_unary_bound",
    "spectral_baseline",
    "export_embedding",
]

DENSE_EIG_LIMIT = 2000
CLAMP_REL = 1e-10
NOT_PSD_REL = 1e-6
DEFAULT_RANK_CAP = 64
DEFAULT_RANK_TOL = 0.1


@dataclass(frozen=True)
class EigenDecomposition:
    """Full symmetric decomposition M = V' diag(lam) V, rows of V are
    eigenvectors, lam sorted descending, sign fixed so each eigenvector's
    largest-magnitude entry is positive."""

    V: np.ndarray
    lam: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return self.V.T @ (self.lam[:, None] * self.V)


def eig_sym(M) -> EigenDecomposition:
    if scipy.sparse.issparse(M):
        M = M.toarray()
    M = np.asarray(M, dtype=np.float64)
    try:
        lam, vec = scipy.linalg.eigh(M)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(f"symmetric eigensolver failed: {exc}") from exc
    order = np.argsort(lam)[::-1]
    lam = lam[order]
    V = vec[:, order].T
    flip = V[np.arange(V.shape[0]), np.argmax(np.abs(V), axis=1)] < 0
    V[flip] *= -1.0
    return EigenDecomposition(V=V, lam=lam)


@dataclass(frozen=True)
class Embedding:
    """Points φ_p (rows) whose weighted Gram approximates a shifted kernel.

    kept holds the raw base-matrix eigenvalues in use; the residual_* fields
    aggregate the discarded spectrum (sum, sum of squares, count) so the
    approximation error is available even when only the top of the spectrum
    was ever computed. discarded carries the explicit tail when known.
    """

    points: np.ndarray
    kept: np.ndarray
    delta: float
    objective: str
    residual_sum: float
    residual_sumsq: float
    residual_count: int
    weights: np.ndarray | None = None
    discarded: np.ndarray | None = None

    @property
    def m(self) -> int:
        return self.points.shape[1]

    @property
    def frobenius(self) -> float:
        """Approximation error of the shifted kernel, in the plain Frobenius
        norm for unweighted objectives and the weight-scaled one otherwise."""
        d = self.delta
        return float(
            np.sqrt(
                max(
                    self.residual_sumsq
                    + 2.0 * d * self.residual_sum
                    + d * d * self.residual_count,
                    0.0,
                )
            )
        )


def _clamped_sqrt(vals: np.ndarray, scale: float) -> np.ndarray:
    out = vals.copy()
    out[np.abs(out) <= CLAMP_REL * max(scale, 1e-300)] = 0.0
    if np.any(out < 0):
        worst = float(out.min())
        raise ValueError(
            f"matrix is not positive semi-definite: eigenvalue {worst:.6g}"
        )
    return np.sqrt(out)


def exact_embedding(kernel, weights: np.ndarray | None = None) -> Embedding:
    """Full-rank embedding of a p.s.d. kernel: φ_p = sqrt(lam) * V[:, p].

    Eigenvalues tiny relative to the largest are clamped to zero; anything
    below -1e-6 of the largest is a hard error.
    """
    dec = eig_sym(kernel)
    top = float(np.abs(dec.lam).max()) if dec.lam.size else 0.0
    if dec.lam.size and dec.lam[-1] < -NOT_PSD_REL * max(top, 1e-300):
        raise ValueError(
            f"matrix is not positive semi-definite: eigenvalue {dec.lam[-1]:.6g}"
        )
    clamped = np.clip(dec.lam, 0.0, None)
    clamped[clamped <= CLAMP_REL * max(top, 1e-300)] = 0.0
    points = dec.V.T * np.sqrt(clamped)[None, :]
    return Embedding(
        points=points,
        kept=dec.lam.copy(),
        delta=0.0,
        objective="wkkm",
        residual_sum=0.0,
        residual_sumsq=0.0,
        residual_count=0,
        weights=None if weights is None else np.asarray(weights, dtype=np.float64),
        discarded=np.empty(0),
    )


def _base_matrix(objective: str, affinity, weights):
    """Matrix whose top eigenpairs drive the embedding, plus row scaling
    and the point weights the embedding carries."""
    sparse = scipy.sparse.issparse(affinity)
    if objective == "aa":
        return affinity, None, None
    if objective == "ac":
        d = degrees(affinity)
        if sparse:
            return affinity - scipy.sparse.diags(d), None, None
        return affinity - np.diag(d), None, None
    if objective == "nc":
        d = degrees(affinity)
        if np.any(d <= 0):
            raise ValueError("nonpositive degree: volume weights undefined")
        rs = 1.0 / np.sqrt(d)
        if sparse:
            R = scipy.sparse.diags(rs)
            return R @ affinity @ R, rs, d
        return affinity * np.outer(rs, rs), rs, d
    if objective == "wkkm":
        if weights is None:
            return affinity, None, None
        w = np.asarray(weights, dtype=np.float64)
        if np.any(w <= 0):
            raise ValueError("weights must be strictly positive")
        sq = np.sqrt(w)
        if sparse:
            R = scipy.sparse.diags(sq)
            return R @ affinity @ R, 1.0 / sq, w
        return affinity * np.outer(sq, sq), 1.0 / sq, w
    raise ValueError(f"unknown objective {objective!r}")


def _top_spectrum(base, m: int):
    """Top-m eigenpairs plus aggregate statistics of the rest."""
    n = base.shape[0]
    if n <= DENSE_EIG_LIMIT or not scipy.sparse.issparse(base) or m >= n - 1:
        dec = eig_sym(base)
        kept, V = dec.lam[:m], dec.V[:m]
        tail = dec.lam[m:]
        return kept, V, float(tail.sum()), float((tail * tail).sum()), tail
    try:
        lam, vec = scipy.sparse.linalg.eigsh(base, k=m, which="LA")
    except scipy.sparse.linalg.ArpackNoConvergence as exc:
        raise NumericalError(f"sparse eigensolver failed: {exc}") from exc
    order = np.argsort(lam)[::-1]
    kept = lam[order]
    V = vec[:, order].T
    flip = V[np.arange(m), np.argmax(np.abs(V), axis=1)] < 0
    V[flip] *= -1.0
    trace = float(base.diagonal().sum())
    sumsq = float((base.multiply(base)).sum())
    return (
        kept,
        V,
        trace - float(kept.sum()),
        sumsq - float((kept * kept).sum()),
        None,
    )


def frobenius_error(eigenvalues, m: int, delta: float = 0.0) -> float:
    """sqrt of the summed squared discarded shifted eigenvalues.

    Pass the spectrum of the objective's base matrix (descending); for the
    volume-normalized objective that spectrum is already degree-scaled, so
    this value is the weighted approximation error.
    """
    lam = eigenvalues.lam if isinstance(eigenvalues, EigenDecomposition) else eigenvalues
    lam = np.asarray(lam, dtype=np.float64)
    tail = lam[m:] + delta
    return float(np.sqrt((tail * tail).sum()))


def optimal_shift(discarded) -> float:
    """The shift minimizing the approximation error: minus the mean of the
    discarded eigenvalues."""
    tail = np.asarray(discarded, dtype=np.float64)
    if tail.size == 0:
        raise ValueError("no discarded eigenvalues: shift is unconstrained")
    return float(-tail.mean())


def default_rank(
    eigenvalues,
    delta: float | None = None,
    tol: float = DEFAULT_RANK_TOL,
    cap: int = DEFAULT_RANK_CAP,
) -> int:
    """Smallest m whose relative approximation error is at most tol.

    With delta=None each candidate m is scored at its own best shift. Falls
    back to the cap (or n) when the target is unreachable.
    """
    lam = eigenvalues.lam if isinstance(eigenvalues, EigenDecomposition) else eigenvalues
    lam = np.asarray(lam, dtype=np.float64)
    n = lam.size
    limit = min(cap, n)
    for m in range(1, limit + 1):
        if m == n:
            return m
        d = optimal_shift(lam[m:]) if delta is None else delta
        err = frobenius_error(lam, m, d)
        norm = float(np.sqrt(((lam + d) ** 2).sum()))
        if err <= tol * max(norm, 1e-300):
            return m
    return limit


def rank_m_embedding(
    objective: str,
    affinity,
    m: int | None = None,
    delta: float | None = None,
    weights: np.ndarray | None = None,
) -> Embedding:
    """Rank-m isometry embedding for one objective.

    Keeps the top m eigenpairs of the base matrix, so the Gram matrix of the
    embedding is the best rank-m approximation of the shifted kernel. delta
    defaults to the error-minimizing shift of the discarded spectrum (the
    p.s.d. shift when m = n leaves nothing discarded); every kept shifted
    eigenvalue must come out nonnegative or the shift is too small.
    """
    base, row_scale, w = _base_matrix(objective, affinity, weights)
    n = base.shape[0]
    if m is None:
        dec_lam = _full_or_estimated_spectrum(base)
        m = default_rank(dec_lam, delta)
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= n, got m={m}, n={n}")

    kept, V, res_sum, res_sumsq, tail = _top_spectrum(base, m)
    if delta is None:
        if m == n:
            delta = psd_shift(base)
        else:
            delta = -res_sum / (n - m)

    shifted = kept + delta
    scale = float(np.abs(kept).max()) if kept.size else 0.0
    try:
        roots = _clamped_sqrt(shifted, scale)
    except ValueError as exc:
        raise ValueError(
            f"shift {delta:.6g} is too small for the kept spectrum: {exc}"
        ) from exc

    points = V.T * roots[None, :]
    if row_scale is not None:
        points = points * row_scale[:, None]
    return Embedding(
        points=points,
        kept=kept,
        delta=float(delta),
        objective=objective,
        residual_sum=res_sum,
        residual_sumsq=res_sumsq,
        residual_count=n - m,
        weights=w,
        discarded=tail,
    )


def _full_or_estimated_spectrum(base) -> np.ndarray:
    if scipy.sparse.issparse(base) and base.shape[0] > DENSE_EIG_LIMIT:
        k = min(DEFAULT_RANK_CAP + 1, base.shape[0] - 1)
        lam, _ = scipy.sparse.linalg.eigsh(base, k=k, which="LA")
        return np.sort(lam)[::-1]
    return eig_sym(base).lam


def spectral_unary_bound(embedding: Embedding, labeling: Labeling) -> UnaryBound:
    """Per-point costs w_p ||φ_p - μ_k||² against the current weighted
    segment centers; empty segments contribute a zero cost column. The
    constant -Σ_p w_p ||φ_p||² aligns the bound's value with the kernel
    relaxation sum of the approximating kernel.
    """
    phi = embedding.points
    n = phi.shape[0]
    w = (
        np.ones(n)
        if embedding.weights is None
        else np.asarray(embedding.weights, dtype=np.float64)
    )
    X = onehot(labeling)
    masses = w @ X
    live = masses > 0
    mu = (phi.T @ (w[:, None] * X[:, live])) / masses[live][None, :]

    costs = np.zeros((n, labeling.k))
    sq_phi = (phi * phi).sum(axis=1)
    diffs = (
        sq_phi[:, None] - 2.0 * (phi @ mu) + (mu * mu).sum(axis=0)[None, :]
    )
    costs[:, live] = w[:, None] * diffs
    constant = -float((w * sq_phi).sum())
    return UnaryBound(costs=costs, constant=constant)


def spectral_baseline(objective: str, affinity, k: int, seed: int = 0) -> Labeling:
    """The common discretization heuristic: rows of the top-k eigenvectors
    of the base matrix, clustered with plain K-means. For comparison only."""
    from .kmeans import run_kmeans

    base, _, _ = _base_matrix(objective, affinity, None)
    kept, V, *_ = _top_spectrum(base, min(k, base.shape[0]))
    state = run_kmeans(V.T.copy(), k, seed=seed)
    return state.labeling


def export_embedding(embedding: Embedding, csv_path, sidecar_path=None) -> None:
    """CSV of the embedding rows plus a JSON sidecar with the spectrum
    bookkeeping (kept eigenvalues, shift, approximation error)."""
    np.savetxt(csv_path, embedding.points, delimiter=",", fmt="%.17g")
    if sidecar_path is not None:
        payload = {
            "m": embedding.m,
            "delta": embedding.delta,
            "objective": embedding.objective,
            "kept_eigenvalues": embedding.kept.tolist(),
            "frobenius_error": embedding.frobenius,
            "weighted": embedding.weights is not None,
        }
        with open(sidecar_path, "w") as f:
            json.dump(payload, f, indent=2)

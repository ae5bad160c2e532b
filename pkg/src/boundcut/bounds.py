"""Concave relaxation of the clustering energies and its linear Taylor bound.

Each objective in this package can be written per segment as
e(X) = -X'KX / w'X for a suitable matrix K and weight vector w (after a
diagonal shift that makes K p.s.d. and changes the energy by a constant per
nonempty segment). That fraction, extended to real nonnegative X, is concave
wherever w'X > 0, so its first-order expansion at the current labeling is an
upper bound that touches. Minimizing the resulting per-point linear costs
(plus any MRF terms, kept exact) can only lower the shifted energy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse

from .affinity import degrees, psd_shift
from .model import JointEnergySpec, Labeling, onehot
from .objectives import eval_label_cost, eval_potts, eval_robust_pn

__all__ = [
    "ConcaveSurrogate",
    "UnaryBound",
    "JointBound",
    "build_surrogate",
    "relaxation_value",
    "relaxation_gradient",
    "taylor_unary_bound",
    "joint_bound",
    "dump_costs_csv",
]


@dataclass(frozen=True)
class ConcaveSurrogate:
    """The matrix K, weights w and shift delta behind e(X) = -X'KX / w'X.

    kernel is symmetric p.s.d. (within tolerance); on Boolean indicators the
    relaxation equals the original objective minus delta per nonempty segment.
    """

    kernel: np.ndarray
    weights: np.ndarray
    delta: float
    objective: str

    @property
    def n(self) -> int:
        return self.kernel.shape[0]


def build_surrogate(
    objective: str,
    affinity,
    delta: float | None = None,
    weights: np.ndarray | None = None,
) -> ConcaveSurrogate:
    """Construct the surrogate for one objective.

    aa:   K = delta I + A,      w = 1
    ac:   K = delta I + A - D,  w = 1
    nc:   K = delta D + A,      w = d   (needs all degrees positive)
    wkkm: K = W K0 W + delta W  for a caller-supplied kernel K0 and weights

    When delta is omitted it is computed from the smallest eigenvalue of the
    appropriate (weight-normalized) matrix, with a small safety margin.
    Sparse affinities stay sparse throughout.
    """
    sparse = scipy.sparse.issparse(affinity)
    A = affinity if sparse else np.asarray(affinity, dtype=np.float64)
    n = A.shape[0]
    if objective == "aa":
        w = np.ones(n)
        base = A
    elif objective == "ac":
        w = np.ones(n)
        d = degrees(A)
        base = A - (scipy.sparse.diags(d) if sparse else np.diag(d))
    elif objective == "nc":
        d = degrees(A)
        if np.any(d <= 0):
            raise ValueError("nonpositive degree: volume weights undefined")
        w = d
        base = A
    elif objective == "wkkm":
        if weights is None:
            w = np.ones(n)
        else:
            w = np.asarray(weights, dtype=np.float64)
            if np.any(w <= 0):
                raise ValueError("weights must be strictly positive")
        if sparse:
            scale = scipy.sparse.diags(w)
            base = scale @ A @ scale
        else:
            base = A * np.outer(w, w)
    else:
        raise ValueError(f"unknown objective {objective!r}")

    if delta is None:
        if objective in ("aa", "ac"):
            delta = psd_shift(base)
        else:
            delta = psd_shift(base, weights=w)
    if sparse:
        shift = scipy.sparse.identity(n) if objective in ("aa", "ac") else scipy.sparse.diags(w)
        kernel = (base + delta * shift).tocsr()
    else:
        kernel = base + delta * (np.eye(n) if objective in ("aa", "ac") else np.diag(w))
    return ConcaveSurrogate(kernel=kernel, weights=w, delta=float(delta), objective=objective)


def relaxation_value(surrogate: ConcaveSurrogate, X: np.ndarray) -> float:
    """-X'KX / w'X for one nonnegative real segment vector."""
    x = np.asarray(X, dtype=np.float64)
    mass = float(surrogate.weights @ x)
    if mass <= 0:
        raise ValueError("segment has no weight mass")
    return -float(x @ (surrogate.kernel @ x)) / mass


def relaxation_gradient(surrogate: ConcaveSurrogate, X_t: np.ndarray) -> np.ndarray:
    """Gradient of the relaxation at X_t (requires positive weight mass):

    w (X_t'K X_t) / (w'X_t)^2 - 2 K X_t / (w'X_t)
    """
    x = np.asarray(X_t, dtype=np.float64)
    mass = float(surrogate.weights @ x)
    if mass <= 0:
        raise ValueError("segment has no weight mass")
    kx = surrogate.kernel @ x
    return surrogate.weights * (x @ kx) / mass**2 - 2.0 * kx / mass


@dataclass(frozen=True)
class UnaryBound:
    """Per-point per-label linear costs plus an explicit scalar offset.

    value(S) = sum_p costs[p, S_p] + constant; at the labeling the bound was
    built from this equals the relaxation sum exactly.
    """

    costs: np.ndarray
    constant: float

    def value(self, labeling: Labeling) -> float:
        n = self.costs.shape[0]
        return float(self.costs[np.arange(n), labeling.labels].sum()) + self.constant

    def value_onehot(self, X: np.ndarray) -> float:
        """Evaluate on a relaxed (n, K) assignment matrix."""
        return float((self.costs * X).sum()) + self.constant

    def argmin_labeling(self, k: int | None = None) -> Labeling:
        """Pointwise minimizer (lowest label index on ties)."""
        return Labeling(np.argmin(self.costs, axis=1), k or self.costs.shape[1])


def taylor_unary_bound(surrogate: ConcaveSurrogate, labeling: Labeling) -> UnaryBound:
    """Linear bound at the current labeling.

    Nonempty segments get their relaxation gradient as a cost column; empty
    segments get a zero column, which is a valid supergradient at the origin
    because the relaxation is never positive. The constant realigns the bound
    value at the current labeling with the relaxation sum exactly.
    """
    X = onehot(labeling)
    kx = surrogate.kernel @ X
    masses = surrogate.weights @ X
    quads = np.einsum("nk,nk->k", X, kx)

    costs = np.zeros_like(X)
    live = masses > 0
    costs[:, live] = (
        surrogate.weights[:, None] * (quads[live] / masses[live] ** 2)[None, :]
        - 2.0 * kx[:, live] / masses[live][None, :]
    )
    value_here = -float((quads[live] / masses[live]).sum())
    at_current = float(costs[np.arange(X.shape[0]), labeling.labels].sum())
    return UnaryBound(costs=costs, constant=value_here - at_current)


@dataclass(frozen=True)
class JointBound:
    """Unary clustering bound plus the untouched MRF terms of a spec."""

    unary: UnaryBound
    spec: JointEnergySpec = field(repr=False)

    def value(self, labeling: Labeling) -> float:
        total = self.unary.value(labeling)
        s = self.spec
        mrf = 0.0
        if s.potts is not None:
            mrf += eval_potts(s.potts, labeling)
        if s.label_cost is not None:
            mrf += eval_label_cost(s.label_cost, labeling)
        if s.robust_pn is not None:
            mrf += eval_robust_pn(s.robust_pn, labeling)
        return total + s.gamma * mrf


def joint_bound(
    spec: JointEnergySpec,
    labeling: Labeling,
    surrogate: ConcaveSurrogate | None = None,
) -> JointBound:
    """Bound the clustering part at the current labeling, pass MRF through."""
    if surrogate is None:
        surrogate = build_surrogate(spec.objective, spec.affinity, weights=spec.weights)
    return JointBound(unary=taylor_unary_bound(surrogate, labeling), spec=spec)


def dump_costs_csv(bound: UnaryBound, path) -> None:
    """Debug dump: one row per point, one column per label, then the offset."""
    n, k = bound.costs.shape
    with open(path, "w") as f:
        f.write(",".join(f"label_{j + 1}" for j in range(k)) + "\n")
        for p in range(n):
            f.write(",".join(f"{c:.17g}" for c in bound.costs[p]) + "\n")
        f.write(f"# constant,{bound.constant:.17g}\n")

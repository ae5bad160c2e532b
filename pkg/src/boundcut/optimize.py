"""Outer optimization loops: move-making descent on bound estimates.

Three drivers share one engine. kernel_cut re-estimates the concave
surrogate's linear bound around the current labeling and descends it with
expansion (or swap) moves; spectral_cut does the same on a rank-m embedding,
guaranteeing descent of the embedded energy while the exact energy is
tracked alongside; pseudo_bound_cut sweeps the diagonal shift through its
critical values each round, evaluates the true energy of every candidate
labeling, and keeps the best. All loops record a per-iteration trace.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .bounds import ConcaveSurrogate, JointBound, build_surrogate, joint_bound, taylor_unary_bound
from .embedding import Embedding, rank_m_embedding, spectral_baseline, spectral_unary_bound
from .graphcut import MoveProblem, expansion_move, swap_move
from .kmeans import grid_patch_init
from .model import Grid, JointEnergySpec, Labeling
from .objectives import eval_joint

POLICIES = ("after_expansion_loop", "after_each_move", "at_convergence")
DESCENT_SLACK = 1e-9


@dataclass(frozen=True)
class Schedule:
    """When to re-estimate the bound, and when to stop.

    after_expansion_loop re-centers once per full sweep of moves (the
    default), after_each_move re-centers before every single move, and
    at_convergence keeps one bound until moves stop changing the labeling.
    """

    policy: str = "after_expansion_loop"
    max_outer: int = 100
    tol: float = 1e-7
    inner_cap: int = 50

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}; pick one of {POLICIES}")
        if self.tol <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_outer < 1 or self.inner_cap < 1:
            raise ValueError("iteration caps must be at least 1")


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    energy: float
    bound: float
    labeling_hash: str
    wall_time: float
    approx_energy: float | None = None


@dataclass
class RunTrace:
    """Per-outer-iteration energies, bound values and labeling fingerprints.

    Two runs of the same seeded problem agree on everything except
    wall_time, which is measurement rather than content.
    """

    records: list[TraceRecord] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def append(self, record: TraceRecord) -> None:
        self.records.append(record)

    def energies(self) -> list[float]:
        return [r.energy for r in self.records]

    def approx_energies(self) -> list[float]:
        return [r.approx_energy for r in self.records if r.approx_energy is not None]

    def to_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            if self.meta:
                fh.write(json.dumps({"meta": self.meta}) + "\n")
            for r in self.records:
                row = {
                    "iteration": r.iteration,
                    "energy": r.energy,
                    "bound": r.bound,
                    "labeling_hash": r.labeling_hash,
                    "wall_time": r.wall_time,
                }
                if r.approx_energy is not None:
                    row["approx_energy"] = r.approx_energy
                fh.write(json.dumps(row) + "\n")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["iteration", "energy", "bound", "labeling_hash", "wall_time", "approx_energy"]
            )
            for r in self.records:
                writer.writerow(
                    [r.iteration, r.energy, r.bound, r.labeling_hash,
                     r.wall_time, "" if r.approx_energy is None else r.approx_energy]
                )


def labeling_hash(labeling: Labeling) -> str:
    return hashlib.sha1(labeling.labels.astype(np.int64).tobytes()).hexdigest()[:16]


def initial_labeling(spec: JointEnergySpec, k: int, method="random",
                     seed: int = 0, grid: Grid | None = None) -> Labeling:
    """Starting points: seeded uniform labels, k-means on a small
    embedding, or rectangular patches of a grid."""
    n = spec.affinity.shape[0]
    if isinstance(method, Labeling):
        return method
    if method == "random":
        return Labeling(np.random.default_rng(seed).integers(0, k, n), k)
    if method == "spectral":
        return spectral_baseline(spec.objective, spec.affinity, k, seed=seed)
    if method == "patches":
        if grid is None:
            raise ValueError("patch initialization needs the grid shape")
        return grid_patch_init(grid, k)
    raise ValueError(f"unknown initialization {method!r}")


# ---------------------------------------------------------------------------
# shared engine
# ---------------------------------------------------------------------------

def _mrf_weight_total(spec: JointEnergySpec) -> float:
    total = 0.0
    if spec.potts is not None:
        total += float(spec.potts.weights.sum())
    if spec.label_cost is not None:
        total += float(spec.label_cost.h.sum())
    if spec.robust_pn is not None:
        total += spec.robust_pn.T * len(spec.robust_pn.factors)
    return spec.gamma * total


def _apply_constraints(costs: np.ndarray, constraints, spec) -> np.ndarray:
    """Seeded points get a prohibitive cost on every label but their own.

    The penalty exceeds any achievable energy difference, so a constrained
    point never moves; capacities stay finite as the flow layer requires.
    """
    if constraints is None:
        return costs
    fixed = np.flatnonzero(constraints >= 0)
    if fixed.size == 0:
        return costs
    out = costs.copy()
    huge = 1e6 * (1.0 + float(np.abs(costs).sum()) + _mrf_weight_total(spec))
    out[fixed] += huge
    out[fixed, constraints[fixed]] -= huge
    return out


def _force_constraints(labeling: Labeling, constraints) -> Labeling:
    if constraints is None:
        return labeling
    fixed = constraints >= 0
    if not np.any(fixed):
        return labeling
    labels = labeling.labels.copy()
    labels[fixed] = constraints[fixed]
    return labeling.with_labels(labels)


def _move_list(k: int, moves: str):
    if moves == "expansion":
        return list(range(k))
    if moves == "swap":
        return list(itertools.combinations(range(k), 2))
    raise ValueError(f"unknown move kind {moves!r}")


def _single_move(problem: MoveProblem, step, moves: str) -> Labeling:
    if moves == "expansion":
        return expansion_move(problem, step)
    return swap_move(problem, *step)


def _descend(spec, init, schedule, moves, bound_factory, monotone_energy,
             track_exact=None, on_move=None, constraints=None):
    """Generic outer loop; returns (labeling, trace).

    bound_factory(labeling) -> JointBound; monotone_energy is the quantity
    the bound provably decreases (reverting and stopping if numerics ever
    say otherwise); track_exact optionally supplies a second energy that
    takes over the record's energy field.
    """
    schedule = schedule or Schedule()
    lab = _force_constraints(init, constraints)
    trace = RunTrace()
    start = time.perf_counter()

    def record(iteration, labeling, bound_val):
        e = monotone_energy(labeling)
        if track_exact is not None:
            trace.append(TraceRecord(iteration, track_exact(labeling), bound_val,
                                     labeling_hash(labeling),
                                     time.perf_counter() - start, e))
        else:
            trace.append(TraceRecord(iteration, e, bound_val, labeling_hash(labeling),
                                     time.perf_counter() - start))
        return e

    e_prev = record(0, lab, bound_factory(lab).value(lab))

    def run_sweep(labeling, bound):
        costs = _apply_constraints(bound.unary.costs, constraints, spec)
        for step in _move_list(labeling.k, moves):
            problem = MoveProblem(costs, labeling, spec.potts,
                                  spec.label_cost, spec.robust_pn, spec.gamma)
            new = _single_move(problem, step, moves)
            if on_move is not None:
                on_move(step, problem, labeling, new)
            labeling = new
        return labeling

    converged = False
    for outer in range(1, schedule.max_outer + 1):
        if schedule.policy == "after_expansion_loop":
            bound = bound_factory(lab)
            new = run_sweep(lab, bound)
        elif schedule.policy == "after_each_move":
            new = lab
            for step in _move_list(lab.k, moves):
                bound = bound_factory(new)
                costs = _apply_constraints(bound.unary.costs, constraints, spec)
                problem = MoveProblem(costs, new, spec.potts,
                                      spec.label_cost, spec.robust_pn, spec.gamma)
                candidate = _single_move(problem, step, moves)
                if on_move is not None:
                    on_move(step, problem, new, candidate)
                new = candidate
        else:  # at_convergence: ride one bound until moves stop changing labels
            bound = bound_factory(lab)
            new = lab
            for _ in range(schedule.inner_cap):
                swept = run_sweep(new, bound)
                if np.array_equal(swept.labels, new.labels):
                    break
                new = swept

        e_new = monotone_energy(new)
        if e_new > e_prev + DESCENT_SLACK * abs(e_prev) + 1e-15:
            # numerics or an inexact gadget produced an uphill step; keep
            # the pre-step labeling and stop rather than report a bad trace
            trace.meta["guard_tripped"] = True
            break
        unchanged = np.array_equal(new.labels, lab.labels)
        lab = new
        if schedule.policy == "after_each_move":
            bound = bound_factory(lab)
        record(outer, lab, bound.value(lab))
        if unchanged or abs(e_new - e_prev) <= schedule.tol * max(1.0, abs(e_prev)):
            converged = True
            e_prev = e_new
            break
        e_prev = e_new

    trace.meta.setdefault("converged", converged)
    trace.meta["iterations"] = len(trace.records) - 1
    return lab, trace


# ---------------------------------------------------------------------------
# the three drivers
# ---------------------------------------------------------------------------

def kernel_cut(spec: JointEnergySpec, init: Labeling, schedule: Schedule | None = None,
               moves: str = "expansion", on_move=None, constraints=None,
               surrogate: ConcaveSurrogate | None = None):
    """Bound-and-move descent of the exact joint energy.

    Builds the p.s.d. surrogate once, re-linearizes it around the current
    labeling per the schedule, and lets graph moves minimize linear costs
    plus the untouched MRF terms. The true energy is evaluated every
    iteration and is non-increasing along the returned trace.
    """
    if surrogate is None:
        surrogate = build_surrogate(spec.objective, spec.affinity, weights=spec.weights)
    lab, trace = _descend(
        spec, init, schedule, moves,
        bound_factory=lambda lb: joint_bound(spec, lb, surrogate),
        monotone_energy=lambda lb: eval_joint(spec, lb).total,
        on_move=on_move, constraints=constraints,
    )
    trace.meta["driver"] = "kernel_cut"
    trace.meta["delta"] = surrogate.delta
    return lab, trace


def _embedding_energy(emb: Embedding, spec: JointEnergySpec, labeling: Labeling) -> float:
    """Joint energy with the clustering part measured on the embedded points.

    The embedding's Gram matrix stands in for the shifted kernel, so the
    clustering term is -sum_k ||sum_{p in k} w_p phi_p||^2 / mass_k.
    """
    w = emb.weights if emb.weights is not None else np.ones(emb.points.shape[0])
    total = 0.0
    for k in range(labeling.k):
        mask = labeling.labels == k
        mass = float(w[mask].sum())
        if mass <= 0:
            continue
        s = (w[mask, None] * emb.points[mask]).sum(axis=0)
        total -= float(s @ s) / mass
    b = eval_joint(spec, labeling)
    return total + (b.total - b.clustering)


def _embedding_bound(spec: JointEnergySpec, embedding: Embedding,
                     labeling: Labeling) -> JointBound:
    return JointBound(unary=spectral_unary_bound(embedding, labeling), spec=spec)


def spectral_cut(spec: JointEnergySpec, init: Labeling, m: int | None = None,
                 delta: float | None = None, schedule: Schedule | None = None,
                 moves: str = "expansion", on_move=None, constraints=None,
                 embedding: Embedding | None = None):
    """Move-making descent on a rank-m embedding of the objective.

    The embedded energy is the monotone quantity; the exact joint energy is
    evaluated alongside and stored in each record's energy field for
    comparison. At m = n the embedded and exact clustering terms differ by
    a labeling-independent constant, so the labeling sequence matches
    kernel_cut exactly when both use the same shift.
    """
    if embedding is None:
        embedding = rank_m_embedding(spec.objective, spec.affinity, m=m,
                                     delta=delta, weights=spec.weights)
    emb = embedding
    lab, trace = _descend(
        spec, init, schedule, moves,
        bound_factory=lambda lb: _embedding_bound(spec, emb, lb),
        monotone_energy=lambda lb: _embedding_energy(emb, spec, lb),
        track_exact=lambda lb: eval_joint(spec, lb).total,
        on_move=on_move, constraints=constraints,
    )
    trace.meta["driver"] = "spectral_cut"
    trace.meta["m"] = emb.m
    trace.meta["delta"] = emb.delta
    trace.meta["frobenius_error"] = emb.frobenius
    return lab, trace


# ---------------------------------------------------------------------------
# pseudo-bound sweep
# ---------------------------------------------------------------------------

def critical_shift_values(costs: np.ndarray, slopes: np.ndarray, upper: float) -> np.ndarray:
    """Shifts in (0, upper) where some point's cheapest label changes.

    costs and slopes define per-point affine label scores cost + shift *
    slope; every pairwise crossing inside the open interval is returned,
    sorted and deduplicated.
    """
    n, k = costs.shape
    out = []
    for a in range(k):
        for b in range(a + 1, k):
            ds = slopes[:, a] - slopes[:, b]
            live = np.abs(ds) > 1e-300
            crossing = np.full(n, -1.0)
            crossing[live] = (costs[live, b] - costs[live, a]) / ds[live]
            good = (crossing > 0) & (crossing < upper)
            out.append(crossing[good])
    if not out:
        return np.empty(0)
    return np.unique(np.concatenate(out))


def sweep_candidates(costs: np.ndarray, slopes: np.ndarray, upper: float):
    """Distinct per-point-argmin labelings across the whole shift interval.

    Returns (shifts, labelings): one representative shift per candidate.
    Both interval midpoints and the breakpoints themselves are probed, with
    argmin ties going to the lowest label, so the sequence is deterministic
    and covers every labeling the affine family can produce on [0, upper].
    """
    critical = critical_shift_values(costs, slopes, upper)
    grid = np.concatenate([[0.0], critical, [upper]])
    mids = (grid[:-1] + grid[1:]) / 2
    probe = np.unique(np.concatenate([grid, mids]))
    shifts, labelings, seen = [], [], set()
    for s in probe:
        labels = np.argmin(costs + s * slopes, axis=1)
        key = labels.tobytes()
        if key not in seen:
            seen.add(key)
            shifts.append(float(s))
            labelings.append(labels)
    return shifts, labelings


def pseudo_cost_family(surrogate: ConcaveSurrogate, labeling: Labeling):
    """Unary costs at shift zero plus their per-unit-shift slopes.

    Shifting the surrogate's diagonal moves every linear-bound cost along
    an affine path: the own-label entry of a point in segment k gains
    -w_p/mass_k per unit, every other live entry gains +w_p/mass_k, and
    empty-segment columns stay at zero. The member at the surrogate's own
    delta reproduces its Taylor bound exactly.
    """
    at_delta = taylor_unary_bound(surrogate, labeling).costs
    w = surrogate.weights
    n, K = labeling.n, labeling.k
    slopes = np.zeros((n, K))
    masses = np.array([float(w[labeling.labels == k].sum()) for k in range(K)])
    live = masses > 0
    slopes[:, live] = w[:, None] / masses[live][None, :]
    own = labeling.labels[:, None] == np.arange(K)[None, :]
    slopes[own] *= -1.0
    base = at_delta - surrogate.delta * slopes
    return base, slopes


def pseudo_bound_cut(spec: JointEnergySpec, init: Labeling,
                     schedule: Schedule | None = None, sweep_cap: int = 32,
                     constraints=None, surrogate: ConcaveSurrogate | None = None):
    """Each round, sweep the diagonal shift across [0, delta_proper],
    evaluate the true energy of every candidate labeling the sweep
    produces, and adopt the best; when nothing improves, stop with the
    current labeling. The proper shift is always among the candidates and
    the trace is monotone in the true energy by construction.

    With MRF terms present each candidate shift re-runs one expansion
    sweep (the set of shifts capped at sweep_cap); without them the
    candidate is the plain per-point cost argmin.
    """
    schedule = schedule or Schedule()
    if surrogate is None:
        surrogate = build_surrogate(spec.objective, spec.affinity, weights=spec.weights)
    delta_proper = surrogate.delta
    has_mrf = spec.gamma > 0 and bool(spec.mrf_terms())

    lab = _force_constraints(init, constraints)
    trace = RunTrace()
    start = time.perf_counter()
    e_prev = eval_joint(spec, lab).total
    trace.append(TraceRecord(0, e_prev, joint_bound(spec, lab, surrogate).value(lab),
                             labeling_hash(lab), time.perf_counter() - start))

    converged = False
    chosen_shifts = []
    for outer in range(1, schedule.max_outer + 1):
        costs, slopes = pseudo_cost_family(surrogate, lab)
        best_lab, best_e, best_shift = None, np.inf, None

        if has_mrf:
            critical = critical_shift_values(costs, slopes, delta_proper)
            shifts = np.concatenate([[0.0], critical, [delta_proper]])
            if shifts.size > sweep_cap:
                idx = np.unique(np.linspace(0, shifts.size - 1, sweep_cap).astype(int))
                shifts = shifts[idx]
            for s in shifts:
                unary = _apply_constraints(costs + s * slopes, constraints, spec)
                candidate = lab
                for step in range(lab.k):
                    problem = MoveProblem(unary, candidate, spec.potts,
                                          spec.label_cost, spec.robust_pn, spec.gamma)
                    candidate = expansion_move(problem, step)
                e = eval_joint(spec, candidate).total
                if e < best_e:
                    best_lab, best_e, best_shift = candidate, e, float(s)
        else:
            base = _apply_constraints(costs, constraints, spec)
            for s, labels in zip(*sweep_candidates(base, slopes, delta_proper)):
                candidate = _force_constraints(lab.with_labels(labels), constraints)
                e = eval_joint(spec, candidate).total
                if e < best_e:
                    best_lab, best_e, best_shift = candidate, e, s

        if best_lab is None or best_e > e_prev + DESCENT_SLACK * abs(e_prev) + 1e-15:
            converged = True
            break
        chosen_shifts.append(best_shift)
        unchanged = np.array_equal(best_lab.labels, lab.labels)
        lab = best_lab
        trace.append(TraceRecord(outer, best_e, joint_bound(spec, lab, surrogate).value(lab),
                                 labeling_hash(lab), time.perf_counter() - start))
        if unchanged or abs(best_e - e_prev) <= schedule.tol * max(1.0, abs(e_prev)):
            converged = True
            e_prev = best_e
            break
        e_prev = best_e

    trace.meta["driver"] = "pseudo_bound_cut"
    trace.meta["delta_proper"] = delta_proper
    trace.meta["chosen_shifts"] = chosen_shifts
    trace.meta["converged"] = converged
    trace.meta["iterations"] = len(trace.records) - 1
    return lab, trace

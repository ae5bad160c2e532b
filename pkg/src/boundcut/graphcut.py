"""Real-capacity max-flow and the binary move layer built on top of it.

The solver is self-contained: augmenting paths over double-precision
residuals, no integer scaling. Move construction reduces one expansion or
swap step to a single min-cut over the move's binary variables, with
auxiliary nodes for label activation costs and truncated-consistency
factors. Inner loops compile with numba when it is installed and fall back
to pure Python otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Labeling, LabelCost, PottsEdges, RobustPnPotts
from .objectives import eval_label_cost, eval_potts, eval_robust_pn

try:
    from numba import njit
except ImportError:  # pragma: no cover - exercised only without numba
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


EPS = 1e-12


@njit(cache=True)
def _dinic(arc_to, res, ptr, adj, source, sink, eps):
    n_nodes = ptr.shape[0] - 1
    level = np.empty(n_nodes, np.int64)
    queue = np.empty(n_nodes, np.int64)
    it = np.empty(n_nodes, np.int64)
    path_node = np.empty(n_nodes + 1, np.int64)
    path_arc = np.empty(n_nodes + 1, np.int64)
    total = 0.0
    while True:
        for i in range(n_nodes):
            level[i] = -1
        level[source] = 0
        queue[0] = source
        head, tail = 0, 1
        while head < tail:
            u = queue[head]
            head += 1
            for j in range(ptr[u], ptr[u + 1]):
                a = adj[j]
                v = arc_to[a]
                if res[a] > eps and level[v] < 0:
                    level[v] = level[u] + 1
                    queue[tail] = v
                    tail += 1
        if level[sink] < 0:
            return total
        for i in range(n_nodes):
            it[i] = ptr[i]
        while True:
            depth = 0
            path_node[0] = source
            found = False
            while depth >= 0:
                u = path_node[depth]
                if u == sink:
                    found = True
                    break
                moved = False
                while it[u] < ptr[u + 1]:
                    a = adj[it[u]]
                    v = arc_to[a]
                    if res[a] > eps and level[v] == level[u] + 1:
                        path_arc[depth] = a
                        depth += 1
                        path_node[depth] = v
                        moved = True
                        break
                    it[u] += 1
                if not moved:
                    level[u] = -2  # dead end for the rest of this phase
                    depth -= 1
            if not found:
                break
            bottleneck = np.inf
            for d in range(depth):
                a = path_arc[d]
                if res[a] < bottleneck:
                    bottleneck = res[a]
            for d in range(depth):
                a = path_arc[d]
                res[a] -= bottleneck
                res[a ^ 1] += bottleneck
            total += bottleneck


@njit(cache=True)
def _residual_reachable(arc_to, res, ptr, adj, source, eps):
    n_nodes = ptr.shape[0] - 1
    seen = np.zeros(n_nodes, np.bool_)
    queue = np.empty(n_nodes, np.int64)
    seen[source] = True
    queue[0] = source
    head, tail = 0, 1
    while head < tail:
        u = queue[head]
        head += 1
        for j in range(ptr[u], ptr[u + 1]):
            a = adj[j]
            v = arc_to[a]
            if res[a] > eps and not seen[v]:
                seen[v] = True
                queue[tail] = v
                tail += 1
    return seen


class FlowGraph:
    """s-t flow network over real capacities.

    Nodes are added incrementally (moves append auxiliary nodes after the
    per-point ones). Arcs are stored in insertion order and the cut side is
    read off deterministically, so identical inputs give identical cuts.
    """

    def __init__(self, n: int = 0):
        self.n = 0
        self._src: list[np.ndarray] = []
        self._snk: list[np.ndarray] = []
        self._u: list[np.ndarray] = []
        self._v: list[np.ndarray] = []
        self._cap: list[np.ndarray] = []
        self._rev: list[np.ndarray] = []
        self._src_acc = None
        self._snk_acc = None
        if n:
            self.add_nodes(n)

    def add_nodes(self, count: int) -> int:
        first = self.n
        self.n += int(count)
        return first

    def _check(self, arr):
        a = np.asarray(arr, dtype=np.float64)
        if not np.all(np.isfinite(a)) or np.any(a < 0):
            raise ValueError("capacities must be finite and nonnegative")
        return a

    def add_edges(self, u, v, cap, rev_cap=None) -> None:
        u = np.atleast_1d(np.asarray(u, dtype=np.int64))
        v = np.atleast_1d(np.asarray(v, dtype=np.int64))
        cap = np.broadcast_to(self._check(cap), u.shape)
        rev = np.zeros_like(cap) if rev_cap is None else np.broadcast_to(
            self._check(rev_cap), u.shape
        )
        if u.shape != v.shape:
            raise ValueError("endpoint arrays differ in length")
        if u.size == 0:
            return
        if np.any(u == v):
            raise ValueError("self-loop arc")
        if min(u.min(), v.min()) < 0 or max(u.max(), v.max()) >= self.n:
            raise ValueError("arc endpoint out of range")
        self._u.append(u.copy())
        self._v.append(v.copy())
        self._cap.append(np.ascontiguousarray(cap))
        self._rev.append(np.ascontiguousarray(rev))

    def add_edge(self, u: int, v: int, cap: float, rev_cap: float = 0.0) -> None:
        self.add_edges([u], [v], [cap], [rev_cap])

    def add_terminal(self, node, source_cap=0.0, sink_cap=0.0) -> None:
        node = np.atleast_1d(np.asarray(node, dtype=np.int64))
        if node.size and (node.min() < 0 or node.max() >= self.n):
            raise ValueError("terminal node out of range")
        src = np.broadcast_to(self._check(source_cap), node.shape)
        snk = np.broadcast_to(self._check(sink_cap), node.shape)
        if self._src_acc is None or self._src_acc.size < self.n:
            grown = np.zeros(self.n)
            if self._src_acc is not None:
                grown[: self._src_acc.size] = self._src_acc
            self._src_acc = grown
            grown = np.zeros(self.n)
            if self._snk_acc is not None:
                grown[: self._snk_acc.size] = self._snk_acc
            self._snk_acc = grown
        np.add.at(self._src_acc, node, src)
        np.add.at(self._snk_acc, node, snk)

    def solve(self) -> tuple[float, np.ndarray]:
        """Max-flow value and the boolean source-side mask over all nodes.

        The mask is the residual-reachable set, i.e. the inclusion-minimal
        source side among all minimum cuts; this is what makes the move
        layer's "prefer fewer relabelings" behavior reproducible.
        """
        n = self.n
        src = np.zeros(n) if self._src_acc is None else self._src_acc[:n].copy()
        snk = np.zeros(n) if self._snk_acc is None else self._snk_acc[:n].copy()
        # flow that goes straight through a node never needs search
        direct = np.minimum(src, snk)
        base_flow = float(direct.sum())
        src -= direct
        snk -= direct

        source, sink = n, n + 1
        fr_parts, to_parts, cap_parts = [], [], []
        for u, v, cap, rev in zip(self._u, self._v, self._cap, self._rev):
            m = u.size
            fr = np.empty(2 * m, np.int64)
            to = np.empty(2 * m, np.int64)
            cp = np.empty(2 * m, np.float64)
            fr[0::2], fr[1::2] = u, v
            to[0::2], to[1::2] = v, u
            cp[0::2], cp[1::2] = cap, rev
            fr_parts.append(fr)
            to_parts.append(to)
            cap_parts.append(cp)
        for caps, a, b in ((src, source, None), (snk, None, sink)):
            nodes = np.flatnonzero(caps > 0)
            m = nodes.size
            if m == 0:
                continue
            fr = np.empty(2 * m, np.int64)
            to = np.empty(2 * m, np.int64)
            cp = np.zeros(2 * m, np.float64)
            fr[0::2] = a if a is not None else nodes
            to[0::2] = nodes if a is not None else b
            fr[1::2] = to[0::2]
            to[1::2] = fr[0::2]
            cp[0::2] = caps[nodes]
            fr_parts.append(fr)
            to_parts.append(to)
            cap_parts.append(cp)

        if fr_parts:
            arc_from = np.concatenate(fr_parts)
            arc_to = np.concatenate(to_parts)
            res = np.concatenate(cap_parts)
        else:
            arc_from = np.empty(0, np.int64)
            arc_to = np.empty(0, np.int64)
            res = np.empty(0, np.float64)

        n_nodes = n + 2
        order = np.argsort(arc_from, kind="stable")
        counts = np.bincount(arc_from, minlength=n_nodes)
        ptr = np.zeros(n_nodes + 1, np.int64)
        np.cumsum(counts, out=ptr[1:])
        flow = _dinic(arc_to, res, ptr, order, source, sink, EPS)
        seen = _residual_reachable(arc_to, res, ptr, order, source, EPS)
        return base_flow + flow, seen[:n]


def maxflow(graph: FlowGraph) -> tuple[float, np.ndarray]:
    """Solve the network; returns (min-cut value, source-side mask)."""
    return graph.solve()


# ---------------------------------------------------------------------------
# move construction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MoveProblem:
    """Everything a single binary move needs: the unary table of the current
    bound plus the gamma-weighted regularizers evaluated inside the move.
    """

    unary: np.ndarray
    labeling: Labeling
    potts: PottsEdges | None = None
    label_cost: LabelCost | None = None
    robust_pn: RobustPnPotts | None = None
    gamma: float = 1.0

    def __post_init__(self):
        u = np.asarray(self.unary, dtype=np.float64)
        if u.shape != (self.labeling.n, self.labeling.k):
            raise ValueError(
                f"unary table {u.shape} does not match "
                f"(n={self.labeling.n}, k={self.labeling.k})"
            )
        if not np.all(np.isfinite(u)):
            raise ValueError("unary costs must be finite")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        object.__setattr__(self, "unary", u)


def move_energy(problem: MoveProblem, labels) -> float:
    """Unary sum plus gamma times the regularizers, for any labeling of the
    move's label space. This is the exact function the moves minimize and
    the quantity tie-breaking compares."""
    lab = labels if isinstance(labels, Labeling) else Labeling(labels, problem.labeling.k)
    e = float(problem.unary[np.arange(lab.n), lab.labels].sum())
    g = problem.gamma
    if g > 0:
        if problem.potts is not None:
            e += g * eval_potts(problem.potts, lab)
        if problem.label_cost is not None:
            e += g * eval_label_cost(problem.label_cost, lab)
        if problem.robust_pn is not None:
            e += g * eval_robust_pn(problem.robust_pn, lab)
    return e


def _big_capacity(problem: MoveProblem) -> float:
    total = float(np.abs(problem.unary).sum())
    g = problem.gamma
    if problem.potts is not None:
        total += 2 * g * float(problem.potts.weights.sum())
    if problem.label_cost is not None:
        total += g * float(problem.label_cost.h.sum())
    if problem.robust_pn is not None:
        total += 2 * g * problem.robust_pn.T * len(problem.robust_pn.factors)
    return total + 1.0


def _finish(problem: MoveProblem, graph: FlowGraph, nv: int,
            c0: np.ndarray, c1: np.ndarray, proposal_of) -> Labeling:
    """Attach shifted terminal capacities, cut, and apply the tie rule."""
    shift = np.minimum(c0, c1)
    graph.add_terminal(np.arange(nv), c0 - shift, c1 - shift)
    _, source_side = graph.solve()
    new = proposal_of(source_side[:nv])
    current = problem.labeling
    if move_energy(problem, new) < move_energy(problem, current.labels):
        return current.with_labels(new)
    return current


def expansion_move(problem: MoveProblem, alpha: int) -> Labeling:
    """Best labeling where every point keeps its label or switches to alpha.

    Exact for unary plus Potts. Label activation uses one auxiliary node per
    affected label; truncated-consistency factors use two auxiliary nodes
    each and are exact whenever T is at most half the factor size (the
    model-level validator flags factors above that). Ties keep the current
    labeling.
    """
    lab = problem.labeling
    f = lab.labels
    n, K = lab.n, lab.k
    if not 0 <= alpha < K:
        raise ValueError(f"alpha {alpha} outside [0, {K})")
    variables = np.flatnonzero(f != alpha)
    nv = variables.size
    if nv == 0:
        return lab
    node_of = np.full(n, -1, np.int64)
    node_of[variables] = np.arange(nv)

    # x = 1 means "switch to alpha" and sits on the source side, so the
    # minimal cut prefers keeping labels when costs tie.
    c0 = problem.unary[variables, f[variables]].copy()
    c1 = problem.unary[variables, alpha].copy()

    g = FlowGraph(nv)
    gamma = problem.gamma
    big = _big_capacity(problem)

    if problem.potts is not None and gamma > 0:
        e0, e1 = problem.potts.edges[:, 0], problem.potts.edges[:, 1]
        s = gamma * problem.potts.weights
        var0, var1 = node_of[e0] >= 0, node_of[e1] >= 0
        both = var0 & var1
        if np.any(both):
            vp, vq = node_of[e0[both]], node_of[e1[both]]
            sb = s[both]
            e00 = np.where(f[e0[both]] != f[e1[both]], sb, 0.0)
            np.add.at(c1, vp, -sb)
            np.add.at(c1, vq, sb - e00)
            g.add_edges(vp, vq, 2 * sb - e00)
        half = var0 & ~var1
        if np.any(half):
            np.add.at(c0, node_of[e0[half]], s[half])
        half = ~var0 & var1
        if np.any(half):
            np.add.at(c0, node_of[e1[half]], s[half])

    if problem.label_cost is not None and gamma > 0:
        h = gamma * problem.label_cost.h
        if h.size != K:
            raise ValueError(f"label cost vector has {h.size} entries for k={K}")
        if h[alpha] > 0 and nv == n:
            # alpha is currently unused; charge it only if someone switches
            aux = g.add_nodes(1)
            g.add_terminal([aux], sink_cap=h[alpha])
            g.add_edges(np.arange(nv), np.full(nv, aux), big)
        for beta in range(K):
            if beta == alpha or h[beta] <= 0:
                continue
            members = node_of[np.flatnonzero(f == beta)]
            if members.size == 0:
                continue
            # refund h_beta exactly when the move empties beta entirely
            aux = g.add_nodes(1)
            g.add_terminal([aux], source_cap=h[beta])
            g.add_edges(np.full(members.size, aux), members, big)

    if problem.robust_pn is not None and gamma > 0:
        T = problem.robust_pn.T
        for c in problem.robust_pn.factors:
            d_nodes = node_of[c]
            d_nodes = d_nodes[d_nodes >= 0]
            if T <= 0 or d_nodes.size == 0:
                continue
            # branch one: alpha dominates, pay per refusing point (capped)
            aux = g.add_nodes(1)
            g.add_terminal([aux], source_cap=gamma * T)
            g.add_edges(np.full(d_nodes.size, aux), d_nodes, gamma)
            # branch two: the strongest current label keeps dominating;
            # pay per deserter on top of the standing disagreement count
            counts = np.bincount(f[c], minlength=K)
            counts[alpha] = -1
            k_star = int(np.argmax(counts))
            n_star = counts[k_star]
            standing = c.size - n_star
            if n_star > 0 and standing < T:
                members = node_of[c[f[c] == k_star]]
                aux = g.add_nodes(1)
                g.add_terminal([aux], sink_cap=gamma * (T - standing))
                g.add_edges(members, np.full(members.size, aux), gamma)

    def proposal(switch_mask):
        new = f.copy()
        new[variables[switch_mask]] = alpha
        return new

    return _finish(problem, g, nv, c0, c1, proposal)


def swap_move(problem: MoveProblem, alpha: int, beta: int) -> Labeling:
    """Best relabeling of the points currently holding alpha or beta, each
    choosing one of the two. Same exactness and tie rule as expansion_move;
    points under other labels are frozen and fold into constants.
    """
    lab = problem.labeling
    f = lab.labels
    n, K = lab.n, lab.k
    if alpha == beta:
        raise ValueError("swap labels must differ")
    for lbl in (alpha, beta):
        if not 0 <= lbl < K:
            raise ValueError(f"label {lbl} outside [0, {K})")
    variables = np.flatnonzero((f == alpha) | (f == beta))
    nv = variables.size
    if nv == 0:
        return lab
    node_of = np.full(n, -1, np.int64)
    node_of[variables] = np.arange(nv)

    # x = 1 takes alpha (source side), x = 0 takes beta
    c1 = problem.unary[variables, alpha].copy()
    c0 = problem.unary[variables, beta].copy()

    g = FlowGraph(nv)
    gamma = problem.gamma
    big = _big_capacity(problem)

    if problem.potts is not None and gamma > 0:
        e0, e1 = problem.potts.edges[:, 0], problem.potts.edges[:, 1]
        s = gamma * problem.potts.weights
        both = (node_of[e0] >= 0) & (node_of[e1] >= 0)
        if np.any(both):
            vp, vq = node_of[e0[both]], node_of[e1[both]]
            sb = s[both]
            np.add.at(c1, vp, -sb)
            np.add.at(c1, vq, sb)
            g.add_edges(vp, vq, 2 * sb)
        # a frozen neighbor disagrees with alpha and beta alike: constant

    if problem.label_cost is not None and gamma > 0:
        h = gamma * problem.label_cost.h
        if h.size != K:
            raise ValueError(f"label cost vector has {h.size} entries for k={K}")
        all_nodes = np.arange(nv)
        if h[alpha] > 0:
            aux = g.add_nodes(1)
            g.add_terminal([aux], sink_cap=h[alpha])
            g.add_edges(all_nodes, np.full(nv, aux), big)
        if h[beta] > 0:
            aux = g.add_nodes(1)
            g.add_terminal([aux], source_cap=h[beta])
            g.add_edges(np.full(nv, aux), all_nodes, big)

    if problem.robust_pn is not None and gamma > 0:
        T = problem.robust_pn.T
        for c in problem.robust_pn.factors:
            members = node_of[c]
            members = members[members >= 0]
            if T <= 0 or members.size == 0:
                continue
            frozen = f[c][(f[c] != alpha) & (f[c] != beta)]
            m_fixed = np.bincount(frozen, minlength=K).max() if frozen.size else 0
            truncation = min(T, c.size - m_fixed) - (c.size - members.size)
            if truncation <= 0:
                continue
            aux = g.add_nodes(1)
            g.add_terminal([aux], source_cap=gamma * truncation)
            g.add_edges(np.full(members.size, aux), members, gamma)
            aux = g.add_nodes(1)
            g.add_terminal([aux], sink_cap=gamma * truncation)
            g.add_edges(members, np.full(members.size, aux), gamma)

    def proposal(take_alpha):
        new = f.copy()
        new[variables] = np.where(take_alpha, alpha, beta)
        return new

    return _finish(problem, g, nv, c0, c1, proposal)

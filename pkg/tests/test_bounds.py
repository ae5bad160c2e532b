import itertools

import numpy as np
import pytest
import scipy.linalg

from boundcut.bounds import (
    ConcaveSurrogate,
    build_surrogate,
    dump_costs_csv,
    joint_bound,
    relaxation_gradient,
    relaxation_value,
    taylor_unary_bound,
)
from boundcut.model import JointEnergySpec, Labeling, PottsEdges, onehot
from boundcut.objectives import eval_aa, eval_ac, eval_joint, eval_nc, eval_wkkm

EVALUATORS = {"aa": eval_aa, "ac": eval_ac, "nc": eval_nc}


def _affinity(n, seed, nonneg=True):
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.05, 1.0, size=(n, n)) if nonneg else rng.normal(size=(n, n))
    a = 0.5 * (a + a.T)
    np.fill_diagonal(a, 0.0)
    return a


def _identity_surrogate(n):
    return ConcaveSurrogate(np.eye(n), np.ones(n), delta=0.0, objective="wkkm")


def _nonempty_labeling(rng, n, k):
    labels = rng.integers(0, k, n)
    labels[:k] = np.arange(k)
    return Labeling(labels, k)


# --- construction -----------------------------------------------------------

def test_build_surrogate_psd_input_needs_almost_no_shift():
    rng = np.random.default_rng(0)
    b = rng.normal(size=(8, 8))
    gram = b @ b.T
    s = build_surrogate("aa", gram)
    assert s.delta <= 1e-4
    assert np.allclose(s.kernel, gram, atol=1e-4)


def test_build_surrogate_two_point_swap():
    a = np.array([[0.0, 1.0], [1.0, 0.0]])
    s = build_surrogate("aa", a)
    assert abs(s.delta - 1.0) < 1e-4
    assert np.allclose(s.kernel, np.eye(2) + a, atol=1e-4)
    assert scipy.linalg.eigvalsh(s.kernel)[0] >= -1e-8


def test_build_surrogate_volume_weights():
    a = np.array([[0.0, 1.0], [1.0, 0.0]])
    s = build_surrogate("nc", a)
    assert np.allclose(s.weights, [1.0, 1.0])
    assert np.allclose(s.kernel, s.delta * np.eye(2) + a)
    assert scipy.linalg.eigvalsh(s.kernel)[0] >= -1e-8


def test_build_surrogate_kernels_are_psd():
    for seed in range(10):
        a = _affinity(12, seed)
        for objective in ("aa", "ac", "nc"):
            s = build_surrogate(objective, a)
            lam = scipy.linalg.eigvalsh(s.kernel)
            assert lam[0] >= -1e-8 * max(1.0, lam[-1])


def test_build_surrogate_rejects_zero_degree():
    a = np.zeros((3, 3))
    a[0, 1] = a[1, 0] = 1.0
    with pytest.raises(ValueError):
        build_surrogate("nc", a)


# --- relaxation value and gradient -----------------------------------------

def test_relaxation_value_identity_kernel():
    s = _identity_surrogate(2)
    assert relaxation_value(s, np.array([1.0, 1.0])) == -1.0
    assert relaxation_value(s, np.array([1.0, 0.0])) == -1.0
    with pytest.raises(ValueError):
        relaxation_value(s, np.zeros(2))


def test_boolean_relaxation_equals_energy_minus_shift():
    rng = np.random.default_rng(1)
    for objective in ("aa", "ac", "nc"):
        a = _affinity(14, seed=hash(objective) % 100)
        s = build_surrogate(objective, a)
        lab = _nonempty_labeling(rng, 14, 3)
        ehat = sum(
            relaxation_value(s, x) for x in onehot(lab).T if x.sum() > 0
        )
        e = EVALUATORS[objective](a, lab)
        assert abs(ehat - (e - 3 * s.delta)) < 1e-9 * (1 + abs(e))


def test_boolean_relaxation_weighted_kernel_form():
    rng = np.random.default_rng(2)
    b = rng.normal(size=(10, 10))
    kernel = b @ b.T
    w = rng.uniform(0.5, 2.0, size=10)
    s = build_surrogate("wkkm", kernel, weights=w)
    lab = _nonempty_labeling(rng, 10, 2)
    ehat = sum(relaxation_value(s, x) for x in onehot(lab).T)
    e = eval_wkkm(kernel, lab, weights=w)
    assert abs(ehat - (e - 2 * s.delta)) < 1e-9 * (1 + abs(e))


def test_gradient_hand_values():
    s = _identity_surrogate(2)
    assert np.allclose(relaxation_gradient(s, np.array([1.0, 0.0])), [-1.0, 1.0])
    n = 7
    sn = _identity_surrogate(n)
    g = relaxation_gradient(sn, np.ones(n))
    assert np.allclose(g, -np.ones(n) / n)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    h = 1e-6
    for trial in range(50):
        n = int(rng.integers(3, 12))
        objective = ("aa", "ac", "nc")[trial % 3]
        s = build_surrogate(objective, _affinity(n, seed=trial))
        x = rng.uniform(0.1, 1.0, size=n)
        g = relaxation_gradient(s, x)
        fd = np.empty(n)
        for i in range(n):
            xp, xm = x.copy(), x.copy()
            xp[i] += h
            xm[i] -= h
            fd[i] = (relaxation_value(s, xp) - relaxation_value(s, xm)) / (2 * h)
        assert np.allclose(g, fd, rtol=1e-5, atol=1e-6)


def test_concavity_along_segments():
    rng = np.random.default_rng(4)
    for trial in range(200):
        n = int(rng.integers(2, 12))
        objective = ("aa", "ac", "nc")[trial % 3]
        s = build_surrogate(objective, _affinity(n, seed=1000 + trial))
        x = rng.uniform(0.01, 1.0, size=n)
        y = rng.uniform(0.01, 1.0, size=n)
        t = rng.uniform(0.0, 1.0)
        lhs = relaxation_value(s, t * x + (1 - t) * y)
        rhs = t * relaxation_value(s, x) + (1 - t) * relaxation_value(s, y)
        assert lhs >= rhs - 1e-9


# --- the unary bound --------------------------------------------------------

def test_bound_touches_at_expansion_point():
    rng = np.random.default_rng(5)
    for trial in range(30):
        n = int(rng.integers(4, 20))
        k = int(rng.integers(2, 5))
        objective = ("aa", "ac", "nc")[trial % 3]
        s = build_surrogate(objective, _affinity(n, seed=2000 + trial))
        lab = Labeling(rng.integers(0, k, n), k)
        bound = taylor_unary_bound(s, lab)
        ehat = sum(
            relaxation_value(s, x) for x in onehot(lab).T if x.sum() > 0
        )
        assert abs(bound.value(lab) - ehat) <= 1e-9 * (1 + abs(ehat))


def test_bound_dominates_random_booleans():
    rng = np.random.default_rng(6)
    n, k = 16, 3
    for objective in ("aa", "ac", "nc"):
        a = _affinity(n, seed=hash(objective) % 77)
        s = build_surrogate(objective, a)
        lab0 = _nonempty_labeling(rng, n, k)
        bound = taylor_unary_bound(s, lab0)
        for _ in range(200):
            lab = Labeling(rng.integers(0, k, n), k)
            ehat = sum(
                relaxation_value(s, x) for x in onehot(lab).T if x.sum() > 0
            )
            assert bound.value(lab) >= ehat - 1e-9 * (1 + abs(ehat))


def test_bound_dominates_relaxed_points():
    rng = np.random.default_rng(7)
    n, k = 12, 3
    s = build_surrogate("aa", _affinity(n, seed=8))
    lab0 = _nonempty_labeling(rng, n, k)
    bound = taylor_unary_bound(s, lab0)
    for _ in range(200):
        x = rng.uniform(1e-3, 1.0, size=(n, k))
        ehat = sum(relaxation_value(s, x[:, j]) for j in range(k))
        assert bound.value_onehot(x) >= ehat - 1e-9 * (1 + abs(ehat))


def test_bound_dominance_full_enumeration():
    n = 10
    for objective in ("aa", "nc"):
        a = _affinity(n, seed=9)
        s = build_surrogate(objective, a)
        lab0 = Labeling(np.arange(n) % 2, 2)
        bound = taylor_unary_bound(s, lab0)
        evaluate = EVALUATORS[objective]
        for bits in itertools.product((0, 1), repeat=n):
            lab = Labeling(np.array(bits), 2)
            shifted = evaluate(a, lab) - s.delta * lab.nonempty_count()
            assert bound.value(lab) >= shifted - 1e-9 * (1 + abs(shifted))


def test_empty_segment_row_is_zero_and_still_dominates():
    n = 8
    a = _affinity(n, seed=10)
    s = build_surrogate("aa", a)
    lab0 = Labeling(np.zeros(n, dtype=int), 2)  # label 2 unused
    bound = taylor_unary_bound(s, lab0)
    assert np.all(bound.costs[:, 1] == 0.0)
    for bits in itertools.product((0, 1), repeat=n):
        lab = Labeling(np.array(bits), 2)
        shifted = eval_aa(a, lab) - s.delta * lab.nonempty_count()
        assert bound.value(lab) >= shifted - 1e-9 * (1 + abs(shifted))


def test_pointwise_minimizer_descends_true_energy():
    rng = np.random.default_rng(11)
    for trial in range(20):
        n = int(rng.integers(6, 18))
        k = int(rng.integers(2, 4))
        objective = ("aa", "ac", "nc")[trial % 3]
        a = _affinity(n, seed=3000 + trial)
        s = build_surrogate(objective, a)
        lab0 = _nonempty_labeling(rng, n, k)
        nxt = taylor_unary_bound(s, lab0).argmin_labeling()
        e0 = EVALUATORS[objective](a, lab0)
        e1 = EVALUATORS[objective](a, nxt)
        assert e1 <= e0 + 1e-9 * abs(e0)


# --- joint bound ------------------------------------------------------------

def _mrf_spec(n, seed, gamma):
    a = _affinity(n, seed=seed)
    edges = np.array([[i, i + 1] for i in range(n - 1)])
    return JointEnergySpec(
        objective="aa",
        affinity=a,
        gamma=gamma,
        potts=PottsEdges(edges, np.full(n - 1, 0.3)),
    )


def test_joint_bound_without_mrf_is_clustering_bound():
    spec = JointEnergySpec(objective="aa", affinity=_affinity(6, seed=12))
    lab = Labeling(np.array([0, 0, 1, 1, 0, 1]), 2)
    jb = joint_bound(spec, lab)
    assert jb.value(lab) == jb.unary.value(lab)


def test_joint_bound_touches_shifted_joint_energy():
    spec = _mrf_spec(8, seed=13, gamma=1.7)
    lab = Labeling(np.array([0, 0, 1, 1, 0, 1, 0, 1]), 2)
    s = build_surrogate("aa", spec.affinity)
    jb = joint_bound(spec, lab, surrogate=s)
    expected = eval_joint(spec, lab).total - s.delta * lab.nonempty_count()
    assert abs(jb.value(lab) - expected) < 1e-9 * (1 + abs(expected))


def test_joint_bound_global_minimizer_descends():
    spec = _mrf_spec(8, seed=14, gamma=0.9)
    s = build_surrogate("aa", spec.affinity)
    lab0 = Labeling(np.array([0, 1, 0, 1, 0, 1, 0, 1]), 2)
    jb = joint_bound(spec, lab0, surrogate=s)
    best, best_val = None, np.inf
    for bits in itertools.product((0, 1), repeat=8):
        lab = Labeling(np.array(bits), 2)
        v = jb.value(lab)
        if v < best_val:
            best, best_val = lab, v
    e0 = eval_joint(spec, lab0).total
    e1 = eval_joint(spec, best).total
    assert e1 <= e0 + 1e-9 * abs(e0)


def test_costs_csv_dump(tmp_path):
    s = build_surrogate("aa", _affinity(5, seed=15))
    bound = taylor_unary_bound(s, Labeling(np.array([0, 1, 0, 1, 1]), 2))
    path = tmp_path / "costs.csv"
    dump_costs_csv(bound, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "label_1,label_2"
    assert len(lines) == 7

import json

import numpy as np
import pytest
import scipy.sparse
from hypothesis import given
from hypothesis import strategies as st

from boundcut.affinity import degrees, gaussian_kernel
from boundcut.model import (
    Dataset,
    Grid,
    JointEnergySpec,
    LabelCost,
    Labeling,
    PottsEdges,
    RobustPnPotts,
)
from boundcut.objectives import (
    EnergyBreakdown,
    contrast_weights,
    eval_aa,
    eval_ac,
    eval_joint,
    eval_label_cost,
    eval_nc,
    eval_potts,
    eval_robust_pn,
    eval_wkkm,
    grid_edges,
)

PAIR = np.array([[0.0, 1.0], [1.0, 0.0]])


def _rand(n, seed, nonneg=False):
    rng = np.random.default_rng(seed)
    a = rng.uniform(0, 1, size=(n, n)) if nonneg else rng.normal(size=(n, n))
    a = 0.5 * (a + a.T)
    np.fill_diagonal(a, 0.0)
    return a


def test_aa_two_point_hand_values():
    together = Labeling(np.array([0, 0]), k=1)
    apart = Labeling(np.array([0, 1]), k=2)
    assert eval_aa(PAIR, together) == -1.0
    assert eval_aa(PAIR, apart) == 0.0


def test_ac_two_point_hand_values():
    together = Labeling(np.array([0, 0]), k=1)
    apart = Labeling(np.array([0, 1]), k=2)
    assert eval_ac(PAIR, together) == 0.0
    assert eval_ac(PAIR, apart) == 2.0


def test_nc_two_point_hand_values():
    together = Labeling(np.array([0, 0]), k=1)
    apart = Labeling(np.array([0, 1]), k=2)
    assert eval_nc(PAIR, together) == -1.0
    assert eval_nc(PAIR, apart) == 0.0


def test_nc_rejects_isolated_point():
    a = np.zeros((3, 3))
    a[0, 1] = a[1, 0] = 1.0
    with pytest.raises(ValueError):
        eval_nc(a, Labeling(np.array([0, 0, 1]), k=2))


def test_wkkm_with_unit_weights_is_aa():
    a = _rand(12, seed=0)
    lab = Labeling(np.random.default_rng(1).integers(0, 3, 12), k=3)
    assert abs(eval_wkkm(a, lab) - eval_aa(a, lab)) < 1e-12


def test_nc_is_weighted_kernel_energy_with_degree_weights():
    a = _rand(10, seed=2, nonneg=True)
    d = degrees(a)
    scaled = a / np.outer(d, d)
    for seed in range(5):
        lab = Labeling(np.random.default_rng(seed).integers(0, 3, 10), k=3)
        assert abs(eval_nc(a, lab) - eval_wkkm(scaled, lab, weights=d)) < 1e-12


def test_empty_segments_change_nothing():
    a = _rand(8, seed=3)
    labels = np.random.default_rng(4).integers(0, 2, 8)
    small = Labeling(labels, k=2)
    padded = Labeling(labels, k=5)
    for fn in (eval_aa, eval_ac):
        assert fn(a, small) == fn(a, padded)


def test_sparse_affinity_matches_dense():
    a = _rand(15, seed=5, nonneg=True)
    lab = Labeling(np.random.default_rng(6).integers(0, 4, 15), k=4)
    s = scipy.sparse.csr_matrix(a)
    assert abs(eval_aa(s, lab) - eval_aa(a, lab)) < 1e-12
    assert abs(eval_ac(s, lab) - eval_ac(a, lab)) < 1e-12
    assert abs(eval_nc(s, lab) - eval_nc(a, lab)) < 1e-12


@given(st.integers(0, 2**32 - 1))
def test_aa_bounded_by_total_association(seed):
    # each segment's x'Ax / |S| is at most 1'A1 when A is nonnegative
    a = _rand(9, seed=seed % 1000, nonneg=True)
    rng = np.random.default_rng(seed)
    lab = Labeling(rng.integers(0, 3, 9), k=3)
    assert eval_aa(a, lab) <= 0.0
    assert eval_aa(a, lab) >= -3 * a.sum()


def test_potts_counts_cut_edges():
    edges = PottsEdges(np.array([[0, 1], [1, 2], [0, 2]]), np.array([1.0, 2.0, 4.0]))
    assert eval_potts(edges, Labeling(np.array([0, 0, 0]), k=2)) == 0.0
    assert eval_potts(edges, Labeling(np.array([0, 0, 1]), k=2)) == 6.0
    assert eval_potts(edges, Labeling(np.array([0, 1, 0]), k=2)) == 3.0


def test_label_cost_charges_used_labels_only():
    cost = LabelCost(np.array([5.0, 7.0, 11.0]))
    assert eval_label_cost(cost, Labeling(np.array([0, 0]), k=3)) == 5.0
    assert eval_label_cost(cost, Labeling(np.array([0, 2]), k=3)) == 16.0
    with pytest.raises(ValueError):
        eval_label_cost(cost, Labeling(np.array([0]), k=1))


def test_robust_pn_truncates():
    rp = RobustPnPotts([np.arange(5)], T=10.0)
    lab = Labeling(np.array([0, 0, 0, 1, 1]), k=2)
    assert eval_robust_pn(rp, lab) == 2.0
    capped = RobustPnPotts([np.arange(5)], T=1.0)
    assert eval_robust_pn(capped, lab) == 1.0
    uniform = Labeling(np.zeros(5, dtype=int), k=2)
    assert eval_robust_pn(rp, uniform) == 0.0


def test_joint_breakdown_combines_with_gamma():
    a = _rand(6, seed=7, nonneg=True)
    spec = JointEnergySpec(
        objective="aa",
        affinity=a,
        gamma=2.0,
        potts=PottsEdges(np.array([[0, 1]]), np.array([3.0])),
        label_cost=LabelCost(np.array([1.0, 1.0])),
    )
    lab = Labeling(np.array([0, 1, 0, 1, 0, 1]), k=2)
    b = eval_joint(spec, lab)
    assert b.potts == 3.0 and b.label_cost == 2.0 and b.robust_pn == 0.0
    assert abs(b.total - (b.clustering + 2.0 * 5.0)) < 1e-12


def test_breakdown_json_field_names():
    b = EnergyBreakdown(-1.0, 2.0, 0.0, 0.5, 1.5, 2.75)
    d = json.loads(json.dumps(b.as_dict()))
    assert set(d) == {"clustering", "potts", "label_cost", "robust_pn", "gamma", "total"}
    assert d["total"] == 2.75


def test_grid_edges_counts():
    e8, d8 = grid_edges(Grid(3, 3, connectivity=8))
    assert e8.shape == (20, 2)
    assert np.isclose(d8, 1.0).sum() == 12
    assert np.isclose(d8, np.sqrt(2.0)).sum() == 8
    e4, d4 = grid_edges(Grid(3, 3, connectivity=4))
    assert e4.shape == (12, 2)
    assert np.allclose(d4, 1.0)


def test_grid_edges_unordered_pairs_unique():
    e, _ = grid_edges(Grid(4, 5, connectivity=8))
    seen = {tuple(sorted(p)) for p in e.tolist()}
    assert len(seen) == len(e)


def test_contrast_weights_single_edge_example():
    ds = Dataset(np.array([[0.0], [2.0]]), grid=Grid(1, 2))
    pe = contrast_weights(ds, mode="contrast")
    assert pe.weights.shape == (1,)
    # squared difference 4 equals its own neighborhood average
    assert abs(pe.weights[0] - np.exp(-0.5)) < 1e-12


def test_contrast_weights_flat_image_degenerates_to_length():
    ds = Dataset(np.zeros((9, 3)), grid=Grid(3, 3))
    pe = contrast_weights(ds, mode="contrast")
    le = contrast_weights(ds, mode="length")
    assert np.allclose(pe.weights, le.weights)


def test_length_weights_are_inverse_distance():
    ds = Dataset(np.zeros((4, 1)), grid=Grid(2, 2))
    pe = contrast_weights(ds, mode="length")
    straight = np.isclose(pe.weights, 1.0).sum()
    diag = np.isclose(pe.weights, 1.0 / np.sqrt(2.0)).sum()
    assert straight == 4 and diag == 2


def test_contrast_weights_drop_across_edges():
    # left half dark, right half bright: cross-boundary weights are smallest
    img = np.zeros((4, 4, 1))
    img[:, 2:] = 1.0
    ds = Dataset(img.reshape(16, 1), grid=Grid(4, 4))
    pe = contrast_weights(ds)
    diff = np.abs(
        ds.features[pe.edges[:, 0], 0] - ds.features[pe.edges[:, 1], 0]
    )
    crossing = diff > 0
    assert pe.weights[crossing].max() < pe.weights[~crossing].min()

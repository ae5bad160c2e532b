import numpy as np
import pytest
import scipy.linalg

from boundcut.affinity import gaussian_kernel, parzen_density
from boundcut.kmeans import (
    farthest_point_init,
    grid_patch_init,
    kkm_assign_implicit,
    kkm_energy,
    km_assign,
    km_energy,
    kmodes_weak_kkm,
    run_kmeans,
    weak_kkm_energy,
)
from boundcut.model import Dataset, Grid, Labeling
from boundcut.objectives import eval_wkkm


def _two_class_error(pred, truth):
    miss = (pred != truth).mean()
    return min(miss, 1.0 - miss)


def _rings(n_per, seed, r_inner=1.0, r_outer=2.0, noise=0.05):
    rng = np.random.default_rng(seed)
    pts, labels = [], []
    for j, r in enumerate((r_inner, r_outer)):
        t = rng.uniform(0, 2 * np.pi, n_per)
        rr = r + rng.normal(scale=noise, size=n_per)
        pts.append(np.stack([rr * np.cos(t), rr * np.sin(t)], axis=1))
        labels.append(np.full(n_per, j))
    return np.vstack(pts), np.concatenate(labels)


def _psd_kernel(n, seed):
    rng = np.random.default_rng(seed)
    b = rng.normal(size=(n, n))
    return b @ b.T


# --- assignment steps -------------------------------------------------------

def test_km_assign_exact_hit_and_tie_rule():
    means = np.array([[0.0, 0.0], [2.0, 0.0]])
    pts = np.array([[2.0, 0.0], [1.0, 0.0], [0.1, 0.0]])
    lab = km_assign(pts, means)
    assert lab.labels.tolist() == [1, 0, 0]  # middle point ties, lowest wins


def test_km_assign_matches_bruteforce():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(40, 2))
    means = rng.normal(size=(5, 2))
    lab = km_assign(pts, means)
    for p in range(40):
        d = [((pts[p] - m) ** 2).sum() for m in means]
        assert lab.labels[p] == int(np.argmin(d))


def test_kkm_assign_identity_kernel_hand_case():
    lab = Labeling(np.array([0, 0, 1]), 2)
    out = kkm_assign_implicit(np.eye(3), lab)
    assert np.array_equal(out.labels, lab.labels)


def test_kkm_assign_agrees_with_explicit_on_embedding():
    for seed in range(50):
        n = 6 + seed % 15
        kmat = _psd_kernel(n, seed)
        lam, v = scipy.linalg.eigh(kmat)
        phi = v @ np.diag(np.sqrt(np.clip(lam, 0, None)))
        rng = np.random.default_rng(seed + 999)
        labels = rng.integers(0, 3, n)
        labels[:3] = [0, 1, 2]
        lab = Labeling(labels, 3)
        implicit = kkm_assign_implicit(kmat, lab)
        means = np.stack(
            [phi[labels == j].mean(axis=0) for j in range(3)]
        )
        explicit = km_assign(phi, means)
        assert np.array_equal(implicit.labels, explicit.labels)


def test_kkm_assign_skips_empty_segments():
    kmat = _psd_kernel(5, 1)
    lab = Labeling(np.zeros(5, dtype=int), 3)
    out = kkm_assign_implicit(kmat, lab)
    assert set(np.unique(out.labels)) == {0}


# --- energies ---------------------------------------------------------------

def test_three_formulations_agree():
    rng = np.random.default_rng(2)
    pts = rng.normal(size=(25, 3))
    lab = Labeling(rng.integers(0, 4, 25), 4)
    variance = km_energy(pts, lab)

    pairwise = 0.0
    association = 0.0
    for j in range(4):
        sel = pts[lab.labels == j]
        if len(sel) == 0:
            continue
        d2 = ((sel[:, None, :] - sel[None, :, :]) ** 2).sum(axis=2)
        pairwise += d2.sum() / (2 * len(sel))
        association += (sel @ sel.T).sum() / len(sel)
    const = (pts * pts).sum()

    assert abs(variance - pairwise) < 1e-9 * (1 + abs(variance))
    assert abs(variance - (const - association)) < 1e-9 * (1 + abs(variance))


def test_kernel_energy_offsets_pairwise_form_by_trace_term():
    rng = np.random.default_rng(3)
    kmat = _psd_kernel(12, 4)
    w = rng.uniform(0.5, 2.0, 12)
    lab = Labeling(rng.integers(0, 3, 12), 3)
    lhs = kkm_energy(kmat, lab, w)
    rhs = (w * np.diag(kmat)).sum() + eval_wkkm(kmat, lab, w)
    assert abs(lhs - rhs) < 1e-9 * (1 + abs(lhs))


def test_km_energy_kernel_equivalence_on_gram():
    rng = np.random.default_rng(5)
    pts = rng.normal(size=(15, 2))
    lab = Labeling(rng.integers(0, 3, 15), 3)
    gram = pts @ pts.T
    assert abs(km_energy(pts, lab) - kkm_energy(gram, lab)) < 1e-9


# --- full runs --------------------------------------------------------------

def test_run_kmeans_two_blobs():
    rng = np.random.default_rng(6)
    pts = np.vstack(
        [rng.normal(0, 0.3, size=(30, 2)), rng.normal(5, 0.3, size=(30, 2))]
    )
    state = run_kmeans(pts, 2, seed=6)
    truth = np.repeat([0, 1], 30)
    assert _two_class_error(state.labeling.labels, truth) == 0.0
    assert state.converged


def test_run_kmeans_k1_immediate():
    rng = np.random.default_rng(7)
    pts = rng.normal(size=(20, 2))
    w = rng.uniform(0.5, 2.0, 20)
    state = run_kmeans(pts, 1, weights=w, init="farthest")
    assert state.iterations <= 2
    assert np.allclose(state.centers[0], w @ pts / w.sum())


def test_run_kmeans_traces_monotone():
    rng = np.random.default_rng(8)
    for trial in range(50):
        n = int(rng.integers(8, 30))
        pts = rng.normal(size=(n, 2))
        state = run_kmeans(pts, 3, seed=trial, restarts=1)
        e = np.array(state.energy)
        assert np.all(np.diff(e) <= 1e-9 * (1 + np.abs(e[:-1])))


def test_run_kmeans_kernel_traces_monotone():
    rng = np.random.default_rng(9)
    for trial in range(50):
        n = int(rng.integers(8, 25))
        kmat = _psd_kernel(n, 5000 + trial)
        w = rng.uniform(0.5, 2.0, n)
        state = run_kmeans(kmat, 3, kernel=True, weights=w, seed=trial, restarts=1)
        e = np.array(state.energy)
        assert np.all(np.diff(e) <= 1e-9 * (1 + np.abs(e[:-1])))


def test_run_kmeans_centers_are_weighted_means():
    rng = np.random.default_rng(10)
    pts = rng.normal(size=(30, 2))
    w = rng.uniform(0.5, 3.0, 30)
    state = run_kmeans(pts, 3, weights=w, seed=1)
    for j in range(3):
        sel = state.labeling.labels == j
        if sel.any():
            mu = w[sel] @ pts[sel] / w[sel].sum()
            assert np.allclose(state.centers[j], mu)


def test_reseeding_recovers_missed_cluster():
    rng = np.random.default_rng(11)
    blobs = [rng.normal(c, 0.1, size=(15, 2)) for c in ((0, 0), (6, 0), (0, 6))]
    pts = np.vstack(blobs)
    init = Labeling((np.arange(45) < 22).astype(int), 3)  # label 2 empty
    with_reseed = run_kmeans(pts, 3, init=init)
    without = run_kmeans(pts, 3, init=init, reseed_empty=False)
    assert with_reseed.labeling.nonempty_count() == 3
    assert with_reseed.energy[-1] < without.energy[-1]
    assert without.labeling.nonempty_count() == 2


def test_restarts_never_hurt():
    rng = np.random.default_rng(12)
    pts = rng.normal(size=(40, 2))
    one = run_kmeans(pts, 4, seed=3, restarts=1)
    many = run_kmeans(pts, 4, seed=3, restarts=5)
    assert many.energy[-1] <= one.energy[-1] + 1e-12


# --- initializers -----------------------------------------------------------

def test_grid_patch_init_quadrants():
    lab = grid_patch_init(Grid(6, 6), 4)
    grid = lab.labels.reshape(6, 6)
    assert grid[0, 0] == 0 and grid[0, 5] == 1
    assert grid[5, 0] == 2 and grid[5, 5] == 3
    assert lab.nonempty_count() == 4


def test_grid_patch_init_covers_all_labels():
    for k in (2, 3, 5, 7):
        lab = grid_patch_init(Grid(10, 12), k)
        assert lab.nonempty_count() == k


def test_farthest_point_init_separates_blobs():
    rng = np.random.default_rng(13)
    pts = np.vstack(
        [rng.normal(0, 0.2, size=(20, 2)), rng.normal(8, 0.2, size=(20, 2))]
    )
    lab = farthest_point_init(pts, 2)
    truth = np.repeat([0, 1], 20)
    assert _two_class_error(lab.labels, truth) == 0.0
    gram = pts @ pts.T
    lab_k = farthest_point_init(gram, 2, kernel=True)
    assert np.array_equal(lab_k.labels, lab.labels)


# --- weak kernel K-means ----------------------------------------------------

def test_kmodes_single_blob_finds_density_peak():
    rng = np.random.default_rng(14)
    pts = rng.normal(size=(60, 2)) * np.array([1.0, 0.5])
    sigma = 0.5
    state = kmodes_weak_kkm(pts, sigma, k=1, init="farthest")
    ds = Dataset(pts)
    dens = parzen_density(ds, sigma)
    mode_density = np.exp(
        -((pts - state.centers[0]) ** 2).sum(axis=1) / (2 * sigma**2)
    ).sum()
    best_observed = dens.max() * sigma**2
    assert mode_density >= best_observed - 1e-9


def test_weak_energy_upper_bounds_pairwise_kernel_energy():
    rng = np.random.default_rng(15)
    pts = rng.normal(size=(40, 2))
    sigma = 0.8
    kmat = gaussian_kernel(Dataset(pts), sigma)
    for seed in range(10):
        state = kmodes_weak_kkm(pts, sigma, k=3, seed=seed)
        weak = weak_kkm_energy(pts, state, sigma)
        pairwise = kkm_energy(kmat, state.labeling)
        assert weak >= pairwise - 1e-9


def test_kmodes_energy_trace_monotone():
    rng = np.random.default_rng(16)
    pts = rng.normal(size=(50, 2))
    for seed in range(10):
        state = kmodes_weak_kkm(pts, 0.6, k=3, seed=seed)
        e = np.array(state.energy)
        assert np.all(np.diff(e) <= 1e-9 * (1 + np.abs(e[:-1])))


def test_rings_separate_kernel_but_not_weak():
    pts, truth = _rings(60, seed=17)
    init = Labeling(truth, 2)
    kmat = gaussian_kernel(Dataset(pts), 0.3)
    kkm = run_kmeans(kmat, 2, kernel=True, init=init)
    modes = kmodes_weak_kkm(pts, 0.3, k=2, init=init)
    err_kkm = _two_class_error(kkm.labeling.labels, truth)
    err_modes = _two_class_error(modes.labeling.labels, truth)
    assert err_kkm <= 0.05
    assert err_modes >= 0.2

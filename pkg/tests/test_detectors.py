import numpy as np
import pytest

import oracles
from cyclelabel import detectors
from cyclelabel.detectors import (
    AnomalyScores,
    fit_detector,
    fit_subspace_ensemble,
    member_seed,
    normalize_scores,
    score,
    score_ensemble,
)
from cyclelabel.errors import ConfigError, DegenerateDataError


def rel_err(a, b):
    return np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-12))


# ---------------------------------------------------------------------------
# knn

def test_knn_line_hand_example():
    x = np.array([[0.0], [1.0], [2.0], [10.0]])
    model = fit_detector("knn", x, {"k": 1}, mode="unsupervised")
    assert np.allclose(score(model, x), [1, 1, 1, 8])


def test_knn_against_oracle_50_seeds():
    for seed in range(50):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(8, 65))
        d = int(rng.integers(1, 5))
        x = rng.normal(size=(n, d))
        k = int(rng.integers(1, 6))
        model = fit_detector("knn", x, {"k": k}, mode="unsupervised")
        assert rel_err(score(model, x), oracles.knn_scores(x, x, k, True)) < 1e-9
        q = rng.normal(size=(7, d))
        sm = fit_detector("knn", x, {"k": k}, mode="semi_supervised")
        assert rel_err(score(sm, q), oracles.knn_scores(x, q, k, False)) < 1e-9


def test_knn_duplicate_inlier_not_above_train_max():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(40, 3))
    model = fit_detector("knn", x, mode="unsupervised")
    train_scores = score(model, x)
    dup = fit_detector("knn", x, mode="semi_supervised")
    assert score(dup, x[:1]).item() <= train_scores.max()


# ---------------------------------------------------------------------------
# lof

def test_lof_against_oracle_50_seeds():
    for seed in range(50):
        rng = np.random.default_rng(100 + seed)
        n = int(rng.integers(25, 65))
        d = int(rng.integers(1, 5))
        x = rng.normal(size=(n, d))
        model = fit_detector("lof", x, {"k": 20}, mode="unsupervised")
        assert rel_err(score(model, x), oracles.lof_scores(x, 20)) < 1e-9
        q = rng.normal(size=(5, d))
        sm = fit_detector("lof", x, {"k": 20}, mode="semi_supervised")
        assert rel_err(score(sm, q), oracles.lof_novelty_scores(x, q, 20)) < 1e-9


def test_lof_uniform_grid_interior_near_one():
    xs, ys = np.meshgrid(np.arange(12.0), np.arange(12.0))
    grid = np.column_stack([xs.ravel(), ys.ravel()])
    model = fit_detector("lof", grid, {"k": 8}, mode="unsupervised")
    values = score(model, grid)
    interior = (xs.ravel() > 1) & (xs.ravel() < 10) & (ys.ravel() > 1) & (ys.ravel() < 10)
    assert np.all(np.abs(values[interior] - 1.0) < 0.2)


# ---------------------------------------------------------------------------
# hbos

def test_hbos_against_oracle():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(64, 2))
    model = fit_detector("hbos", x)
    assert rel_err(score(model, x), oracles.hbos_scores(x, x)) < 1e-9


def test_hbos_against_oracle_50_seeds():
    for seed in range(50):
        rng = np.random.default_rng(200 + seed)
        n = int(rng.integers(9, 65))
        d = int(rng.integers(1, 5))
        x = rng.normal(size=(n, d))
        q = rng.normal(size=(10, d)) * 1.5
        model = fit_detector("hbos", x)
        assert rel_err(score(model, x), oracles.hbos_scores(x, x)) < 1e-9
        assert rel_err(score(model, q), oracles.hbos_scores(x, q)) < 1e-9


def test_hbos_constant_feature():
    x = np.column_stack([np.ones(16), np.arange(16.0)])
    model = fit_detector("hbos", x)
    same = score(model, x)
    off = score(model, np.array([[2.0, 5.0]]))
    assert np.all(np.isfinite(same))
    assert off.item() > same.max()


# ---------------------------------------------------------------------------
# mcd

def test_mcd_exhaustive_excludes_gross_outlier():
    rng = np.random.default_rng(3)
    x = np.vstack([rng.normal(size=(4, 2)), [[25.0, -30.0]]])
    model = fit_detector("mcd", x)
    state = model.state
    assert state.exhaustive
    assert 4 not in set(state.support.tolist())
    oracle_det, oracle_subset = oracles.mcd_exhaustive(x)
    assert set(state.support.tolist()) == set(oracle_subset)
    assert np.isclose(np.exp(state.log_det), oracle_det, rtol=1e-9)


@pytest.mark.parametrize("seed", range(8))
def test_mcd_exhaustive_matches_oracle_small_n(seed):
    rng = np.random.default_rng(300 + seed)
    n = int(rng.integers(6, 13))
    x = rng.normal(size=(n, 2))
    model = fit_detector("mcd", x)
    oracle_det, oracle_subset = oracles.mcd_exhaustive(x)
    assert set(model.state.support.tolist()) == set(oracle_subset)
    assert np.isclose(np.exp(model.state.log_det), oracle_det, rtol=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_mcd_iterative_close_to_clean_subset_det(seed):
    rng = np.random.default_rng(400 + seed)
    n, d = 200, 4
    n_out = 20
    clean = rng.normal(size=(n - n_out, d))
    outliers = rng.normal(loc=12.0, size=(n_out, d))
    x = np.vstack([clean, outliers])
    h = (n + d + 1) // 2
    # strong feasible subset: the h clean points nearest the clean mean
    dist = np.sum((clean - clean.mean(axis=0)) ** 2, axis=1)
    subset = clean[np.argsort(dist)[:h]]
    dev = subset - subset.mean(axis=0)
    oracle_det = float(np.linalg.det(dev.T @ dev / h))
    model = fit_detector("mcd", x, seed=seed)
    assert np.exp(model.state.log_det) <= 1.05 * oracle_det
    # the robust distances must expose every planted outlier
    values = score(model, x)
    assert values[-n_out:].min() > np.median(values[: n - n_out])


def test_mcd_rejects_wide_data():
    rng = np.random.default_rng(0)
    with pytest.raises(DegenerateDataError, match="reduce"):
        fit_detector("mcd", rng.normal(size=(150, 200)))


# ---------------------------------------------------------------------------
# pca_recon

def test_pca_recon_zero_inside_training_subspace():
    rng = np.random.default_rng(1)
    basis = np.linalg.qr(rng.normal(size=(5, 5)))[0][:, :2]
    x = rng.normal(size=(60, 2)) @ basis.T
    model = fit_detector("pca_recon", x, {"q": 2})
    inside = rng.normal(size=(10, 2)) @ basis.T
    assert np.allclose(score(model, inside), 0.0, atol=1e-18)
    outside = inside + np.linalg.svd(basis.T, full_matrices=True)[2][-1]
    assert np.all(score(model, outside) > 1e-6)


# ---------------------------------------------------------------------------
# gmm

def test_gmm_blob_center_scores_below_far_point():
    rng = np.random.default_rng(5)
    x = rng.normal(scale=0.5, size=(120, 2))
    model = fit_detector("gmm", x, seed=1)
    center = score(model, np.zeros((1, 2)))
    far = score(model, np.full((1, 2), 6 * 0.5))
    assert center.item() < far.item()


def test_gmm_bic_recovers_two_components():
    rng = np.random.default_rng(9)
    x = np.vstack([
        rng.normal(loc=-4.0, scale=0.5, size=(150, 2)),
        rng.normal(loc=4.0, scale=0.5, size=(150, 2)),
    ])
    model = fit_detector("gmm", x, seed=2)
    assert model.state.k == 2


# ---------------------------------------------------------------------------
# iforest

def test_iforest_deterministic_and_oriented():
    rng = np.random.default_rng(11)
    x = rng.normal(size=(300, 4))
    a = score(fit_detector("iforest", x, seed=5), x)
    b = score(fit_detector("iforest", x, seed=5), x)
    assert np.array_equal(a, b)
    c = score(fit_detector("iforest", x, seed=6), x)
    assert not np.array_equal(a, c)
    far = score(fit_detector("iforest", x, seed=5), np.full((1, 4), 8.0))
    assert far.item() > np.median(a)


# ---------------------------------------------------------------------------
# shared behavior

@pytest.mark.parametrize("kind", ["knn", "mcd", "gmm"])
def test_monotone_contamination_response(kind):
    rng = np.random.default_rng(21)
    x = rng.normal(size=(150, 3))
    model = fit_detector(kind, x, seed=0, mode="semi_supervised")
    direction = np.array([1.0, 1.0, 1.0]) / np.sqrt(3)
    probes = np.array([t * direction for t in np.linspace(0, 10, 12)])
    values = score(model, probes)
    assert np.all(np.diff(values) >= -1e-9)


@pytest.mark.parametrize("kind", ["mcd", "gmm", "pca_recon"])
def test_semi_supervised_separates_5sigma_anomalies(kind):
    medians_nominal, medians_anom = [], []
    for seed in range(5):
        rng = np.random.default_rng(500 + seed)
        train = rng.normal(size=(200, 4))
        held_out = rng.normal(size=(50, 4))
        anomalies = rng.normal(loc=5.0, size=(50, 4))
        params = {"q": 2} if kind == "pca_recon" else None
        model = fit_detector(kind, train, params, seed=seed, mode="semi_supervised")
        medians_nominal.append(np.median(score(model, held_out)))
        medians_anom.append(np.median(score(model, anomalies)))
    assert np.median(medians_anom) > np.median(medians_nominal)


def test_score_errors_on_missing_features(small_inputs):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(30, 10))
    ensemble = fit_subspace_ensemble("knn", x, fraction=0.5, size=3, seed=1)
    with pytest.raises(ConfigError):
        score(ensemble.members[0], x[:, :2])


# ---------------------------------------------------------------------------
# ensembles

def test_ensemble_subset_size_70_percent_of_120():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(50, 120))
    ensemble = fit_subspace_ensemble("hbos", x, fraction=0.7, size=5, seed=0)
    for member in ensemble.members:
        assert member.feature_subset.size == 84
        assert np.unique(member.feature_subset).size == 84


def test_ensemble_default_sizes():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(30, 10))
    assert fit_subspace_ensemble("knn", x, fraction=0.5, seed=0).size == 80
    assert fit_subspace_ensemble("knn", x, fraction=1.0, seed=0).size == 1


def test_degenerate_ensemble_equals_single_detector():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(40, 6))
    ensemble = fit_subspace_ensemble("knn", x, fraction=1.0, size=1, seed=3)
    ens_raw = score_ensemble(ensemble, x)
    # reproduce the member's seed derivation: subset draw first, then fit seed
    rng2 = np.random.default_rng(member_seed(3, 0))
    rng2.choice(6, size=6, replace=False)
    single_seed = int(rng2.integers(0, 2**31 - 1))
    single = fit_detector("knn", x, seed=single_seed, mode="unsupervised")
    single_raw = score(single, x)
    assert np.array_equal(np.argsort(ens_raw), np.argsort(single_raw))
    assert np.allclose(normalize_scores(ens_raw), normalize_scores(single_raw))


def test_two_identical_members_average_to_member_score():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(40, 6))
    ensemble = fit_subspace_ensemble("knn", x, fraction=1.0, size=2, seed=3)
    ens = score_ensemble(ensemble, x)
    member_raw = score(ensemble.members[0], x)
    z = (member_raw - member_raw.mean()) / member_raw.std()
    assert np.allclose(ens, z)


def test_ensemble_deterministic_per_seed():
    rng = np.random.default_rng(10)
    x = rng.normal(size=(60, 12))
    a = score_ensemble(fit_subspace_ensemble("iforest", x, 0.5, 10, seed=9), x)
    b = score_ensemble(fit_subspace_ensemble("iforest", x, 0.5, 10, seed=9), x)
    assert np.array_equal(a, b)


def test_ensemble_empty_subset_rejected():
    rng = np.random.default_rng(1)
    with pytest.raises(ConfigError):
        fit_subspace_ensemble("knn", rng.normal(size=(20, 2)), fraction=0.1, size=2)


# ---------------------------------------------------------------------------
# normalization

def test_normalize_scores_examples():
    assert np.allclose(normalize_scores(np.array([2.0, 4.0, 6.0])), [0, 50, 100])
    with pytest.warns(UserWarning):
        assert np.allclose(normalize_scores(np.array([5.0, 5.0, 5.0])), 0.0)


def test_normalize_preserves_order():
    rng = np.random.default_rng(12)
    raw = rng.normal(size=50)
    assert np.array_equal(np.argsort(raw), np.argsort(normalize_scores(raw)))


def test_normalized_hits_exact_bounds():
    rng = np.random.default_rng(13)
    raw = rng.normal(size=33)
    normalized = normalize_scores(raw)
    assert normalized.min() == 0.0
    assert normalized.max() == 100.0


def test_anomaly_scores_degenerate_flag():
    with pytest.warns(UserWarning):
        scores = AnomalyScores.from_raw(np.ones(5), "x")
    assert scores.degenerate

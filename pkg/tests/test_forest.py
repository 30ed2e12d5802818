import numpy as np
import pytest

from cyclelabel.errors import DataError
from cyclelabel.forest import RandomForestModel, predict, train_random_forest


def blobs(rng, n_per=100, gap=6.0, d=2):
    a = rng.normal(size=(n_per, d))
    b = rng.normal(loc=gap, size=(n_per, d))
    x = np.vstack([a, b])
    y = np.array(["nominal"] * n_per + ["defect"] * n_per)
    return x, y


def test_oob_accuracy_on_separable_blobs():
    rng = np.random.default_rng(0)
    x, y = blobs(rng)
    model = train_random_forest(x, y, seed=1)
    assert model.oob_accuracy is not None
    assert model.oob_accuracy >= 0.95


def test_single_feature_threshold_training_accuracy_one():
    x = np.linspace(0, 1, 40)[:, None]
    y = np.where(x[:, 0] > 0.5, "defect", "nominal")
    model = train_random_forest(x, y, seed=0)
    labels, probs = predict(model, x)
    assert np.array_equal(labels, y)
    assert probs.shape == (40, 2)


def test_training_rows_predicted_back_on_separable_data():
    rng = np.random.default_rng(2)
    x, y = blobs(rng, n_per=60)
    model = train_random_forest(x, y, seed=3)
    labels, probs = predict(model, x)
    assert np.array_equal(labels, y)
    agree = probs.max(axis=1) == 1.0
    assert agree.mean() > 0.9  # essentially all trees agree far from the boundary


def test_probability_is_vote_fraction():
    rng = np.random.default_rng(4)
    x, y = blobs(rng, n_per=30)
    model = train_random_forest(x, y, n_trees=10, seed=5)
    _, probs = predict(model, x)
    assert np.allclose(probs.sum(axis=1), 1.0)
    assert np.all((probs * 10) % 1 == 0)  # multiples of 1/n_trees


def test_tree_order_irrelevant_for_predictions():
    rng = np.random.default_rng(6)
    x, y = blobs(rng, n_per=40)
    model = train_random_forest(x, y, n_trees=20, seed=7)
    labels, probs = predict(model, x)
    model.trees = model.trees[::-1]
    labels2, probs2 = predict(model, x)
    assert np.array_equal(labels, labels2)
    assert np.array_equal(probs, probs2)


def test_deterministic_serialization_per_seed():
    rng = np.random.default_rng(8)
    x, y = blobs(rng, n_per=50)
    a = train_random_forest(x, y, seed=9).to_json()
    b = train_random_forest(x, y, seed=9).to_json()
    assert a == b
    c = train_random_forest(x, y, seed=10).to_json()
    assert a != c


def test_json_round_trip_preserves_predictions():
    rng = np.random.default_rng(11)
    x, y = blobs(rng, n_per=40)
    model = train_random_forest(x, y, seed=12)
    clone = RandomForestModel.from_json(model.to_json())
    labels, probs = predict(model, x)
    labels2, probs2 = predict(clone, x)
    assert np.array_equal(labels, labels2)
    assert np.array_equal(probs, probs2)


def test_single_class_rejected():
    x = np.random.default_rng(0).normal(size=(20, 2))
    with pytest.raises(DataError, match="single class"):
        train_random_forest(x, ["nominal"] * 20)


def test_balanced_weighting_does_not_hurt_minority_recall():
    # depth-limited trees: the split criterion, and hence the weighting,
    # decides the boundary on overlapping 95:5 classes
    diffs = []
    for seed in range(20):
        rng = np.random.default_rng(700 + seed)
        n_maj, n_min = 190, 10
        x = np.vstack([
            rng.normal(size=(n_maj, 3)),
            rng.normal(loc=1.5, size=(n_min, 3)),
        ])
        y = np.array(["nominal"] * n_maj + ["defect"] * n_min)
        test_x = np.vstack([
            rng.normal(size=(60, 3)),
            rng.normal(loc=1.5, size=(40, 3)),
        ])
        test_y = np.array(["nominal"] * 60 + ["defect"] * 40)

        def minority_recall(weighting):
            model = train_random_forest(x, y, weighting=weighting, max_depth=2,
                                        seed=seed)
            labels, _ = predict(model, test_x)
            mask = test_y == "defect"
            return np.mean(labels[mask] == "defect")

        diffs.append(minority_recall("balanced") - minority_recall("none"))
    assert min(diffs) >= 0.0  # never worse, paired per seed
    assert np.mean(diffs) > 0.0


def test_feature_count_mismatch_raises():
    rng = np.random.default_rng(13)
    x, y = blobs(rng, n_per=20)
    model = train_random_forest(x, y, seed=0)
    with pytest.raises(DataError, match="features"):
        predict(model, rng.normal(size=(5, 3)))

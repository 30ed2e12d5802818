"""Random forest classifier built on Gini-impurity decision trees.

Each tree trains on a bootstrap sample and considers floor(sqrt(d)) random
features per split. Prediction is a majority vote with ties broken toward
the defect class (the conservative choice for assistance use); the vote
fraction doubles as a class probability. Trees serialize to plain JSON
arrays so fitted models can be audited and reloaded without pickle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError

TIE_BREAK_CLASS = "defect"


@dataclass
class _Tree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # (n_nodes, n_classes) training sample counts

    def to_lists(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "counts": self.counts.tolist(),
        }

    @classmethod
    def from_lists(cls, data: dict) -> "_Tree":
        return cls(
            np.array(data["feature"], dtype=int),
            np.array(data["threshold"], dtype=float),
            np.array(data["left"], dtype=int),
            np.array(data["right"], dtype=int),
            np.array(data["counts"], dtype=float),
        )


@dataclass
class RandomForestModel:
    classes: list[str]
    trees: list[_Tree]
    n_features: int
    weighting: str
    seed: int
    oob_accuracy: float | None = None
    params: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "classes": self.classes,
                "n_features": self.n_features,
                "weighting": self.weighting,
                "seed": self.seed,
                "oob_accuracy": self.oob_accuracy,
                "params": self.params,
                "trees": [t.to_lists() for t in self.trees],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "RandomForestModel":
        data = json.loads(text)
        return cls(
            classes=data["classes"],
            trees=[_Tree.from_lists(t) for t in data["trees"]],
            n_features=data["n_features"],
            weighting=data["weighting"],
            seed=data["seed"],
            oob_accuracy=data.get("oob_accuracy"),
            params=data.get("params", {}),
        )


def _gini_cost(w_left: np.ndarray, w_right: np.ndarray) -> np.ndarray:
    """Weighted-average Gini impurity for stacked candidate splits.

    w_left/w_right: (n_candidates, n_classes) class-weight totals.
    """
    tl = w_left.sum(axis=1)
    tr = w_right.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        gl = 1.0 - np.sum((w_left / tl[:, None]) ** 2, axis=1)
        gr = 1.0 - np.sum((w_right / tr[:, None]) ** 2, axis=1)
    total = tl + tr
    return (tl * gl + tr * gr) / total


def _best_split(x: np.ndarray, y: np.ndarray, w: np.ndarray, feat_ids: np.ndarray,
                n_classes: int, min_leaf: int):
    best = (np.inf, -1, 0.0)
    n = y.size
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y] = 1.0
    weighted = onehot * w[:, None]
    for f in feat_ids:
        order = np.argsort(x[:, f], kind="stable")
        xs = x[order, f]
        cum = np.cumsum(weighted[order], axis=0)
        cnt = np.arange(1, n + 1)
        # candidate boundaries between distinct adjacent values
        valid = np.flatnonzero(xs[:-1] < xs[1:])
        valid = valid[(cnt[valid] >= min_leaf) & (n - cnt[valid] >= min_leaf)]
        if valid.size == 0:
            continue
        w_left = cum[valid]
        w_right = cum[-1] - w_left
        costs = _gini_cost(w_left, w_right)
        i = int(np.argmin(costs))
        if costs[i] < best[0]:
            thresh = 0.5 * (xs[valid[i]] + xs[valid[i] + 1])
            best = (float(costs[i]), int(f), thresh)
    return best


def _grow_tree(x: np.ndarray, y: np.ndarray, w: np.ndarray, rng: np.random.Generator,
               n_classes: int, max_depth: int | None, min_leaf: int, mtry: int) -> _Tree:
    feature, threshold, left, right, counts = [], [], [], [], []

    def grow(rows: np.ndarray, depth: int) -> int:
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(np.bincount(y[rows], weights=w[rows], minlength=n_classes))
        if (
            rows.size < 2 * min_leaf
            or (max_depth is not None and depth >= max_depth)
            or np.unique(y[rows]).size == 1
        ):
            return node
        feat_ids = rng.choice(x.shape[1], size=mtry, replace=False)
        cost, f, thresh = _best_split(x[rows], y[rows], w[rows], feat_ids, n_classes, min_leaf)
        if not np.isfinite(cost):
            return node
        go_left = x[rows, f] <= thresh
        feature[node] = f
        threshold[node] = thresh
        left[node] = grow(rows[go_left], depth + 1)
        right[node] = grow(rows[~go_left], depth + 1)
        return node

    grow(np.arange(x.shape[0]), 0)
    return _Tree(
        np.array(feature, dtype=int), np.array(threshold), np.array(left, dtype=int),
        np.array(right, dtype=int), np.stack(counts),
    )


def _tree_leaf_nodes(tree: _Tree, x: np.ndarray) -> np.ndarray:
    cur = np.zeros(x.shape[0], dtype=int)
    while True:
        internal = tree.feature[cur] >= 0
        if not internal.any():
            return cur
        rows = np.flatnonzero(internal)
        nodes = cur[rows]
        go_left = x[rows, tree.feature[nodes]] <= tree.threshold[nodes]
        cur[rows] = np.where(go_left, tree.left[nodes], tree.right[nodes])


def _tree_votes(tree: _Tree, x: np.ndarray, tie_index: int | None) -> np.ndarray:
    """Per-row class index voted by one tree (leaf majority, tie toward defect)."""
    leaf_counts = tree.counts[_tree_leaf_nodes(tree, x)]
    votes = np.argmax(leaf_counts, axis=1)
    if tie_index is not None:
        best = leaf_counts[np.arange(x.shape[0]), votes]
        tied = leaf_counts[:, tie_index] == best
        votes = np.where(tied, tie_index, votes)
    return votes


def train_random_forest(x: np.ndarray, y: list[str] | np.ndarray, n_trees: int = 100,
                        max_depth: int | None = None, min_leaf: int = 1,
                        weighting: str = "none", seed: int = 0) -> RandomForestModel:
    """Fit a forest; deterministic for a fixed seed.

    weighting "balanced" rescales class weights to n / (n_classes * n_c);
    "none" leaves every sample at weight 1.
    """
    if weighting not in ("none", "balanced"):
        raise ConfigError(f"unknown weighting {weighting!r}")
    if min_leaf < 1:
        raise ConfigError("min_leaf must be >= 1")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    classes = sorted(set(y.tolist()))
    if len(classes) < 2:
        raise DataError("training data contains a single class")
    class_to_idx = {c: i for i, c in enumerate(classes)}
    yi = np.array([class_to_idx[c] for c in y])
    n, d = x.shape

    if weighting == "balanced":
        counts = np.bincount(yi, minlength=len(classes))
        class_w = n / (len(classes) * counts.astype(float))
        w = class_w[yi]
    else:
        w = np.ones(n)

    mtry = max(1, int(np.floor(np.sqrt(d))))
    seeds = np.random.SeedSequence(seed).spawn(n_trees)
    trees = []
    oob_votes = np.zeros((n, len(classes)))
    for t in range(n_trees):
        rng = np.random.default_rng(seeds[t])
        boot = rng.integers(0, n, size=n)
        tree = _grow_tree(x[boot], yi[boot], w[boot], rng, len(classes), max_depth,
                          min_leaf, mtry)
        trees.append(tree)
        oob = np.setdiff1d(np.arange(n), boot, assume_unique=False)
        if oob.size:
            votes = _tree_votes(tree, x[oob], class_to_idx.get(TIE_BREAK_CLASS))
            oob_votes[oob, votes] += 1.0

    voted = oob_votes.sum(axis=1) > 0
    oob_accuracy = None
    if voted.any():
        pred = np.argmax(oob_votes[voted], axis=1)
        oob_accuracy = float(np.mean(pred == yi[voted]))

    return RandomForestModel(
        classes=classes, trees=trees, n_features=d, weighting=weighting, seed=seed,
        oob_accuracy=oob_accuracy,
        params={"n_trees": n_trees, "max_depth": max_depth, "min_leaf": min_leaf},
    )


def predict(model: RandomForestModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Majority-vote labels and per-class vote fractions.

    Returns (labels, probabilities) where probabilities has one column per
    model class in model.classes order. Vote ties go to the defect class
    when present, else to the first class.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != model.n_features:
        raise DataError(
            f"expected {model.n_features} features, got {x.shape[1] if x.ndim == 2 else 'non-2D'}"
        )
    tie_index = model.classes.index(TIE_BREAK_CLASS) if TIE_BREAK_CLASS in model.classes else None
    votes = np.zeros((x.shape[0], len(model.classes)))
    for tree in model.trees:
        votes[np.arange(x.shape[0]), _tree_votes(tree, x, tie_index)] += 1.0
    probs = votes / len(model.trees)
    winners = np.argmax(votes, axis=1)
    if tie_index is not None:
        best = votes[np.arange(x.shape[0]), winners]
        winners = np.where(votes[:, tie_index] == best, tie_index, winners)
    labels = np.array([model.classes[i] for i in winners])
    return labels, probs

"""Model-selection and validation metrics for labeling pipelines.

The headline metric m is the mean normalized anomaly score over
classifier-detected defects divided by the mean over all cycles (detected
defects included in the denominator). It is complemented by the score
variance, a chi-square statistic against an even spread of detections over
time, and stratified cross-validated precision/recall/F1 with unweighted
(macro) averages over the two classes.

Degenerate situations (no detections, no positive predictions, zero mean)
are reported as 0 or NaN with a flag instead of raising, so ranking a
large grid of variants never crashes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .forest import predict, train_random_forest

DEFECT = "defect"
NOMINAL = "nominal"

METRIC_COLUMNS = (
    "m", "score_variance", "chi2_stat",
    "f1_defect", "precision_defect", "recall_defect",
    "f1_macro", "precision_macro", "recall_macro",
)


@dataclass
class MetricsRow:
    """One grid variant's metric vector, in report column order."""

    variant: str
    m: float
    score_variance: float
    chi2_stat: float
    f1_defect: float
    precision_defect: float
    recall_defect: float
    f1_macro: float
    precision_macro: float
    recall_macro: float
    gt_precision: float = float("nan")
    gt_recall: float = float("nan")
    gt_f1: float = float("nan")
    flags: tuple[str, ...] = ()

    def metric_values(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in METRIC_COLUMNS}


def relative_score(scores: np.ndarray, defect_indices: np.ndarray) -> float:
    """Mean score over detected defects divided by the mean over all points."""
    scores = np.asarray(scores, dtype=float)
    defect_indices = np.asarray(defect_indices, dtype=int)
    if scores.size == 0:
        raise DataError("no scores")
    if defect_indices.size == 0:
        raise DataError("no detected defects; relative score undefined")
    total_mean = scores.mean()
    if total_mean == 0:
        warnings.warn("mean score is zero; relative score undefined")
        return float("nan")
    return float(scores[defect_indices].mean() / total_mean)


def defect_vs_nominal_score(scores: np.ndarray, defect_indices: np.ndarray,
                            nominal_indices: np.ndarray) -> float:
    """Mean score over defects divided by mean over known-nominal points."""
    scores = np.asarray(scores, dtype=float)
    d = np.asarray(defect_indices, dtype=int)
    m = np.asarray(nominal_indices, dtype=int)
    if d.size == 0 or m.size == 0:
        raise DataError("defect and nominal index sets must be non-empty")
    if np.intersect1d(d, m).size:
        raise DataError("defect and nominal index sets overlap")
    nominal_mean = scores[m].mean()
    if nominal_mean == 0:
        warnings.warn("nominal mean score is zero; ratio undefined")
        return float("nan")
    return float(scores[d].mean() / nominal_mean)


def score_variance(scores: np.ndarray) -> float:
    """Population variance of the normalized scores."""
    scores = np.asarray(scores, dtype=float)
    if scores.size < 2:
        raise DataError("variance needs at least 2 scores")
    return float(scores.var())


def chi2_uniformity(timestamps: np.ndarray, horizon: float, n_bins: int = 20) -> float:
    """Chi-square statistic of detection times against a uniform spread.

    [0, horizon] is split into n_bins equal bins; the statistic compares
    observed per-bin counts to the uniform expectation. Zero detections
    give 0 with a warning flag.
    """
    if n_bins < 2:
        raise ConfigError("n_bins must be >= 2")
    if horizon <= 0:
        raise ConfigError("horizon must be > 0")
    timestamps = np.asarray(timestamps, dtype=float)
    if timestamps.size == 0:
        warnings.warn("no detected defects; chi-square statistic set to 0")
        return 0.0
    edges = np.linspace(0.0, horizon, n_bins + 1)
    observed, _ = np.histogram(np.clip(timestamps, 0.0, horizon), bins=edges)
    expected = timestamps.size / n_bins
    return float(np.sum((observed - expected) ** 2 / expected))


def _binary_prf(y_true: np.ndarray, y_pred: np.ndarray, positive: str) -> tuple[float, float, float, bool]:
    tp = int(np.sum((y_pred == positive) & (y_true == positive)))
    fp = int(np.sum((y_pred == positive) & (y_true != positive)))
    fn = int(np.sum((y_pred != positive) & (y_true == positive)))
    degenerate = False
    if tp + fp == 0:
        precision, degenerate = 0.0, True
    else:
        precision = tp / (tp + fp)
    if tp + fn == 0:
        recall, degenerate = 0.0, True
    else:
        recall = tp / (tp + fn)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1, degenerate


def classification_report(y_true: np.ndarray, y_pred: np.ndarray) -> dict:
    """Per-class P/R/F1 for {nominal, defect} plus unweighted macro averages."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    out: dict = {"flags": []}
    per_class = {}
    for cls in (DEFECT, NOMINAL):
        p, r, f1, degenerate = _binary_prf(y_true, y_pred, cls)
        per_class[cls] = (p, r, f1)
        if degenerate:
            out["flags"].append(f"degenerate_{cls}_prf")
    out["precision_defect"], out["recall_defect"], out["f1_defect"] = per_class[DEFECT]
    out["precision_macro"] = (per_class[DEFECT][0] + per_class[NOMINAL][0]) / 2
    out["recall_macro"] = (per_class[DEFECT][1] + per_class[NOMINAL][1]) / 2
    out["f1_macro"] = (per_class[DEFECT][2] + per_class[NOMINAL][2]) / 2
    return out


def stratified_folds(labels: np.ndarray, k: int, seed: int) -> list[np.ndarray]:
    """Shuffled round-robin fold assignment within each class."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xCF)))
    fold_of = np.empty(labels.size, dtype=int)
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(idx.size)]
        fold_of[idx] = np.arange(idx.size) % k
    return [np.flatnonzero(fold_of == f) for f in range(k)]


def cross_validate(x: np.ndarray, labels: np.ndarray, k: int = 5, seed: int = 0,
                   rf_params: dict | None = None) -> dict:
    """Stratified k-fold cross-validation of the forest classifier.

    Predictions are pooled over folds before computing per-class and macro
    precision/recall/F1. If a class has fewer members than k, k is reduced
    with a warning.
    """
    labels = np.asarray(labels)
    class_counts = {c: int(np.sum(labels == c)) for c in np.unique(labels)}
    if len(class_counts) < 2:
        raise DataError("cross-validation needs both classes present")
    smallest = min(class_counts.values())
    if smallest < k:
        warnings.warn(f"smallest class has {smallest} rows; reducing folds from {k}")
        k = max(2, smallest)
    rf_params = rf_params or {}

    pooled_pred = np.empty(labels.size, dtype=labels.dtype)
    for f, test_idx in enumerate(stratified_folds(labels, k, seed)):
        train_idx = np.setdiff1d(np.arange(labels.size), test_idx)
        model = train_random_forest(x[train_idx], labels[train_idx],
                                    seed=seed + 1000 + f, **rf_params)
        pooled_pred[test_idx] = predict(model, x[test_idx])[0]

    report = classification_report(labels, pooled_pred)
    report["k"] = k
    return report


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    da, db = a - a.mean(), b - b.mean()
    denom = np.sqrt(np.sum(da**2) * np.sum(db**2))
    if denom == 0:
        return float("nan")
    return float(np.sum(da * db) / denom)


def correlation_to_m(rows: list[MetricsRow]) -> dict[str, float]:
    """Pearson correlation of each metric column against m across grid variants."""
    if len(rows) < 3:
        raise DataError("correlation needs at least 3 variants")
    m = np.array([r.m for r in rows], dtype=float)
    out = {}
    for name in METRIC_COLUMNS:
        col = np.array([getattr(r, name) for r in rows], dtype=float)
        out[name] = pearson(col, m)
    return out


def ground_truth_eval(pred_labels: np.ndarray, true_labels: np.ndarray) -> dict:
    """Binary P/R/F1 of predictions against simulator ground truth.

    True labels may carry per-class defect names; anything not nominal
    counts as a defect.
    """
    pred = np.asarray(pred_labels)
    true_binary = np.where(np.asarray(true_labels) == NOMINAL, NOMINAL, DEFECT)
    p, r, f1, degenerate = _binary_prf(true_binary, pred, DEFECT)
    return {"gt_precision": p, "gt_recall": r, "gt_f1": f1,
            "flags": ["degenerate_gt_prf"] if degenerate else []}

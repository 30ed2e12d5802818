"""Anomaly detector zoo with a shared "higher = more anomalous" convention.

Seven detector families, each usable unsupervised (fit on everything) or
semi-supervised (fit on known-nominal rows only), plus random-subspace
ensembles that average z-normalized member scores. Kinds:

  hbos       sum over features of log inverse histogram height
             (static-width bins, bin count ceil(sqrt(n)), max height 1)
  iforest    isolation forest, 100 trees on subsamples of min(256, n),
             score 2^(-E[path]/c(psi))
  knn        distance to the k-th nearest training row (k=5),
             excluding self when scoring the unsupervised training set
  lof        local outlier factor with k=20
  mcd        minimum covariance determinant: exhaustive subsets for
             n <= 12, otherwise 500 random starts with concentration
             steps, 10 best refined to convergence; score = squared
             Mahalanobis distance under the robust mean/covariance
  pca_recon  squared PCA reconstruction error, dimension chosen by the
             evidence criterion unless fixed
  gmm        full-covariance Gaussian mixture fitted by EM, component
             count by BIC over 1..5; score = negative log-density
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from itertools import combinations
from typing import Any

import numpy as np
from scipy.linalg import solve_triangular
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .errors import ConfigError, DegenerateDataError
from .reduction import PCAModel, fit_pca

DETECTOR_KINDS = ("hbos", "iforest", "knn", "lof", "mcd", "pca_recon", "gmm")
MODES = ("unsupervised", "semi_supervised")

_LRD_FLOOR = 1e-12  # guard for zero reachability (duplicate points)
_HBOS_FLOOR = 1e-12  # height assigned to empty histogram bins

DEFAULT_PARAMS: dict[str, dict[str, Any]] = {
    "hbos": {},
    "iforest": {"n_trees": 100, "subsample": 256},
    "knn": {"k": 5},
    "lof": {"k": 20},
    "mcd": {"n_starts": 500, "keep_best": 10, "max_csteps": 100},
    "pca_recon": {"q": "minka"},
    "gmm": {"k_max": 5, "reg": 1e-6, "tol": 1e-6, "max_iter": 200, "n_init": 3},
}


@dataclass
class DetectorModel:
    kind: str
    mode: str
    seed: int
    params: dict
    state: Any
    feature_subset: np.ndarray | None = None  # columns of the full matrix
    train_ref: np.ndarray | None = None  # kept for self-exclusion checks


@dataclass
class EnsembleModel:
    kind: str
    fraction: float
    size: int
    mode: str
    seed: int
    members: list[DetectorModel]


@dataclass
class AnomalyScores:
    raw: np.ndarray
    normalized: np.ndarray  # in [0, 100]
    provenance: str
    degenerate: bool = False

    @classmethod
    def from_raw(cls, raw: np.ndarray, provenance: str) -> "AnomalyScores":
        degenerate = raw.size > 0 and float(raw.max()) == float(raw.min())
        return cls(np.asarray(raw, dtype=float), normalize_scores(raw), provenance, degenerate)


def normalize_scores(raw: np.ndarray) -> np.ndarray:
    """Affine min-max map onto [0, 100]; constant input maps to all zeros."""
    raw = np.asarray(raw, dtype=float)
    if raw.size == 0:
        raise DegenerateDataError("no scores to normalize")
    if not np.all(np.isfinite(raw)):
        raise DegenerateDataError("scores contain non-finite values")
    lo, hi = float(raw.min()), float(raw.max())
    if hi == lo:
        warnings.warn("constant anomaly scores; normalized scores set to 0")
        return np.zeros_like(raw)
    return (raw - lo) / (hi - lo) * 100.0


# --------------------------------------------------------------------------
# HBOS

@dataclass
class _HbosState:
    lows: np.ndarray
    widths: np.ndarray  # bin width per feature; 0 marks a constant feature
    heights: list[np.ndarray]
    consts: np.ndarray  # constant-feature values (where width == 0)


def _fit_hbos(x: np.ndarray) -> _HbosState:
    n, d = x.shape
    n_bins = int(np.ceil(np.sqrt(n)))
    lows = x.min(axis=0)
    highs = x.max(axis=0)
    widths = np.zeros(d)
    heights: list[np.ndarray] = []
    for f in range(d):
        if highs[f] == lows[f]:
            heights.append(np.ones(1))
            continue
        counts, _ = np.histogram(x[:, f], bins=n_bins, range=(lows[f], highs[f]))
        widths[f] = (highs[f] - lows[f]) / n_bins
        heights.append(counts / counts.max())
    return _HbosState(lows, widths, heights, lows)


def _score_hbos(state: _HbosState, x: np.ndarray) -> np.ndarray:
    n, d = x.shape
    total = np.zeros(n)
    for f in range(d):
        if state.widths[f] == 0:
            h = np.where(x[:, f] == state.consts[f], 1.0, _HBOS_FLOOR)
        else:
            idx = np.floor((x[:, f] - state.lows[f]) / state.widths[f]).astype(int)
            idx = np.clip(idx, 0, state.heights[f].size - 1)
            h = np.maximum(state.heights[f][idx], _HBOS_FLOOR)
        total += -np.log(h)
    return total


# --------------------------------------------------------------------------
# Isolation forest

@dataclass
class _ITree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    size: np.ndarray
    depth: np.ndarray


@dataclass
class _IForestState:
    trees: list[_ITree]
    c_psi: float


def _avg_path_length(m: float) -> float:
    if m <= 1:
        return 0.0
    if m == 2:
        return 1.0
    harmonic = np.log(m - 1.0) + np.euler_gamma
    return 2.0 * harmonic - 2.0 * (m - 1.0) / m


def _build_itree(x: np.ndarray, rng: np.random.Generator, depth_cap: int) -> _ITree:
    feature, threshold, left, right, size, depth = [], [], [], [], [], []

    def grow(rows: np.ndarray, d: int) -> int:
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        size.append(rows.size)
        depth.append(d)
        if d >= depth_cap or rows.size <= 1:
            return node
        data = x[rows]
        spans = data.max(axis=0) - data.min(axis=0)
        usable = np.flatnonzero(spans > 0)
        if usable.size == 0:
            return node
        f = int(usable[rng.integers(usable.size)])
        lo, hi = data[:, f].min(), data[:, f].max()
        split = rng.uniform(lo, hi)
        go_left = data[:, f] < split
        if not go_left.any() or go_left.all():
            return node
        feature[node] = f
        threshold[node] = split
        left[node] = grow(rows[go_left], d + 1)
        right[node] = grow(rows[~go_left], d + 1)
        return node

    grow(np.arange(x.shape[0]), 0)
    return _ITree(
        np.array(feature), np.array(threshold), np.array(left, dtype=int),
        np.array(right, dtype=int), np.array(size, dtype=float), np.array(depth, dtype=float),
    )


def _fit_iforest(x: np.ndarray, seed: int, n_trees: int, subsample: int) -> _IForestState:
    n = x.shape[0]
    psi = min(subsample, n)
    depth_cap = int(np.ceil(np.log2(max(psi, 2))))
    trees = []
    for t in range(n_trees):
        rng = np.random.default_rng(np.random.SeedSequence((seed, t)))
        rows = rng.choice(n, size=psi, replace=False)
        trees.append(_build_itree(x[rows], rng, depth_cap))
    return _IForestState(trees, _avg_path_length(psi))


def _itree_path_lengths(tree: _ITree, x: np.ndarray) -> np.ndarray:
    cur = np.zeros(x.shape[0], dtype=int)
    while True:
        internal = tree.feature[cur] >= 0
        if not internal.any():
            break
        rows = np.flatnonzero(internal)
        nodes = cur[rows]
        vals = x[rows, tree.feature[nodes]]
        cur[rows] = np.where(vals < tree.threshold[nodes], tree.left[nodes], tree.right[nodes])
    adjust = np.array([_avg_path_length(s) for s in tree.size[cur]])
    return tree.depth[cur] + adjust


def _score_iforest(state: _IForestState, x: np.ndarray) -> np.ndarray:
    paths = np.zeros(x.shape[0])
    for tree in state.trees:
        paths += _itree_path_lengths(tree, x)
    mean_path = paths / len(state.trees)
    return np.power(2.0, -mean_path / state.c_psi)


# --------------------------------------------------------------------------
# k-NN distance

@dataclass
class _KnnState:
    train: np.ndarray
    k: int


def _score_knn(state: _KnnState, x: np.ndarray, exclude_self: bool) -> np.ndarray:
    dists = cdist(x, state.train)
    if exclude_self:
        np.fill_diagonal(dists, np.inf)
        avail = state.train.shape[0] - 1
    else:
        avail = state.train.shape[0]
    k = min(state.k, avail)
    if k < 1:
        raise DegenerateDataError("not enough training rows for knn")
    return np.partition(dists, k - 1, axis=1)[:, k - 1]


# --------------------------------------------------------------------------
# LOF

@dataclass
class _LofState:
    train: np.ndarray
    k: int
    k_dist: np.ndarray  # per training row
    lrd: np.ndarray  # per training row


def _lof_neighbors(dist_row: np.ndarray, k_dist: float) -> np.ndarray:
    return np.flatnonzero(dist_row <= k_dist)


def _fit_lof(x: np.ndarray, k: int) -> _LofState:
    n = x.shape[0]
    k = min(k, n - 1)
    if k < 1:
        raise DegenerateDataError("not enough training rows for lof")
    dists = cdist(x, x)
    np.fill_diagonal(dists, np.inf)
    k_dist = np.partition(dists, k - 1, axis=1)[:, k - 1]
    lrd = np.empty(n)
    for i in range(n):
        nbrs = _lof_neighbors(dists[i], k_dist[i])
        reach = np.maximum(k_dist[nbrs], dists[i, nbrs])
        lrd[i] = 1.0 / max(reach.mean(), _LRD_FLOOR)
    return _LofState(x, k, k_dist, lrd)


def _score_lof(state: _LofState, x: np.ndarray, is_train: bool) -> np.ndarray:
    if is_train:
        dists = cdist(x, state.train)
        np.fill_diagonal(dists, np.inf)
        out = np.empty(x.shape[0])
        for i in range(x.shape[0]):
            nbrs = _lof_neighbors(dists[i], state.k_dist[i])
            out[i] = state.lrd[nbrs].mean() / state.lrd[i]
        return out
    dists = cdist(x, state.train)
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        k_dist_q = np.partition(dists[i], state.k - 1)[state.k - 1]
        nbrs = _lof_neighbors(dists[i], k_dist_q)
        reach = np.maximum(state.k_dist[nbrs], dists[i, nbrs])
        lrd_q = 1.0 / max(reach.mean(), _LRD_FLOOR)
        out[i] = state.lrd[nbrs].mean() / lrd_q
    return out


# --------------------------------------------------------------------------
# Minimum covariance determinant

@dataclass
class _McdState:
    location: np.ndarray
    covariance: np.ndarray
    precision: np.ndarray
    log_det: float
    support: np.ndarray
    exhaustive: bool
    regularized: bool = False


def _subset_cov(x: np.ndarray, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pts = x[idx]
    mu = pts.mean(axis=0)
    dev = pts - mu
    return mu, dev.T @ dev / len(idx)


def _safe_precision(cov: np.ndarray) -> tuple[np.ndarray, bool]:
    d = cov.shape[0]
    reg = 0.0
    base = max(np.trace(cov) / d, 1e-12)
    for _ in range(12):
        try:
            chol = np.linalg.cholesky(cov + reg * np.eye(d))
            inv_chol = np.linalg.inv(chol)
            return inv_chol.T @ inv_chol, reg > 0
        except np.linalg.LinAlgError:
            reg = base * 1e-10 if reg == 0 else reg * 100
    raise DegenerateDataError("covariance could not be regularized")


def _mahalanobis_sq(x: np.ndarray, mu: np.ndarray, precision: np.ndarray) -> np.ndarray:
    dev = x - mu
    return np.einsum("nd,de,ne->n", dev, precision, dev)


def _c_step_single(x: np.ndarray, mu: np.ndarray, cov: np.ndarray, h: int):
    prec, _ = _safe_precision(cov)
    dist = _mahalanobis_sq(x, mu, prec)
    idx = np.sort(np.argpartition(dist, h - 1)[:h])
    mu2, cov2 = _subset_cov(x, idx)
    sign, logdet = np.linalg.slogdet(cov2)
    return mu2, cov2, idx, (logdet if sign > 0 else -np.inf)


def _fit_mcd_exhaustive(x: np.ndarray, h: int) -> _McdState:
    n = x.shape[0]
    best = None
    for combo in combinations(range(n), h):
        idx = np.array(combo)
        mu, cov = _subset_cov(x, idx)
        det = float(np.linalg.det(cov))
        if best is None or det < best[0]:
            best = (det, mu, cov, idx)
    det, mu, cov, idx = best
    prec, regularized = _safe_precision(cov)
    logdet = float(np.log(det)) if det > 0 else -np.inf
    return _McdState(mu, cov, prec, logdet, idx, True, regularized)


def _fit_mcd_fast(x: np.ndarray, h: int, seed: int, n_starts: int, keep_best: int,
                  max_csteps: int) -> _McdState:
    n, d = x.shape
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xD0)))
    starts = np.stack([rng.choice(n, size=d + 1, replace=False) for _ in range(n_starts)])

    # two concentration steps for every start, batched in chunks
    chunk = max(1, int(4e7 / (n * d + 1)))
    cand_mu = np.empty((n_starts, d))
    cand_cov = np.empty((n_starts, d, d))
    cand_logdet = np.empty(n_starts)
    for lo in range(0, n_starts, chunk):
        hi = min(lo + chunk, n_starts)
        pts = x[starts[lo:hi]]  # (b, d+1, d)
        mu = pts.mean(axis=1)
        dev = pts - mu[:, None, :]
        cov = np.einsum("bij,bik->bjk", dev, dev) / (d + 1)
        for _ in range(2):
            prec = np.linalg.pinv(cov)
            devx = x[None, :, :] - mu[:, None, :]
            dist = np.einsum("bnd,bde,bne->bn", devx, prec, devx)
            part = np.argpartition(dist, h - 1, axis=1)[:, :h]
            sel = x[part]
            mu = sel.mean(axis=1)
            dev = sel - mu[:, None, :]
            cov = np.einsum("bij,bik->bjk", dev, dev) / h
        sign, logdet = np.linalg.slogdet(cov)
        cand_mu[lo:hi] = mu
        cand_cov[lo:hi] = cov
        cand_logdet[lo:hi] = np.where(sign > 0, logdet, -np.inf)

    order = np.argsort(cand_logdet)[:keep_best]
    best = None
    for b in order:
        mu, cov = cand_mu[b], cand_cov[b]
        logdet = cand_logdet[b]
        idx = None
        for _ in range(max_csteps):
            mu2, cov2, idx2, logdet2 = _c_step_single(x, mu, cov, h)
            if idx is not None and np.array_equal(idx, idx2):
                mu, cov, idx, logdet = mu2, cov2, idx2, logdet2
                break
            if logdet2 >= logdet - 1e-12:
                mu, cov, idx, logdet = mu2, cov2, idx2, logdet2
                break
            mu, cov, idx, logdet = mu2, cov2, idx2, logdet2
        if best is None or logdet < best[3]:
            best = (mu, cov, idx, logdet)
    mu, cov, idx, logdet = best
    prec, regularized = _safe_precision(cov)
    if regularized:
        warnings.warn("MCD covariance was singular; regularized for scoring")
    return _McdState(mu, cov, prec, float(logdet), idx, False, regularized)


def _fit_mcd(x: np.ndarray, seed: int, n_starts: int, keep_best: int,
             max_csteps: int) -> _McdState:
    n, d = x.shape
    if d >= n:
        raise DegenerateDataError(
            f"MCD needs more rows than dimensions (n={n}, d={d}); reduce features first"
        )
    h = (n + d + 1) // 2
    if n <= 12:
        return _fit_mcd_exhaustive(x, h)
    return _fit_mcd_fast(x, h, seed, n_starts, keep_best, max_csteps)


# --------------------------------------------------------------------------
# PCA reconstruction error

@dataclass
class _PcaReconState:
    model: PCAModel


def _score_pca_recon(state: _PcaReconState, x: np.ndarray) -> np.ndarray:
    resid = x - state.model.reconstruct(x)
    return np.sum(resid**2, axis=1)


# --------------------------------------------------------------------------
# Gaussian mixture

@dataclass
class _GmmState:
    weights: np.ndarray
    means: np.ndarray  # (k, d)
    covariances: np.ndarray  # (k, d, d)
    k: int
    bic: float


def _gmm_log_prob(x: np.ndarray, weights: np.ndarray, means: np.ndarray,
                  covs: np.ndarray) -> np.ndarray:
    n, d = x.shape
    k = weights.size
    log_probs = np.empty((n, k))
    for j in range(k):
        chol = np.linalg.cholesky(covs[j])
        dev = (x - means[j]).T
        z = solve_triangular(chol, dev, lower=True)
        maha = np.sum(z**2, axis=0)
        logdet = 2.0 * np.sum(np.log(np.diag(chol)))
        log_probs[:, j] = -0.5 * (d * np.log(2 * np.pi) + logdet + maha) + np.log(weights[j])
    return log_probs


def _em_gmm(x: np.ndarray, k: int, rng: np.random.Generator, reg: float, tol: float,
            max_iter: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    n, d = x.shape
    means = x[rng.choice(n, size=k, replace=False)].copy()
    base_cov = np.cov(x, rowvar=False, bias=True).reshape(d, d) + reg * np.eye(d)
    covs = np.stack([base_cov.copy() for _ in range(k)])
    weights = np.full(k, 1.0 / k)

    prev_ll = -np.inf
    for _ in range(max_iter):
        log_probs = _gmm_log_prob(x, weights, means, covs)
        log_norm = logsumexp(log_probs, axis=1)
        ll = float(log_norm.mean())
        resp = np.exp(log_probs - log_norm[:, None])

        nk = resp.sum(axis=0) + 1e-12
        weights = nk / n
        means = (resp.T @ x) / nk[:, None]
        for j in range(k):
            dev = x - means[j]
            covs[j] = (dev.T * resp[:, j]) @ dev / nk[j] + reg * np.eye(d)

        if abs(ll - prev_ll) < tol:
            prev_ll = ll
            break
        prev_ll = ll
    return weights, means, covs, prev_ll * n


def _fit_gmm(x: np.ndarray, seed: int, k_max: int, reg: float, tol: float,
             max_iter: int, n_init: int) -> _GmmState:
    n, d = x.shape
    best: _GmmState | None = None
    for k in range(1, k_max + 1):
        if k > n:
            break
        best_ll = -np.inf
        best_fit = None
        for init in range(n_init if k > 1 else 1):
            rng = np.random.default_rng(np.random.SeedSequence((seed, k, init)))
            try:
                weights, means, covs, ll = _em_gmm(x, k, rng, reg, tol, max_iter)
            except np.linalg.LinAlgError:
                continue
            if ll > best_ll:
                best_ll = ll
                best_fit = (weights, means, covs)
        if best_fit is None:
            continue
        n_params = (k - 1) + k * d + k * d * (d + 1) / 2
        bic = -2.0 * best_ll + n_params * np.log(n)
        if best is None or bic < best.bic:
            best = _GmmState(*best_fit, k=k, bic=float(bic))
    if best is None:
        raise DegenerateDataError("no Gaussian mixture could be fitted")
    return best


def _score_gmm(state: _GmmState, x: np.ndarray) -> np.ndarray:
    log_probs = _gmm_log_prob(x, state.weights, state.means, state.covariances)
    return -logsumexp(log_probs, axis=1)


# --------------------------------------------------------------------------
# Public API

def fit_detector(kind: str, x_train: np.ndarray, params: dict | None = None,
                 seed: int = 0, mode: str = "unsupervised") -> DetectorModel:
    """Fit one detector on training rows (all data or known-nominal rows)."""
    if kind not in DETECTOR_KINDS:
        raise ConfigError(f"unknown detector kind {kind!r}")
    if mode not in MODES:
        raise ConfigError(f"unknown detector mode {mode!r}")
    x_train = np.asarray(x_train, dtype=float)
    if x_train.ndim != 2 or x_train.shape[0] < 2:
        raise DegenerateDataError("detector training needs at least 2 rows")
    if not np.all(np.isfinite(x_train)):
        raise DegenerateDataError("detector training data contains non-finite values")
    merged = dict(DEFAULT_PARAMS[kind])
    merged.update(params or {})

    if kind == "hbos":
        state: Any = _fit_hbos(x_train)
    elif kind == "iforest":
        state = _fit_iforest(x_train, seed, merged["n_trees"], merged["subsample"])
    elif kind == "knn":
        state = _KnnState(x_train, merged["k"])
    elif kind == "lof":
        state = _fit_lof(x_train, merged["k"])
    elif kind == "mcd":
        state = _fit_mcd(x_train, seed, merged["n_starts"], merged["keep_best"],
                         merged["max_csteps"])
    elif kind == "pca_recon":
        state = _PcaReconState(fit_pca(x_train, merged["q"]))
    else:
        state = _fit_gmm(x_train, seed, merged["k_max"], merged["reg"], merged["tol"],
                         merged["max_iter"], merged["n_init"])
    return DetectorModel(kind, mode, seed, merged, state, train_ref=x_train)


def score(model: DetectorModel, x: np.ndarray) -> np.ndarray:
    """Raw anomaly scores for rows of x; higher means more anomalous."""
    x = np.asarray(x, dtype=float)
    if model.feature_subset is not None:
        if x.shape[1] <= int(model.feature_subset.max()):
            raise ConfigError("input is missing the model's feature subset")
        x = x[:, model.feature_subset]
    if model.train_ref is not None and x.shape[1] != model.train_ref.shape[1]:
        raise ConfigError("feature count does not match the fitted model")

    is_train = (
        model.mode == "unsupervised"
        and model.train_ref is not None
        and x.shape == model.train_ref.shape
        and np.array_equal(x, model.train_ref)
    )
    if model.kind == "hbos":
        return _score_hbos(model.state, x)
    if model.kind == "iforest":
        return _score_iforest(model.state, x)
    if model.kind == "knn":
        return _score_knn(model.state, x, exclude_self=is_train)
    if model.kind == "lof":
        return _score_lof(model.state, x, is_train=is_train)
    if model.kind == "mcd":
        return _mahalanobis_sq(x, model.state.location, model.state.precision)
    if model.kind == "pca_recon":
        return _score_pca_recon(model.state, x)
    return _score_gmm(model.state, x)


def member_seed(seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence((seed, 7, index))


def fit_subspace_ensemble(kind: str, x_train: np.ndarray, fraction: float = 1.0,
                          size: int | None = None, seed: int = 0,
                          mode: str = "unsupervised",
                          params: dict | None = None) -> EnsembleModel:
    """Fit ``size`` detectors, each on its own random feature subset.

    Subsets of round(fraction * n_features) columns are drawn without
    replacement per member; fraction 1.0 with size 1 degenerates to a
    single detector.
    """
    if not 0 < fraction <= 1.0:
        raise ConfigError("subspace fraction must be in (0, 1]")
    x_train = np.asarray(x_train, dtype=float)
    n_features = x_train.shape[1]
    n_sub = int(round(fraction * n_features))
    if n_sub < 1:
        raise ConfigError("subspace fraction selects no features")
    if size is None:
        size = 1 if fraction >= 1.0 else 80
    if size < 1:
        raise ConfigError("ensemble size must be >= 1")

    members = []
    for i in range(size):
        rng = np.random.default_rng(member_seed(seed, i))
        subset = np.sort(rng.choice(n_features, size=n_sub, replace=False))
        fit_seed = int(rng.integers(0, 2**31 - 1))
        member = fit_detector(kind, x_train[:, subset], params, seed=fit_seed, mode=mode)
        member.feature_subset = subset
        members.append(member)
    return EnsembleModel(kind, fraction, size, mode, seed, members)


def score_ensemble(model: EnsembleModel, x: np.ndarray) -> np.ndarray:
    """Average of z-normalized member scores, in fixed member order."""
    x = np.asarray(x, dtype=float)
    total = np.zeros(x.shape[0])
    for member in model.members:
        raw = score(member, x)
        sd = raw.std()
        z = (raw - raw.mean()) / sd if sd > 0 else raw - raw.mean()
        total += z
    return total / len(model.members)

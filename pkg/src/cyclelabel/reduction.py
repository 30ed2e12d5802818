"""Linear dimensionality reduction: PCA with evidence-based automatic
dimension choice, and a linear Gaussian factor model fitted by EM.

The automatic dimension uses the Laplace approximation of the model
evidence for probabilistic PCA, with the noise variance of each candidate
taken as the mean of the trailing eigenvalues. Covariances follow the
package-wide population (1/n) convention.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import ConfigError, DegenerateDataError

_EPS = 1e-15


@dataclass
class PCAModel:
    mean: np.ndarray
    components: np.ndarray  # (k, d), orthonormal rows
    eigenvalues: np.ndarray  # full spectrum, non-increasing
    k: int

    def transform(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) @ self.components.T

    def reconstruct(self, values: np.ndarray) -> np.ndarray:
        return self.transform(values) @ self.components + self.mean


@dataclass
class FAModel:
    mean: np.ndarray
    loadings: np.ndarray  # (d, k)
    noise_var: np.ndarray  # (d,), diagonal noise, > 0
    k: int
    log_likelihoods: list[float]
    converged: bool

    def transform(self, values: np.ndarray) -> np.ndarray:
        """Posterior factor means."""
        psi_inv_l = self.loadings / self.noise_var[:, None]
        g = np.linalg.inv(np.eye(self.k) + self.loadings.T @ psi_inv_l)
        return (values - self.mean) @ (psi_inv_l @ g)


def minka_evidence(eigenvalues: np.ndarray, n: int, k: int) -> float:
    """Laplace-approximated log-evidence for a k-component probabilistic PCA."""
    eigs = np.asarray(eigenvalues, dtype=float)
    d = eigs.size
    if not 1 <= k < d:
        raise ConfigError("candidate dimension must be in [1, d-1]")
    if eigs[k - 1] < _EPS:
        return -np.inf

    i = np.arange(1, k + 1)
    log_pu = -k * np.log(2.0) + np.sum(
        gammaln((d - i + 1) / 2.0) - np.log(np.pi) * (d - i + 1) / 2.0
    )
    log_pl = -n / 2.0 * np.sum(np.log(eigs[:k]))
    noise = max(float(np.mean(eigs[k:])), _EPS)
    log_pv = -n * (d - k) / 2.0 * np.log(noise)
    m = d * k - k * (k + 1) / 2.0
    log_pp = np.log(2.0 * np.pi) * (m + k) / 2.0

    adjusted = eigs.copy()
    adjusted[k:] = noise
    log_pa = 0.0
    for i in range(k):
        gaps = (eigs[i] - eigs[i + 1 :]) * (1.0 / adjusted[i + 1 :] - 1.0 / eigs[i])
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.log(gaps) + np.log(n)
        if not np.all(np.isfinite(terms)):
            return -np.inf
        log_pa += float(np.sum(terms))

    return float(log_pu + log_pl + log_pv + log_pp - log_pa / 2.0 - k / 2.0 * np.log(n))


def minka_dimension(eigenvalues: np.ndarray, n: int) -> int:
    """Dimension with the highest Laplace log-evidence, over k in [1, d-1]."""
    eigs = np.asarray(eigenvalues, dtype=float)
    d = eigs.size
    if d < 2 or int(np.sum(eigs > _EPS)) < 2:
        return 1
    scores = np.array([minka_evidence(eigs, n, k) for k in range(1, d)])
    if not np.any(np.isfinite(scores)):
        return 1
    return int(np.argmax(scores)) + 1


def fit_pca(values: np.ndarray, n_components: int | str = "minka") -> PCAModel:
    """Eigendecomposition of the population covariance; rows project onto the
    top components. n_components is an integer or "minka"."""
    n, d = values.shape
    if n <= 2:
        raise DegenerateDataError("PCA needs more than 2 rows")
    if not np.all(np.isfinite(values)):
        raise DegenerateDataError("PCA input contains non-finite values")
    mean = values.mean(axis=0)
    centered = values - mean
    cov = centered.T @ centered / n
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    eigvecs = eigvecs[:, order]

    rank = max(1, int(np.sum(eigvals > max(eigvals[0], 1.0) * 1e-12)))
    if n_components == "minka":
        k = minka_dimension(eigvals, n)
    else:
        k = int(n_components)
        if k < 1:
            raise ConfigError("n_components must be >= 1")
        if k > rank:
            warnings.warn(f"requested {k} components but rank is {rank}; clamping")
            k = rank
    k = min(k, d)
    return PCAModel(mean, eigvecs[:, :k].T.copy(), eigvals, k)


def _fa_log_likelihood(cov_sample: np.ndarray, loadings: np.ndarray,
                       noise_var: np.ndarray, n: int) -> float:
    d = cov_sample.shape[0]
    model_cov = loadings @ loadings.T + np.diag(noise_var)
    sign, logdet = np.linalg.slogdet(model_cov)
    if sign <= 0:
        return -np.inf
    trace_term = float(np.trace(np.linalg.solve(model_cov, cov_sample)))
    return -0.5 * n * (d * np.log(2.0 * np.pi) + logdet + trace_term)


def fit_factor_analysis(values: np.ndarray, k: int, tol: float = 1e-6,
                        max_iter: int = 500) -> FAModel:
    """EM for the linear Gaussian factor model x = L z + mu + eps.

    Iterates until the log-likelihood improves by less than tol or max_iter
    is reached; non-convergence is flagged on the model, not raised.
    """
    n, d = values.shape
    if not 1 <= k < d:
        raise ConfigError(f"factor count must satisfy 1 <= k < d, got k={k}, d={d}")
    if n < 2:
        raise DegenerateDataError("factor analysis needs at least 2 rows")

    mean = values.mean(axis=0)
    centered = values - mean
    cov_sample = centered.T @ centered / n

    eigvals, eigvecs = np.linalg.eigh(cov_sample)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    eigvecs = eigvecs[:, order]
    noise0 = float(np.mean(eigvals[k:])) if k < d else _EPS
    loadings = eigvecs[:, :k] * np.sqrt(np.clip(eigvals[:k] - noise0, _EPS, None))
    noise_var = np.clip(np.diag(cov_sample) - np.sum(loadings**2, axis=1), 1e-6, None)

    log_likelihoods = [_fa_log_likelihood(cov_sample, loadings, noise_var, n)]
    converged = False
    for _ in range(max_iter):
        psi_inv_l = loadings / noise_var[:, None]  # (d, k)
        g = np.linalg.inv(np.eye(k) + loadings.T @ psi_inv_l)  # posterior cov
        ez = centered @ (psi_inv_l @ g)  # (n, k)
        ezz = n * g + ez.T @ ez  # sum of E[zz^T]
        cxz = centered.T @ ez  # (d, k)

        loadings = np.linalg.solve(ezz.T, cxz.T).T
        noise_var = np.clip(
            np.diag(cov_sample) - np.sum(loadings * (cxz / n), axis=1), 1e-6, None
        )

        ll = _fa_log_likelihood(cov_sample, loadings, noise_var, n)
        log_likelihoods.append(ll)
        if ll - log_likelihoods[-2] < tol:
            converged = True
            break
    if not converged:
        warnings.warn("factor analysis EM did not converge; returning best iterate")
    return FAModel(mean, loadings, noise_var, k, log_likelihoods, converged)

"""Variational Bayesian Gaussian mixture with full covariances.

Fits up to K_max components under a Dirichlet weight prior and a
Gauss-Wishart prior per component; the weight prior shrinks unused
components towards zero so the effective cluster count is read off the
posterior weights (everything above a pruning floor). Assignment of a new
point is the argmax responsibility over the effective components, unless
the point's density is below the outlier threshold in every component.

Deterministic for a fixed seed (k-means style initialization drives the
first responsibilities).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import digamma, logsumexp

COVARIANCE_JITTER = 1e-6
OUTLIER_LABEL = -1


class NotFittedError(RuntimeError):
    pass


@dataclass
class MixtureModel:
    """Fitted posterior summary: one row per component (K_max of them)."""

    weights: np.ndarray          # (K,), sums to 1
    means: np.ndarray            # (K, d)
    covariances: np.ndarray      # (K, d, d), SPD
    prune_floor: float
    seed: int
    iterations: int = 0
    effective: np.ndarray = field(init=False)  # indices of surviving components

    def __post_init__(self) -> None:
        self.effective = np.flatnonzero(self.weights >= self.prune_floor)

    @property
    def n_effective(self) -> int:
        return len(self.effective)

    def component_log_densities(self, point: np.ndarray) -> np.ndarray:
        """log N(point; mean_k, cov_k) for every effective component."""
        point = np.asarray(point, dtype=np.float64)
        d = point.shape[0]
        out = np.empty(len(self.effective))
        for i, k in enumerate(self.effective):
            diff = point - self.means[k]
            chol = np.linalg.cholesky(self.covariances[k])
            z = np.linalg.solve(chol, diff)
            logdet = 2.0 * np.log(np.diag(chol)).sum()
            out[i] = -0.5 * (d * np.log(2 * np.pi) + logdet + z @ z)
        return out


def fit_mixture(points, k_max: int, concentration: float | None = None,
                seed: int = 0, max_iter: int = 200, tol: float = 1e-4,
                prune_floor: float | None = None) -> MixtureModel:
    """Variational inference over a Gaussian mixture with K_max components."""
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] < 1:
        raise ValueError("points must be a (n, d) array")
    if not np.all(np.isfinite(X)):
        raise ValueError("points contain non-finite entries")
    n, d = X.shape
    if n < k_max:
        raise ValueError(f"need at least K_max={k_max} points, got {n}")
    if prune_floor is None:
        prune_floor = 1.0 / (10.0 * k_max)

    alpha0 = concentration if concentration is not None else 1.0 / k_max
    beta0 = 1.0
    m0 = X.mean(axis=0)
    nu0 = d + 2.0
    data_cov = np.cov(X.T).reshape(d, d) + COVARIANCE_JITTER * np.eye(d)
    # Prior sized to the expected within-cluster covariance rather than the
    # full data spread: with up to k_max clusters the per-cluster variance
    # shrinks by roughly k_max^(2/d) along each axis.
    inv_w0 = data_cov * nu0 / k_max ** (2.0 / d)

    resp = _init_responsibilities(X, k_max, seed)
    alpha = beta = nu = None
    m = invw = None
    for iteration in range(1, max_iter + 1):
        # M step: Dirichlet and Gauss-Wishart posterior updates
        nk = resp.sum(axis=0) + 1e-12
        xbar = (resp.T @ X) / nk[:, None]
        alpha = alpha0 + nk
        beta = beta0 + nk
        nu = nu0 + nk
        m = (beta0 * m0 + nk[:, None] * xbar) / beta[:, None]
        invw = np.empty((k_max, d, d))
        for k in range(k_max):
            diff = X - xbar[k]
            sk = (resp[:, k][:, None] * diff).T @ diff / nk[k]
            dm = (xbar[k] - m0)[:, None]
            invw[k] = inv_w0 + nk[k] * sk + \
                (beta0 * nk[k] / beta[k]) * (dm @ dm.T)

        # E step: expected log weights / log dets -> responsibilities
        e_log_pi = digamma(alpha) - digamma(alpha.sum())
        log_rho = np.empty((n, k_max))
        for k in range(k_max):
            chol = np.linalg.cholesky(invw[k])
            logdet_invw = 2.0 * np.log(np.diag(chol)).sum()
            e_logdet = digamma(0.5 * (nu[k] - np.arange(d))).sum() \
                + d * np.log(2.0) - logdet_invw
            diff = X - m[k]
            z = np.linalg.solve(chol, diff.T)
            quad = nu[k] * (z * z).sum(axis=0)
            log_rho[:, k] = e_log_pi[k] + 0.5 * e_logdet \
                - 0.5 * (d / beta[k] + quad) - 0.5 * d * np.log(2 * np.pi)
        log_norm = logsumexp(log_rho, axis=1, keepdims=True)
        new_resp = np.exp(log_rho - log_norm)
        shift = np.abs(new_resp - resp).max()
        resp = new_resp
        if shift < tol:
            break

    weights = alpha / alpha.sum()
    weights = weights / weights.sum()
    covariances = np.empty((k_max, d, d))
    for k in range(k_max):
        cov = invw[k] / nu[k]
        covariances[k] = 0.5 * (cov + cov.T) + COVARIANCE_JITTER * np.eye(d)
    return MixtureModel(weights=weights, means=m, covariances=covariances,
                        prune_floor=prune_floor, seed=seed, iterations=iteration)


def _init_responsibilities(X: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Hard assignments from a short seeded k-means (k-means++ start)."""
    rng = np.random.default_rng(seed)
    n = len(X)
    centers = [X[rng.integers(n)]]
    for _ in range(k - 1):
        d2 = np.min([((X - c) ** 2).sum(axis=1) for c in centers], axis=0)
        total = d2.sum()
        if total <= 0:
            centers.append(X[rng.integers(n)])
            continue
        centers.append(X[rng.choice(n, p=d2 / total)])
    centers = np.array(centers)
    labels = np.zeros(n, dtype=int)
    for _ in range(10):
        dists = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = dists.argmin(axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            mask = labels == j
            if mask.any():
                centers[j] = X[mask].mean(axis=0)
    resp = np.full((n, k), 1e-10)
    resp[np.arange(n), labels] = 1.0
    return resp / resp.sum(axis=1, keepdims=True)


def assign(model: MixtureModel, point, threshold: float) -> int:
    """Label of the best component, or OUTLIER_LABEL below the density floor.

    The returned label indexes ``model.effective`` (0-based), so labels are
    dense over surviving components.
    """
    if model.n_effective == 0:
        raise NotFittedError("model has no effective components")
    log_dens = model.component_log_densities(np.asarray(point, dtype=np.float64))
    if threshold > 0 and np.all(log_dens < np.log(threshold)):
        return OUTLIER_LABEL
    log_post = log_dens + np.log(model.weights[model.effective])
    return int(np.argmax(log_post))

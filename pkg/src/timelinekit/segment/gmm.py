"""Full-covariance Gaussian mixtures over RGB samples, fitted by hard-assignment EM."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateInput

EPSILON = 1e-3
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class GmmModel:
    weights: np.ndarray  # (K,)
    means: np.ndarray  # (K, 3)
    covariances: np.ndarray  # (K, 3, 3)

    @property
    def n_components(self) -> int:
        return int(self.weights.shape[0])

    def component_costs(self, pixels: np.ndarray) -> np.ndarray:
        """``-log(w_k * N(z | mu_k, S_k))`` for every pixel and component, shape (N, K)."""
        z = np.asarray(pixels, dtype=float).reshape(-1, 3)
        out = np.empty((z.shape[0], self.n_components))
        for k in range(self.n_components):
            cov = self.covariances[k]
            chol = np.linalg.cholesky(cov)
            white = (z - self.means[k]) @ np.linalg.inv(chol).T
            maha = np.einsum("ij,ij->i", white, white)
            logdet = 2.0 * np.log(np.diag(chol)).sum()
            out[:, k] = -np.log(self.weights[k]) + 0.5 * (maha + logdet + 3 * _LOG_2PI)
        return out

    def assign(self, pixels: np.ndarray) -> np.ndarray:
        return np.argmin(self.component_costs(pixels), axis=1)

    def cost(self, pixels: np.ndarray) -> np.ndarray:
        """Data cost of the best component per pixel (hard-assignment likelihood)."""
        return self.component_costs(pixels).min(axis=1)


def _estimate(z: np.ndarray, labels: np.ndarray, k: int, eps: float) -> GmmModel:
    weights, means, covs = [], [], []
    n = z.shape[0]
    for c in range(k):
        pts = z[labels == c]
        if pts.shape[0] == 0:
            continue
        mu = pts.mean(axis=0)
        d = pts - mu
        cov = d.T @ d / pts.shape[0] + eps * np.eye(3)
        weights.append(pts.shape[0] / n)
        means.append(mu)
        covs.append(cov)
    return GmmModel(np.array(weights), np.array(means), np.array(covs))


def _kmeans(z: np.ndarray, k: int, rng: np.random.Generator, iters: int = 10, sample: int = 4000) -> np.ndarray:
    # k-means++ seeding on distinct colors, Lloyd iterations on a subsample,
    # then one assignment pass over everything
    full = z
    if z.shape[0] > sample:
        z = z[np.sort(rng.choice(z.shape[0], sample, replace=False))]
    uniq = np.unique(z, axis=0)
    k = min(k, uniq.shape[0])
    centers = [uniq[rng.integers(uniq.shape[0])]]
    for _ in range(1, k):
        d2 = np.min(((uniq[:, None, :] - np.array(centers)[None]) ** 2).sum(-1), axis=1)
        if d2.sum() <= 0:
            break
        centers.append(uniq[rng.choice(uniq.shape[0], p=d2 / d2.sum())])
    centers = np.array(centers, dtype=float)
    labels = np.zeros(z.shape[0], dtype=np.int64)
    for _ in range(iters):
        d2 = ((z[:, None, :] - centers[None]) ** 2).sum(-1)
        new = np.argmin(d2, axis=1)
        if np.array_equal(new, labels) and _ > 0:
            break
        labels = new
        for c in range(centers.shape[0]):
            sel = labels == c
            if sel.any():
                centers[c] = z[sel].mean(axis=0)
    return np.argmin(((full[:, None, :] - centers[None]) ** 2).sum(-1), axis=1)


def fit_gmm(
    pixels,
    k: int = 5,
    *,
    eps: float = EPSILON,
    max_iters: int = 20,
    seed: int = 0,
    strict: bool = False,
) -> GmmModel:
    """Fit a K-component mixture to an (N, 3) sample of RGB values in [0, 255].

    Components start from k-means and are refined by alternating hard
    assignment and parameter re-estimation until the assignment is stable.
    Identical samples with ``k > 1`` collapse to one component, or raise
    :class:`DegenerateInput` when ``strict``.
    """
    z = np.asarray(pixels, dtype=float).reshape(-1, 3)
    if z.shape[0] < k:
        raise ValueError(f"need at least {k} samples, got {z.shape[0]}")
    if k > 1 and z.shape[0] > 1 and np.all(z == z[0]):
        if strict:
            raise DegenerateInput("all samples are identical")
        k = 1
    if k == 1 or z.shape[0] == 1:
        return _estimate(z, np.zeros(z.shape[0], dtype=np.int64), 1, eps)
    if z.shape[0] == k:
        return _estimate(z, np.arange(k), k, eps)

    rng = np.random.default_rng(seed)
    labels = _kmeans(z, k, rng)
    model = _estimate(z, labels, k, eps)
    for _ in range(max_iters):
        new = model.assign(z)
        if np.array_equal(new, labels):
            break
        labels = new
        model = _estimate(z, labels, model.n_components, eps)
    return model


def refit(model: GmmModel, pixels, eps: float = EPSILON) -> GmmModel:
    """One assignment + re-estimation step, keeping the component count where possible."""
    z = np.asarray(pixels, dtype=float).reshape(-1, 3)
    labels = model.assign(z)
    return _estimate(z, labels, model.n_components, eps)

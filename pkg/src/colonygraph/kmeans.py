"""Lloyd's k-means with k-means++ seeding and seeded restarts."""

from __future__ import annotations

import numpy as np

MAX_ITER = 300


def _sqdist(X, C):
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def kmeans_pp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers.append(X[idx])
        d2 = np.minimum(d2, ((X - X[idx]) ** 2).sum(axis=1))
    return np.array(centers, dtype=np.float64)


def inertia(X: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> float:
    return float(((X - centroids[labels]) ** 2).sum())


def lloyd(X: np.ndarray, centroids: np.ndarray, max_iter: int = MAX_ITER):
    """Returns (labels, centroids, inertia history)."""
    k = centroids.shape[0]
    C = centroids.copy()
    labels = np.argmin(_sqdist(X, C), axis=1)
    history = [inertia(X, labels, C)]
    for _ in range(max_iter):
        for j in range(k):
            members = labels == j
            if members.any():
                C[j] = X[members].mean(axis=0)
            else:
                # steal the point farthest from its own centroid
                far = int(np.argmax(((X - C[labels]) ** 2).sum(axis=1)))
                C[j] = X[far]
                labels[far] = j
        new = np.argmin(_sqdist(X, C), axis=1)
        history.append(inertia(X, new, C))
        if np.array_equal(new, labels):
            break
        labels = new
    return labels, C, history


def kmeans(points, k: int, seed: int = 0, restarts: int = 10):
    """Best-inertia (labels, centroids) over ``restarts`` k-means++ starts."""
    X = np.asarray(points, dtype=np.float64)
    if k <= 0:
        raise ValueError("k must be positive")
    if k > X.shape[0]:
        raise ValueError("k exceeds the number of points")
    best = None
    for r in range(max(1, restarts)):
        rng = np.random.default_rng([seed, r])
        labels, C, hist = lloyd(X, kmeans_pp_init(X, k, rng))
        score = inertia(X, labels, C)
        if best is None or score < best[0]:
            best = (score, labels, C)
    return best[1], best[2]

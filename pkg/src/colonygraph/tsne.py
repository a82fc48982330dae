"""Exact t-SNE in numpy, for the few hundred tensors of a small colony."""

from __future__ import annotations

import logging
import math

import numpy as np

log = logging.getLogger(__name__)

EXAGGERATION = 12.0
EXAGGERATION_ITERS = 250
MOMENTUM_SWITCH = 250


def squared_distances(X: np.ndarray) -> np.ndarray:
    sq = (X * X).sum(axis=1)
    D = sq[:, None] + sq[None, :] - 2.0 * X @ X.T
    np.maximum(D, 0.0, out=D)
    np.fill_diagonal(D, 0.0)
    return D


def _row_entropy(d: np.ndarray, beta: float):
    """Shannon entropy (bits) and probabilities of exp(-beta * d)."""
    shifted = d - d.min()
    p = np.exp(-beta * shifted)
    s = p.sum()
    p /= s
    nz = p > 0
    h = -float((p[nz] * np.log2(p[nz])).sum())
    return h, p


def conditional_affinities(D: np.ndarray, perplexity: float, tol: float = 1e-5,
                           max_steps: int = 50):
    """Row-stochastic P_{j|i} with each row's perplexity matched by bisection
    on the Gaussian precision. Returns (P, betas)."""
    n = D.shape[0]
    target = math.log2(perplexity)
    P = np.zeros((n, n))
    betas = np.ones(n)
    for i in range(n):
        d = np.delete(D[i], i)
        beta, lo, hi = 1.0, 0.0, math.inf
        if d.max() > 0:
            beta = 1.0 / np.median(d[d > 0]) if np.any(d > 0) else 1.0
        h, p = _row_entropy(d, beta)
        for _ in range(max_steps):
            diff = h - target
            if abs(diff) <= tol:
                break
            if diff > 0:
                lo = beta
                beta = beta * 2.0 if hi == math.inf else 0.5 * (beta + hi)
            else:
                hi = beta
                beta = 0.5 * (beta + lo)
            h, p = _row_entropy(d, beta)
        betas[i] = beta
        P[i, np.arange(n) != i] = p
    return P, betas


def joint_affinities(X: np.ndarray, perplexity: float) -> np.ndarray:
    P, _ = conditional_affinities(squared_distances(X), perplexity)
    P = P + P.T
    P /= P.sum()
    return np.maximum(P, 1e-12)


def kl_divergence(P: np.ndarray, Y: np.ndarray) -> float:
    num = 1.0 / (1.0 + squared_distances(Y))
    np.fill_diagonal(num, 0.0)
    Q = np.maximum(num / num.sum(), 1e-12)
    mask = ~np.eye(P.shape[0], dtype=bool)
    return float((P[mask] * np.log(P[mask] / Q[mask])).sum())


def tsne_2d(points, perplexity: float = 15.0, iterations: int = 1000, seed: int = 0,
            learning_rate: float = 200.0) -> np.ndarray:
    X = np.asarray(points, dtype=np.float64)
    n = X.shape[0]
    if n < 3:
        raise ValueError("t-SNE needs at least 3 points")
    if perplexity >= (n - 1) / 3:
        raise ValueError(f"perplexity {perplexity} too large for {n} points")
    rng = np.random.default_rng(seed)
    if np.all(X == X[0]):
        log.warning("all %d points are identical; returning a jittered layout", n)
        return rng.normal(0.0, 1e-4, size=(n, 2))

    P = joint_affinities(X, perplexity)
    Y = rng.normal(0.0, 1e-4, size=(n, 2))
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    for it in range(iterations):
        exag = EXAGGERATION if it < EXAGGERATION_ITERS else 1.0
        momentum = 0.5 if it < MOMENTUM_SWITCH else 0.8
        num = 1.0 / (1.0 + squared_distances(Y))
        np.fill_diagonal(num, 0.0)
        Q = np.maximum(num / num.sum(), 1e-12)
        W = (exag * P - Q) * num
        grad = 4.0 * (np.diag(W.sum(axis=1)) - W) @ Y
        same = np.sign(grad) == np.sign(update)
        gains = np.where(same, gains * 0.8, gains + 0.2)
        np.maximum(gains, 0.01, out=gains)
        update = momentum * update - learning_rate * gains * grad
        Y = Y + update
        Y -= Y.mean(axis=0)
    return Y

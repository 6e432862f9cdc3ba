"""Spectral clustering pipelines.

The embedding is the K-leading singular-vector subspace of a symmetric
(smoothed) adjacency matrix, computed by block power iteration with
Rayleigh-Ritz extraction; cluster assignments come from k-means with
k-means++ seeding and Lloyd iterations. ``decayed_spectral_cluster`` runs
the pipeline over a dynamic graph with a static, scalar-decay, or
matrix-decay smoothed input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from decaygraph.dsbm import DynamicGraph, ParameterError, one_hot
from decaygraph.smoothing import (
    SmoothedAdjacency,
    initial_smoothed,
    smooth_matrix,
    smooth_scalar,
)

__all__ = [
    "Embedding",
    "KmeansResult",
    "StepEstimate",
    "jacobi_eigh",
    "leading_singular_vectors",
    "kmeans",
    "spectral_cluster",
    "decayed_spectral_cluster",
]


@dataclass(eq=False)
class Embedding:
    """n x K orthonormal singular-vector matrix with its singular values."""

    vectors: np.ndarray
    singular_values: np.ndarray


@dataclass(eq=False)
class KmeansResult:
    theta_hat: np.ndarray  # n x K one-hot
    centroids: np.ndarray  # K x d
    cost: float  # Frobenius objective ||Theta C - E||_F^2
    repaired: bool  # an empty cluster had to be refilled
    cost_history: list | None = None  # per-Lloyd-iteration objective values


@dataclass(eq=False)
class StepEstimate:
    """Per-step clustering output: one-hot memberships plus soft scores."""

    theta: np.ndarray
    scores: np.ndarray


def jacobi_eigh(S: np.ndarray, tol: float = 1e-14, sweeps: int = 100):
    """Cyclic Jacobi eigendecomposition of a small symmetric matrix.

    Returns (eigenvalues, eigenvectors) with columns as eigenvectors.
    Intended for the K x K Rayleigh-Ritz problems, keeping the spectral path
    independent of dense library decompositions.
    """
    A = np.array(S, dtype=float)
    m = A.shape[0]
    V = np.eye(m)
    for _ in range(sweeps):
        off = np.sqrt(np.sum(np.tril(A, -1) ** 2))
        if off <= tol * max(1.0, np.max(np.abs(np.diag(A)))):
            break
        for p in range(m - 1):
            for q in range(p + 1, m):
                if abs(A[p, q]) <= 1e-300:
                    continue
                # classic 2x2 rotation annihilating A[p, q]
                theta = 0.5 * (A[q, q] - A[p, p]) / A[p, q]
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                J = np.eye(m)
                J[p, p] = J[q, q] = c
                J[p, q] = s
                J[q, p] = -s
                A = J.T @ A @ J
                V = V @ J
    return np.diag(A).copy(), V


def leading_singular_vectors(
    M: np.ndarray,
    K: int,
    seed: int = 0,
    tol: float = 1e-10,
    max_iter: int = 5000,
) -> Embedding:
    """K-leading left singular vectors of a symmetric matrix.

    Block power iteration on M^2 (so both ends of the spectrum are captured)
    followed by Rayleigh-Ritz with M itself; singular values are the absolute
    Ritz values, returned in nonincreasing order.
    """
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise ParameterError("matrix entries must be finite")
    n = M.shape[0]
    if M.shape != (n, n):
        raise ParameterError("matrix must be square")
    if K > n:
        raise ParameterError(f"K={K} exceeds matrix size n={n}")
    scale = float(np.max(np.abs(M)))
    rng = np.random.default_rng(seed)
    # oversampled block: a wider subspace both speeds convergence and
    # resolves near-degenerate +/- eigenvalue pairs at the cut-off
    B = min(n, K + 8)
    X, _ = np.linalg.qr(rng.standard_normal((n, B)))
    if scale == 0.0:
        return Embedding(vectors=X[:, :K], singular_values=np.zeros(K))
    best_resid = np.inf
    stagnant = 0
    for _ in range(max_iter):
        Y = M @ (M @ X)
        X, _ = np.linalg.qr(Y)
        S = X.T @ (M @ X)
        evals, W = jacobi_eigh(0.5 * (S + S.T))
        order = np.argsort(-np.abs(evals), kind="stable")
        evals, W = evals[order], W[:, order]
        V = X @ W
        resid = float(
            np.max(np.linalg.norm(M @ V[:, :K] - V[:, :K] * evals[None, :K], axis=0))
        )
        if resid <= tol * scale * n:
            X = V
            break
        # bail out once the residual stops shrinking (degenerate spectrum)
        stagnant = stagnant + 1 if resid >= best_resid * (1.0 - 1e-12) else 0
        best_resid = min(best_resid, resid)
        if stagnant >= 20:
            X = V
            break
    else:
        X = V
    return Embedding(vectors=X[:, :K], singular_values=np.abs(evals[:K]))


def _kmeans_pp_init(points: np.ndarray, K: int, rng: np.random.Generator):
    n = points.shape[0]
    centroids = np.empty((K, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    d2 = np.sum((points - centroids[0]) ** 2, axis=1)
    for k in range(1, K):
        total = d2.sum()
        if total <= 0.0:
            centroids[k] = points[rng.integers(n)]
            continue
        centroids[k] = points[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((points - centroids[k]) ** 2, axis=1))
    return centroids


def _lloyd(points: np.ndarray, centroids: np.ndarray, max_iter: int):
    n, K = points.shape[0], centroids.shape[0]
    assign = np.full(n, -1)
    repaired = False
    history: list[float] = []
    for _ in range(max_iter):
        d2 = (
            np.sum(points**2, axis=1)[:, None]
            - 2.0 * points @ centroids.T
            + np.sum(centroids**2, axis=1)[None, :]
        )
        new_assign = np.argmin(d2, axis=1)  # argmin breaks ties at lowest index
        # refill empty clusters with the point farthest from its centroid
        for k in range(K):
            if np.any(new_assign == k):
                continue
            repaired = True
            far = np.argmax(d2[np.arange(n), new_assign])
            new_assign[far] = k
            d2[far] = 0.0
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for k in range(K):
            centroids[k] = points[assign == k].mean(axis=0)
        history.append(float(np.sum((points - centroids[assign]) ** 2)))
    cost = float(np.sum((points - centroids[assign]) ** 2))
    return assign, centroids, cost, repaired, history


def kmeans(
    points: np.ndarray,
    K: int,
    seed: int = 0,
    restarts: int = 10,
    max_iter: int = 300,
) -> KmeansResult:
    """Best-of-restarts k-means with k-means++ seeding."""
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if n < K:
        raise ParameterError(f"need at least K={K} points, got {n}")
    best: KmeansResult | None = None
    for r in range(restarts):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(r,)))
        centroids = _kmeans_pp_init(points, K, rng)
        assign, centroids, cost, repaired, history = _lloyd(
            points, centroids.copy(), max_iter
        )
        if best is None or cost < best.cost:
            best = KmeansResult(
                theta_hat=one_hot(assign, K),
                centroids=centroids,
                cost=cost,
                repaired=repaired,
                cost_history=history,
            )
    return best


def _softmin_scores(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Distance-to-centroid softmin scores in (0, 1), rows summing to 1."""
    d2 = (
        np.sum(points**2, axis=1)[:, None]
        - 2.0 * points @ centroids.T
        + np.sum(centroids**2, axis=1)[None, :]
    )
    z = -d2 + d2.min(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def spectral_cluster(M: np.ndarray, K: int, seed: int = 0) -> np.ndarray:
    """One-hot memberships from k-means on the K-leading singular vectors."""
    return _spectral_step(M, K, seed).theta


def _spectral_step(M: np.ndarray, K: int, seed: int) -> StepEstimate:
    emb = leading_singular_vectors(M, K, seed=seed)
    # cluster the singular-value-weighted projection (as a truncated-SVD
    # transform would produce); weighting the axes by signal strength is
    # markedly more robust than the bare orthonormal basis on sparse input
    points = emb.vectors * emb.singular_values[None, :]
    result = kmeans(points, K, seed=seed)
    return StepEstimate(
        theta=result.theta_hat,
        scores=_softmin_scores(points, result.centroids),
    )


def decayed_spectral_cluster(
    graph: DynamicGraph,
    decay,
    K: int,
    seed: int = 0,
    mode: str = "oracle",
    static_clip: bool = True,
) -> list[StepEstimate]:
    """Cluster every time step of a dynamic graph.

    decay=None uses the cumulative adjacency (static baseline; binary union
    of snapshots by default, raw sum when static_clip=False). A scalar decay
    runs the scalar smoothing recursion; a K x K decay matrix runs the
    per-cluster recursion weighted by the true memberships (mode="oracle")
    or the previous step's estimate (mode="plugin").
    """
    if mode not in ("oracle", "plugin"):
        raise ParameterError(f"unknown mode {mode!r}")
    steps: list[StepEstimate] = []
    smoothed: SmoothedAdjacency | None = None
    cumulative = np.zeros_like(graph.snapshots[0], dtype=float)
    for t in range(1, graph.T + 1):
        snapshot = graph.snapshots[t - 1]
        if decay is None:
            cumulative += snapshot
            target = np.minimum(cumulative, 1.0) if static_clip else cumulative
        elif np.isscalar(decay):
            smoothed = (
                initial_smoothed(snapshot)
                if smoothed is None
                else smooth_scalar(smoothed, snapshot, float(decay))
            )
            target = smoothed.matrix
        else:
            if smoothed is None:
                smoothed = initial_smoothed(snapshot)
            else:
                if mode == "oracle":
                    if not graph.memberships:
                        raise ParameterError("oracle mode needs ground-truth memberships")
                    theta_w = graph.memberships[t - 1]
                else:
                    theta_w = steps[-1].theta
                smoothed = smooth_matrix(smoothed, snapshot, theta_w, decay)
            target = smoothed.matrix
        steps.append(_spectral_step(target, K, seed))
    return steps

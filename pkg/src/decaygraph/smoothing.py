"""Exponentially weighted adjacency smoothing.

Scalar rule: A_hat_t = (1 - lam) * A_hat_{t-1} + lam * A_t, base case
A_hat_1 = A_1. The matrix rule replaces lam with the per-entry weight
(Theta Lambda Theta^T)_ij so each cluster pair gets its own decay rate.
Also provides the closed-form optimal per-cluster decay rate
min(1, sqrt(n * alpha * epsilon_k)) and the two concentration bound terms
it balances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from decaygraph.dsbm import ParameterError

__all__ = [
    "SmoothedAdjacency",
    "initial_smoothed",
    "smooth_scalar",
    "smooth_matrix",
    "effective_weights",
    "optimal_decay_rate",
    "optimal_decay_matrix",
    "concentration_terms",
]


@dataclass(eq=False)
class SmoothedAdjacency:
    """Smoothed n x n symmetric adjacency and the step index it belongs to."""

    matrix: np.ndarray
    step: int


def initial_smoothed(snapshot: np.ndarray) -> SmoothedAdjacency:
    """Base case A_hat_1 = A_1."""
    return SmoothedAdjacency(np.asarray(snapshot, dtype=float), step=1)


def smooth_scalar(
    prev: SmoothedAdjacency, snapshot: np.ndarray, lam: float
) -> SmoothedAdjacency:
    """One step of the scalar decay recursion."""
    if not 0.0 <= lam <= 1.0:
        raise ParameterError(f"decay rate {lam!r} must lie in [0, 1]")
    snapshot = np.asarray(snapshot, dtype=float)
    if snapshot.shape != prev.matrix.shape:
        raise ParameterError("snapshot shape does not match smoothed matrix")
    return SmoothedAdjacency(
        (1.0 - lam) * prev.matrix + lam * snapshot, step=prev.step + 1
    )


def smooth_matrix(
    prev: SmoothedAdjacency,
    snapshot: np.ndarray,
    theta: np.ndarray,
    lambda_mat: np.ndarray,
) -> SmoothedAdjacency:
    """One step of the per-cluster decay recursion.

    Entry (i, j) is combined with weight Lambda[c(i), c(j)] for cluster
    labels c. The weight matrix is symmetrized as (W + W^T)/2 so symmetric
    inputs stay exactly symmetric even for asymmetric Lambda.
    """
    lambda_mat = np.asarray(lambda_mat, dtype=float)
    if np.any(lambda_mat < 0.0) or np.any(lambda_mat > 1.0):
        raise ParameterError("decay matrix entries must lie in [0, 1]")
    snapshot = np.asarray(snapshot, dtype=float)
    if snapshot.shape != prev.matrix.shape or theta.shape[0] != snapshot.shape[0]:
        raise ParameterError("shapes of snapshot, memberships and matrix disagree")
    W = theta @ lambda_mat @ theta.T
    W = 0.5 * (W + W.T)
    return SmoothedAdjacency(
        (1.0 - W) * prev.matrix + W * snapshot, step=prev.step + 1
    )


def effective_weights(lam: float, t: int) -> np.ndarray:
    """Weights beta_s such that t recursion steps equal sum_s beta_s A_{t-s}.

    beta_s = lam * (1 - lam)^s for s < t and beta_t = (1 - lam)^t (the weight
    of the base-case snapshot); the weights sum to 1.
    """
    if not 0.0 <= lam <= 1.0:
        raise ParameterError(f"decay rate {lam!r} must lie in [0, 1]")
    if t < 1:
        raise ParameterError("t must be at least 1")
    s = np.arange(t + 1, dtype=float)
    betas = lam * (1.0 - lam) ** s
    betas[t] = (1.0 - lam) ** t
    return betas


def optimal_decay_rate(n: int, alpha: float, epsilon_k: float) -> float:
    """Closed-form per-cluster optimum min(1, sqrt(n * alpha * epsilon_k))."""
    if n <= 0 or alpha <= 0 or epsilon_k < 0:
        raise ParameterError("require n > 0, alpha > 0, epsilon_k >= 0")
    return min(1.0, float(np.sqrt(n * alpha * epsilon_k)))


def optimal_decay_matrix(n: int, alpha: float, epsilon: np.ndarray) -> np.ndarray:
    """Decay matrix with the per-cluster optimum on the diagonal, 1 elsewhere."""
    epsilon = np.asarray(epsilon, dtype=float)
    K = epsilon.shape[0]
    lam = np.ones((K, K))
    for k in range(K):
        lam[k, k] = optimal_decay_rate(n, alpha, float(epsilon[k]))
    return lam


def concentration_terms(
    beta_k: float, n: int, alpha: float, epsilon_k: float
) -> tuple[float, float]:
    """The two concentration bound terms whose sum the optimal rate minimizes.

    E1 = sqrt(n * alpha * beta_k) grows with the decay rate (noise from
    recent snapshots); E2 = alpha * sqrt(n^2 * epsilon_k / beta_k) shrinks
    with it (staleness of the remembered history). Diagnostic only.
    """
    if beta_k <= 0.0 or beta_k > 1.0:
        raise ParameterError("beta_k must lie in (0, 1]")
    if n <= 0 or alpha <= 0 or epsilon_k < 0:
        raise ParameterError("require n > 0, alpha > 0, epsilon_k >= 0")
    e1 = float(np.sqrt(n * alpha * beta_k))
    e2 = float(alpha * np.sqrt(n * n * epsilon_k / beta_k))
    return e1, e2

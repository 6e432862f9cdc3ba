"""Dynamic stochastic block model (DSBM) generation.

Each node carries one of K cluster labels. Labels evolve by a Markov chain
with a row-stochastic transition matrix, and every time step contributes a
fresh symmetric snapshot of newly formed edges drawn from the block
connectivity matrix (intra-cluster probability alpha, inter-cluster
tau * alpha). Edges persist, so the cumulative adjacency is the union of
all snapshots.

Reproducibility: all randomness is derived from a single 64-bit seed. Each
(time step, role) pair gets its own substream via ``substream(seed, step,
role)`` with role 0 = membership evolution and role 1 = edge sampling
(step 0, role 0 is the initial assignment), so independent steps can be
generated in parallel without changing results.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ParameterError",
    "SbmParams",
    "DynamicGraph",
    "substream",
    "one_hot",
    "labels_of",
    "build_connectivity",
    "sample_initial_memberships",
    "build_transition_matrix",
    "evolve_memberships",
    "connection_probability",
    "sample_snapshot",
    "generate_sequence",
]


class ParameterError(ValueError):
    """A model parameter is outside its allowed range."""


def substream(seed: int, step: int, role: int) -> np.random.Generator:
    """Named RNG substream for one (time step, role) pair.

    role 0 = membership sampling/evolution, role 1 = edge sampling.
    """
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(step, role))
    return np.random.default_rng(ss)


def one_hot(labels: np.ndarray, K: int) -> np.ndarray:
    """n-vector of labels in [0, K) -> n x K one-hot membership matrix."""
    labels = np.asarray(labels)
    theta = np.zeros((labels.shape[0], K), dtype=np.int64)
    theta[np.arange(labels.shape[0]), labels] = 1
    return theta


def labels_of(theta: np.ndarray) -> np.ndarray:
    """Inverse of :func:`one_hot` for a one-hot membership matrix."""
    return np.argmax(theta, axis=1)


def _check_unit(value: float, name: str, degenerate_ok: bool) -> None:
    if not np.isfinite(value) or value < 0.0 or value > 1.0:
        raise ParameterError(f"{name}={value!r} must lie in [0, 1]")
    if value in (0.0, 1.0):
        if degenerate_ok:
            warnings.warn(
                f"degenerate {name}={value}; allowed for tests but outside "
                "the model's open interval",
                stacklevel=3,
            )
        else:
            raise ParameterError(f"{name}={value!r} must lie in (0, 1)")


@dataclass(eq=False)
class SbmParams:
    """Parameters of a dynamic SBM instance.

    n nodes, K clusters, initial cluster distribution p, intra-cluster edge
    probability alpha, inter-cluster attenuation tau, per-cluster change
    probabilities epsilon, T time steps, RNG seed.
    """

    n: int
    K: int
    p: np.ndarray
    alpha: float
    tau: float
    epsilon: np.ndarray
    T: int
    seed: int = 0

    def __post_init__(self) -> None:
        self.p = np.asarray(self.p, dtype=float)
        self.epsilon = np.asarray(self.epsilon, dtype=float)
        if self.n < 1 or self.K < 2 or self.T < 1:
            raise ParameterError("require n >= 1, K >= 2, T >= 1")
        if self.p.shape != (self.K,):
            raise ParameterError(f"p must have length K={self.K}")
        if self.epsilon.shape != (self.K,):
            raise ParameterError(f"epsilon must have length K={self.K}")
        if np.any(self.p < 0) or np.any(self.p > 1):
            raise ParameterError("p entries must lie in [0, 1]")
        if abs(float(self.p.sum()) - 1.0) > 1e-12:
            raise ParameterError("p must sum to 1 within 1e-12")
        _check_unit(float(self.alpha), "alpha", degenerate_ok=True)
        _check_unit(float(self.tau), "tau", degenerate_ok=True)
        for j, eps in enumerate(self.epsilon):
            _check_unit(float(eps), f"epsilon[{j}]", degenerate_ok=True)

    def validate_strict(self) -> None:
        """Enforce the open-interval constraints used for experiment configs."""
        for name, value in [("alpha", self.alpha), ("tau", self.tau)]:
            if not 0.0 < value < 1.0:
                raise ParameterError(f"{name}={value!r} must lie in (0, 1)")
        if np.any(self.epsilon <= 0.0) or np.any(self.epsilon >= 1.0):
            raise ParameterError("epsilon entries must lie in (0, 1)")


@dataclass(eq=False)
class DynamicGraph:
    """T per-step new-edge snapshots plus the membership matrix at each step.

    ``snapshots[t-1]`` holds only the edges formed at step t (symmetric 0/1,
    zero diagonal); the full adjacency is their union. ``memberships`` may be
    empty for loaded datasets without ground truth.
    """

    snapshots: list[np.ndarray]
    memberships: list[np.ndarray] = field(default_factory=list)
    params: SbmParams | None = None

    @property
    def n(self) -> int:
        return self.snapshots[0].shape[0]

    @property
    def T(self) -> int:
        return len(self.snapshots)

    @property
    def K(self) -> int:
        if self.memberships:
            return self.memberships[0].shape[1]
        if self.params is not None:
            return self.params.K
        raise ValueError("graph has no membership information")

    def cumulative(self, upto: int | None = None, clip: bool = True) -> np.ndarray:
        """Sum of snapshots A_1..A_upto; entries clipped to {0,1} by default."""
        upto = self.T if upto is None else upto
        total = np.zeros_like(self.snapshots[0], dtype=float)
        for a in self.snapshots[:upto]:
            total += a
        if clip:
            total = np.minimum(total, 1.0)
        return total


def build_connectivity(alpha: float, tau: float, K: int) -> np.ndarray:
    """K x K block connectivity matrix: alpha on the diagonal, tau*alpha off it."""
    _check_unit(float(alpha), "alpha", degenerate_ok=True)
    _check_unit(float(tau), "tau", degenerate_ok=True)
    if K < 2:
        raise ParameterError("K must be at least 2")
    B = np.full((K, K), tau * alpha, dtype=float)
    np.fill_diagonal(B, alpha)
    return B


def sample_initial_memberships(params: SbmParams, rng: np.random.Generator) -> np.ndarray:
    """Assign each node an i.i.d. cluster drawn from params.p; one-hot rows."""
    labels = rng.choice(params.K, size=params.n, p=params.p)
    return one_hot(labels, params.K)


def build_transition_matrix(epsilon: np.ndarray, K: int) -> np.ndarray:
    """Row-stochastic membership transition matrix.

    Row j keeps its cluster with probability 1 - epsilon[j] and moves to each
    of the other K-1 clusters with probability epsilon[j] / (K - 1).
    """
    epsilon = np.asarray(epsilon, dtype=float)
    if epsilon.shape != (K,):
        raise ParameterError(f"epsilon must have length K={K}")
    for j, eps in enumerate(epsilon):
        _check_unit(float(eps), f"epsilon[{j}]", degenerate_ok=True)
    H = (epsilon / (K - 1))[:, None] * np.ones((K, K))
    np.fill_diagonal(H, 1.0 - epsilon)
    return H


def evolve_memberships(
    theta_prev: np.ndarray, H: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """One Markov step: each row re-sampled from the H-row of its cluster."""
    n, K = theta_prev.shape
    if H.shape != (K, K):
        raise ParameterError("transition matrix shape does not match memberships")
    prev = labels_of(theta_prev)
    cum = np.cumsum(H, axis=1)[prev]  # n x K per-node cumulative rows
    u = rng.random(n)
    new = np.minimum((cum <= u[:, None]).sum(axis=1), K - 1)
    return one_hot(new, K)


def connection_probability(theta: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Pairwise connection probabilities P = Theta B Theta^T."""
    if theta.shape[1] != B.shape[0] or B.shape[0] != B.shape[1]:
        raise ParameterError("membership and connectivity shapes do not match")
    return theta @ B @ theta.T


def sample_snapshot(
    theta_t: np.ndarray, B: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Sample one symmetric 0/1 new-edge snapshot with zero diagonal."""
    labels = labels_of(theta_t)
    n = labels.shape[0]
    P = B[np.ix_(labels, labels)]
    iu = np.triu_indices(n, k=1)
    edges = rng.random(iu[0].shape[0]) < P[iu]
    A = np.zeros((n, n), dtype=np.int64)
    A[iu] = edges
    return A + A.T


def generate_sequence(params: SbmParams) -> DynamicGraph:
    """Generate a full DSBM instance, deterministic given params.seed.

    Theta_1 is the initial assignment; Theta_t for t >= 2 follows the Markov
    transition; A_t is sampled from Theta_t's block probabilities.
    """
    B = build_connectivity(params.alpha, params.tau, params.K)
    H = build_transition_matrix(params.epsilon, params.K)
    thetas = [sample_initial_memberships(params, substream(params.seed, 0, 0))]
    for t in range(2, params.T + 1):
        thetas.append(evolve_memberships(thetas[-1], H, substream(params.seed, t, 0)))
    snapshots = [
        sample_snapshot(thetas[t - 1], B, substream(params.seed, t, 1))
        for t in range(1, params.T + 1)
    ]
    return DynamicGraph(snapshots=snapshots, memberships=thetas, params=params)

"""Evaluation metrics and spectral diagnostics.

Relative error is the permutation-minimized count of differing membership
matrix entries divided by n (so each mislabeled node contributes 2/n and the
value lies in [0, 2]). Accuracy is node-level agreement after the same
optimal matching, giving the exact identity accuracy + relative_error/2 = 1.
Macro AUC / F1 follow the usual one-vs-rest constructions.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from decaygraph.dsbm import ParameterError, labels_of

__all__ = [
    "EvalReport",
    "match_labels",
    "relative_error",
    "accuracy",
    "split_accuracy",
    "macro_auc",
    "macro_f1",
    "confusion_matrix",
    "spectral_norm",
    "concentration",
    "error_bound",
]

# exhaustive search is exact and cheap up to this K; beyond it use assignment
_ENUM_K = 8


@dataclass
class EvalReport:
    """Bundle of evaluation metrics, optionally with a per-step breakdown.

    ``accuracy_mode`` records whether accuracy used optimal label matching
    ("matched", unsupervised) or the labels as given ("split", supervised).
    """

    relative_error: float
    accuracy: float
    macro_auc: float
    macro_f1: float
    accuracy_mode: str = "matched"
    per_step: list[dict] = field(default_factory=list)


def _check_one_hot(theta: np.ndarray, name: str) -> None:
    if theta.ndim != 2:
        raise ParameterError(f"{name} must be a 2-D membership matrix")
    ok = np.all(np.sum(theta == 1, axis=1) == 1) and np.all(
        (theta == 0) | (theta == 1)
    )
    if not ok:
        raise ParameterError(f"{name} rows must be one-hot")


def confusion_matrix(pred: np.ndarray, true: np.ndarray, K: int) -> np.ndarray:
    """K x K counts C[a, b] = #nodes predicted a with true label b."""
    C = np.zeros((K, K), dtype=np.int64)
    np.add.at(C, (pred, true), 1)
    return C


def match_labels(theta_hat: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Optimal permutation perm (predicted cluster j -> true cluster perm[j]).

    Maximizes the number of agreeing nodes: exact K! enumeration for small K,
    optimal assignment on the confusion matrix otherwise.
    """
    _check_one_hot(theta_hat, "theta_hat")
    _check_one_hot(theta, "theta")
    if theta_hat.shape != theta.shape:
        raise ParameterError("membership matrices must have the same shape")
    K = theta.shape[1]
    C = confusion_matrix(labels_of(theta_hat), labels_of(theta), K)
    if K <= _ENUM_K:
        best, best_perm = -1, None
        for perm in itertools.permutations(range(K)):
            agree = sum(C[j, perm[j]] for j in range(K))
            if agree > best:
                best, best_perm = agree, perm
        return np.array(best_perm)
    rows, cols = linear_sum_assignment(C, maximize=True)
    perm = np.empty(K, dtype=np.int64)
    perm[rows] = cols
    return perm


def relative_error(theta_hat: np.ndarray, theta: np.ndarray) -> float:
    """Permutation-minimized ||theta_hat * pi - theta||_0 / n, in [0, 2]."""
    perm = match_labels(theta_hat, theta)
    n = theta.shape[0]
    mismatches = int(np.sum(perm[labels_of(theta_hat)] != labels_of(theta)))
    return 2.0 * mismatches / n


def accuracy(theta_hat: np.ndarray, theta: np.ndarray) -> float:
    """Fraction of correctly labeled nodes after optimal matching."""
    perm = match_labels(theta_hat, theta)
    return float(np.mean(perm[labels_of(theta_hat)] == labels_of(theta)))


def split_accuracy(theta_hat: np.ndarray, theta: np.ndarray) -> float:
    """Plain agreement without label matching (supervised evaluation)."""
    _check_one_hot(theta_hat, "theta_hat")
    _check_one_hot(theta, "theta")
    return float(np.mean(labels_of(theta_hat) == labels_of(theta)))


def _average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned their average rank."""
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.shape[0], dtype=float)
    sx = x[order]
    i = 0
    while i < x.shape[0]:
        j = i
        while j + 1 < x.shape[0] and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def macro_auc(scores: np.ndarray, theta: np.ndarray) -> float:
    """One-vs-rest rank-based AUC per class, macro-averaged; ties count 1/2."""
    scores = np.asarray(scores, dtype=float)
    if not np.all(np.isfinite(scores)):
        raise ParameterError("scores must be finite")
    _check_one_hot(theta, "theta")
    true = labels_of(theta)
    aucs = []
    for k in range(theta.shape[1]):
        pos = true == k
        n_pos = int(pos.sum())
        n_neg = pos.shape[0] - n_pos
        if n_pos == 0:
            warnings.warn(f"class {k} absent from ground truth; skipped in AUC")
            continue
        if n_neg == 0:
            warnings.warn(f"class {k} covers all nodes; skipped in AUC")
            continue
        ranks = _average_ranks(scores[:, k])
        auc = (ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
        aucs.append(auc)
    if not aucs:
        raise ParameterError("no class usable for AUC")
    return float(np.mean(aucs))


def macro_f1(theta_hat: np.ndarray, theta: np.ndarray, match: bool = True) -> float:
    """Macro-averaged F1; labels optimally matched first unless match=False.

    A class with empty precision or recall denominator contributes F1 = 0.
    """
    _check_one_hot(theta_hat, "theta_hat")
    _check_one_hot(theta, "theta")
    K = theta.shape[1]
    pred = labels_of(theta_hat)
    if match:
        pred = match_labels(theta_hat, theta)[pred]
    C = confusion_matrix(pred, labels_of(theta), K)
    f1s = []
    for k in range(K):
        tp = C[k, k]
        pred_k = C[k, :].sum()
        true_k = C[:, k].sum()
        if tp == 0:
            f1s.append(0.0)
            continue
        prec = tp / pred_k
        rec = tp / true_k
        f1s.append(2.0 * prec * rec / (prec + rec))
    return float(np.mean(f1s))


def spectral_norm(M: np.ndarray, tol: float = 1e-9, max_iter: int = 20000) -> float:
    """Largest singular value via power iteration on M^T M.

    Residual-based stopping certifies the Ritz value of M^T M to relative
    accuracy tol, independent of the spectral gap.
    """
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise ParameterError("matrix entries must be finite")
    if M.size == 0:
        return 0.0
    G = M.T @ M
    scale = float(np.max(np.abs(G)))
    if scale == 0.0:
        return 0.0
    n = G.shape[0]
    rng = np.random.default_rng(0)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    theta = 0.0
    for _ in range(max_iter):
        w = G @ v
        theta = float(v @ w)
        resid = np.linalg.norm(w - theta * v)
        if resid <= tol * max(theta, scale * 1e-300):
            break
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            return 0.0
        v = w / norm_w
    return float(np.sqrt(max(theta, 0.0)))


def concentration(M_hat: np.ndarray, P: np.ndarray) -> float:
    """Spectral-norm distance of a (smoothed) adjacency from its expectation."""
    if M_hat.shape != P.shape:
        raise ParameterError("shapes do not match")
    return spectral_norm(M_hat - P)


def error_bound(
    delta: float,
    n_max2: float,
    n_min: float,
    K: int,
    n: int,
    alpha: float,
    tau: float,
    concentration_value: float,
) -> float:
    """Right-hand side of the relative-error bound (universal constant = 1).

    (1 + delta) * n_max2 * K / (n * alpha^2 * n_min^2 * tau^2) * ||A_hat-P||^2
    where n_max2 and n_min are the second-largest and smallest cluster sizes.
    """
    denom = n * alpha * alpha * n_min * n_min * tau * tau
    if denom == 0.0:
        raise ParameterError("zero denominator in error bound")
    return float(
        (1.0 + delta) * n_max2 * K / denom * concentration_value * concentration_value
    )

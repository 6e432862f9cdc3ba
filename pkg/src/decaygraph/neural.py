"""Toy-scale differentiable stack: GCN, RNNGCN and TRNNGCN.

All three share a two-layer graph convolution (ReLU then softmax) on a
degree-normalized adjacency. The static GCN consumes the cumulative
adjacency; RNNGCN learns a scalar decay rate and TRNNGCN a per-cluster-pair
decay matrix, both driven through the smoothing recursion so gradients flow
into the decay parameters across every time step. Decay parameters are
stored unconstrained and squashed through a sigmoid, so they stay in (0, 1)
no matter what the optimizer does.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from decaygraph import autodiff as ad
from decaygraph.autodiff import Var, constant
from decaygraph.dsbm import DynamicGraph, ParameterError, labels_of, one_hot

__all__ = [
    "TrainConfig",
    "NeuralModel",
    "TrainingError",
    "AdamState",
    "adam_step",
    "normalize_adjacency",
    "normalize_adjacency_var",
    "gcn_forward",
    "split_nodes",
    "train_gcn",
    "train_rnngcn",
    "train_trnngcn",
    "predict",
    "predict_per_step",
    "learned_decay",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_VERSION = 1


class TrainingError(RuntimeError):
    """Non-finite loss or intermediate during training; carries the iteration."""

    def __init__(self, message: str, iteration: int):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration


@dataclass
class TrainConfig:
    learning_rate: float = 0.0025
    iterations: int = 500
    dropout: float = 0.5
    split: tuple = (0.7, 0.2, 0.1)
    seed: int = 0
    refine: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self) -> None:
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise ParameterError("split fractions must sum to 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ParameterError("dropout must lie in [0, 1)")


@dataclass(eq=False)
class AdamState:
    m: dict
    v: dict
    step: int = 0


def adam_step(
    params: dict, grads: dict, state: AdamState, config: TrainConfig
) -> None:
    """Standard bias-corrected Adam update, in place."""
    state.step += 1
    t = state.step
    for name, p in params.items():
        g = grads[name]
        state.m[name] = config.beta1 * state.m[name] + (1.0 - config.beta1) * g
        state.v[name] = config.beta2 * state.v[name] + (1.0 - config.beta2) * g * g
        m_hat = state.m[name] / (1.0 - config.beta1**t)
        v_hat = state.v[name] / (1.0 - config.beta2**t)
        p -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)


@dataclass(eq=False)
class NeuralModel:
    """Trained parameters plus everything needed to resume or predict."""

    kind: str  # "gcn" | "rnngcn" | "trnngcn"
    w1: np.ndarray
    w2: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    raw_decay: np.ndarray | None
    config: TrainConfig
    theta_weighting: np.ndarray | None = None  # TRNNGCN smoothing weights
    adam: AdamState | None = None
    iterations_done: int = 0
    loss_history: list = field(default_factory=list)


def normalize_adjacency(a_hat: np.ndarray) -> np.ndarray:
    """Symmetric degree normalization D^-1/2 (A + I) D^-1/2."""
    a_tilde = a_hat + np.eye(a_hat.shape[0])
    s = 1.0 / np.sqrt(a_tilde.sum(axis=1))
    return s[:, None] * a_tilde * s[None, :]


def normalize_adjacency_var(a_hat: Var) -> Var:
    """Recorded version of :func:`normalize_adjacency`."""
    n = a_hat.shape[0]
    a_tilde = ad.add(a_hat, constant(np.eye(n)))
    d = ad.sum_axis(a_tilde, axis=1, keepdims=True)
    s = ad.power(d, -0.5)
    return ad.mul(ad.mul(s, a_tilde), ad.transpose(s))


def gcn_forward(
    a_norm: Var,
    h0: Var,
    w1: Var,
    w2: Var,
    b1: Var | None = None,
    b2: Var | None = None,
    dropout_rate: float = 0.0,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
) -> Var:
    """Two-layer GCN returning pre-softmax logits (softmax is the output layer).

    Per-layer bias vectors are optional; dropout sits between the layers and
    is active only in train mode.
    """
    h1 = ad.matmul(ad.matmul(a_norm, h0), w1)
    if b1 is not None:
        h1 = ad.add(h1, b1)
    h1 = ad.relu(h1)
    if mode == "train" and dropout_rate > 0.0:
        if rng is None:
            raise ParameterError("train mode with dropout needs an RNG")
        h1 = ad.dropout(h1, dropout_rate, rng)
    out = ad.matmul(ad.matmul(a_norm, h1), w2)
    if b2 is not None:
        out = ad.add(out, b2)
    return out


def split_nodes(n: int, config: TrainConfig) -> dict:
    """Deterministic train/val/test node index split."""
    rng = np.random.default_rng([config.seed, 2])
    perm = rng.permutation(n)
    n_train = int(round(config.split[0] * n))
    n_val = int(round(config.split[1] * n))
    return {
        "train": np.sort(perm[:n_train]),
        "val": np.sort(perm[n_train : n_train + n_val]),
        "test": np.sort(perm[n_train + n_val :]),
    }


def _smoothed_final_scalar(snapshots: list, lam: Var) -> Var:
    a_hat = constant(snapshots[0])
    for a_t in snapshots[1:]:
        diff = ad.sub(constant(a_t), a_hat)
        a_hat = ad.add(a_hat, ad.mul(lam, diff))
    return a_hat


def _smoothed_final_matrix(snapshots: list, lam_mat: Var, theta: np.ndarray) -> Var:
    # weights (Theta Lambda Theta^T), symmetrized; Theta is held constant
    w_raw = ad.matmul(ad.matmul(constant(theta), lam_mat), constant(theta.T))
    w = ad.mul(constant(0.5), ad.add(w_raw, ad.transpose(w_raw)))
    a_hat = constant(snapshots[0])
    for a_t in snapshots[1:]:
        diff = ad.sub(constant(a_t), a_hat)
        a_hat = ad.add(a_hat, ad.mul(w, diff))
    return a_hat


def _init_model(graph: DynamicGraph, kind: str, config: TrainConfig, K: int, d0: int):
    rng = np.random.default_rng([config.seed, 0])
    w1 = rng.standard_normal((d0, K)) * 0.1
    w2 = rng.standard_normal((K, K)) * 0.1
    b1 = np.zeros(K)
    b2 = np.zeros(K)
    if kind == "rnngcn":
        raw = np.zeros(())  # sigmoid(0) = 0.5
    elif kind == "trnngcn":
        raw = np.zeros((K, K))
    else:
        raw = None
    params = {"w1": w1, "w2": w2, "b1": b1, "b2": b2}
    if raw is not None:
        params["raw"] = raw
    state = AdamState(
        m={k: np.zeros_like(v) for k, v in params.items()},
        v={k: np.zeros_like(v) for k, v in params.items()},
    )
    return NeuralModel(
        kind=kind, w1=w1, w2=w2, b1=b1, b2=b2, raw_decay=raw,
        config=config, adam=state
    )


def _train(
    graph: DynamicGraph,
    train_labels: np.ndarray,
    train_mask: np.ndarray,
    config: TrainConfig,
    kind: str,
    K: int,
    model: NeuralModel | None = None,
    features: np.ndarray | None = None,
) -> tuple[NeuralModel, np.ndarray]:
    """Shared training loop for gcn / rnngcn / trnngcn.

    The smoothing recursion is rebuilt from scratch every iteration, as the
    training procedure prescribes, so decay gradients cover all time steps.
    """
    snapshots = [np.asarray(a, dtype=float) for a in graph.snapshots]
    n = graph.n
    h0 = np.eye(n) if features is None else np.asarray(features, dtype=float)
    if model is None:
        model = _init_model(graph, kind, config, K, d0=h0.shape[1])
    cumulative = graph.cumulative(clip=True) if kind == "gcn" else None
    for i in range(model.iterations_done + 1, config.iterations + 1):
        iter_rng = np.random.default_rng([config.seed, 1, i])
        w1v, w2v = Var(model.w1), Var(model.w2)
        b1v, b2v = Var(model.b1), Var(model.b2)
        params = {"w1": w1v, "w2": w2v, "b1": b1v, "b2": b2v}
        if kind == "gcn":
            a_hat = constant(cumulative)
        elif kind == "rnngcn":
            rawv = Var(model.raw_decay)
            params["raw"] = rawv
            a_hat = _smoothed_final_scalar(snapshots, ad.sigmoid(rawv))
        else:
            rawv = Var(model.raw_decay)
            params["raw"] = rawv
            theta_w = (
                model.theta_weighting
                if model.theta_weighting is not None
                else one_hot(np.zeros(n, dtype=np.int64), K)
            )
            a_hat = _smoothed_final_matrix(snapshots, ad.sigmoid(rawv), theta_w)
        a_norm = normalize_adjacency_var(a_hat)
        logits = gcn_forward(
            a_norm,
            constant(h0),
            w1v,
            w2v,
            b1v,
            b2v,
            dropout_rate=config.dropout,
            mode="train",
            rng=iter_rng,
        )
        loss = ad.cross_entropy(logits, train_labels, train_mask)
        if not np.isfinite(loss.value):
            raise TrainingError("non-finite training loss", i)
        loss.backward()
        # a parameter absent from the graph (e.g. decay when T=1) gets grad 0
        grads = {
            name: var.grad if var.grad is not None else np.zeros_like(var.value)
            for name, var in params.items()
        }
        arrays = {"w1": model.w1, "w2": model.w2, "b1": model.b1, "b2": model.b2}
        if "raw" in params:
            arrays["raw"] = model.raw_decay
        adam_step(arrays, grads, model.adam, config)
        model.loss_history.append(float(loss.value))
        model.iterations_done = i
        if kind == "trnngcn":
            model.theta_weighting = one_hot(np.argmax(logits.value, axis=1), K)
    theta_hat, _ = predict(model, graph, features=features)
    return model, theta_hat


def train_gcn(graph, train_labels, train_mask, config, K=None, model=None, features=None):
    """Static two-layer GCN on the cumulative adjacency."""
    K = graph.K if K is None else K
    return _train(graph, train_labels, train_mask, config, "gcn", K, model, features)


def train_rnngcn(graph, train_labels, train_mask, config, K=None, model=None, features=None):
    """GCN preceded by a learnable scalar-decay smoothing of the snapshots."""
    K = graph.K if K is None else K
    return _train(graph, train_labels, train_mask, config, "rnngcn", K, model, features)


def train_trnngcn(graph, train_labels, train_mask, config, K=None, model=None, features=None):
    """GCN with a learnable per-cluster-pair decay matrix.

    Smoothing weights in iteration i come from iteration i-1's own cluster
    prediction (all nodes share one cluster in the first iteration); the
    prediction is treated as a constant, so gradients reach only the decay
    matrix and GCN weights.
    """
    K = graph.K if K is None else K
    return _train(graph, train_labels, train_mask, config, "trnngcn", K, model, features)


def learned_decay(model: NeuralModel):
    """Squashed decay parameter: scalar for rnngcn, K x K matrix for trnngcn."""
    if model.raw_decay is None:
        return None
    return 1.0 / (1.0 + np.exp(-model.raw_decay))


def _smoothed_values(model: NeuralModel, graph: DynamicGraph) -> list:
    """Plain-numpy smoothing trajectory under the model's learned decay."""
    snapshots = [np.asarray(a, dtype=float) for a in graph.snapshots]
    if model.kind == "gcn":
        out, total = [], np.zeros_like(snapshots[0])
        for a_t in snapshots:
            total = total + a_t
            out.append(np.minimum(total, 1.0))
        return out
    decay = learned_decay(model)
    if model.kind == "rnngcn":
        weight = float(decay)
    else:
        theta_w = model.theta_weighting
        if theta_w is None:
            raise ParameterError("TRNNGCN model carries no weighting estimate")
        w = theta_w @ decay @ theta_w.T
        weight = 0.5 * (w + w.T)
    out = [snapshots[0]]
    for a_t in snapshots[1:]:
        out.append(out[-1] + weight * (a_t - out[-1]))
    return out


def _eval_scores(model: NeuralModel, a_hat: np.ndarray, features=None) -> np.ndarray:
    a_norm = normalize_adjacency(a_hat)
    h0 = (
        np.eye(a_hat.shape[0])
        if features is None
        else np.asarray(features, dtype=float)
    )
    h1 = np.maximum(a_norm @ h0 @ model.w1 + model.b1, 0.0)
    logits = a_norm @ h1 @ model.w2 + model.b2
    return ad.softmax_rows(logits)


def predict(model: NeuralModel, graph: DynamicGraph, features=None):
    """Final-step prediction: (one-hot memberships, softmax score matrix)."""
    scores = _eval_scores(model, _smoothed_values(model, graph)[-1], features)
    K = scores.shape[1]
    return one_hot(np.argmax(scores, axis=1), K), scores


def predict_per_step(model: NeuralModel, graph: DynamicGraph, features=None):
    """Eval-mode predictions at every time step of the smoothing trajectory."""
    out = []
    for a_hat in _smoothed_values(model, graph):
        scores = _eval_scores(model, a_hat, features)
        out.append((one_hot(np.argmax(scores, axis=1), scores.shape[1]), scores))
    return out


def save_checkpoint(model: NeuralModel, path) -> None:
    """Write a versioned JSON checkpoint (shapes, parameters, Adam state)."""
    payload = {
        "schema_version": CHECKPOINT_VERSION,
        "kind": model.kind,
        "w1": model.w1.tolist(),
        "w2": model.w2.tolist(),
        "b1": model.b1.tolist(),
        "b2": model.b2.tolist(),
        "raw_decay": None if model.raw_decay is None else model.raw_decay.tolist(),
        "theta_weighting": (
            None if model.theta_weighting is None else model.theta_weighting.tolist()
        ),
        "iterations_done": model.iterations_done,
        "loss_history": model.loss_history,
        "adam": {
            "step": model.adam.step,
            "m": {k: v.tolist() for k, v in model.adam.m.items()},
            "v": {k: v.tolist() for k, v in model.adam.v.items()},
        },
        "config": {
            "learning_rate": model.config.learning_rate,
            "iterations": model.config.iterations,
            "dropout": model.config.dropout,
            "split": list(model.config.split),
            "seed": model.config.seed,
            "refine": model.config.refine,
            "beta1": model.config.beta1,
            "beta2": model.config.beta2,
            "adam_eps": model.config.adam_eps,
        },
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))


def load_checkpoint(path) -> NeuralModel:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("schema_version") != CHECKPOINT_VERSION:
        raise ParameterError("unsupported checkpoint schema version")
    cfg = payload["config"]
    config = TrainConfig(
        learning_rate=cfg["learning_rate"],
        iterations=cfg["iterations"],
        dropout=cfg["dropout"],
        split=tuple(cfg["split"]),
        seed=cfg["seed"],
        refine=cfg.get("refine", 100),
        beta1=cfg["beta1"],
        beta2=cfg["beta2"],
        adam_eps=cfg["adam_eps"],
    )
    raw = payload["raw_decay"]
    raw_decay = None if raw is None else np.asarray(raw, dtype=float)
    theta_w = payload["theta_weighting"]
    adam = AdamState(
        m={k: np.asarray(v, dtype=float) for k, v in payload["adam"]["m"].items()},
        v={k: np.asarray(v, dtype=float) for k, v in payload["adam"]["v"].items()},
        step=payload["adam"]["step"],
    )
    return NeuralModel(
        kind=payload["kind"],
        w1=np.asarray(payload["w1"], dtype=float),
        w2=np.asarray(payload["w2"], dtype=float),
        b1=np.asarray(payload["b1"], dtype=float),
        b2=np.asarray(payload["b2"], dtype=float),
        raw_decay=raw_decay,
        config=config,
        theta_weighting=None if theta_w is None else np.asarray(theta_w, dtype=np.int64),
        adam=adam,
        iterations_done=payload["iterations_done"],
        loss_history=list(payload["loss_history"]),
    )

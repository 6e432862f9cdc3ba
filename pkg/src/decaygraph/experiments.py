"""Experiment pipelines shared by the CLI and the acceptance suite.

Each runner generates (or receives) a dynamic SBM instance, applies one of
the five methods (static-spectral, decayed-spectral, gcn-static, rnngcn,
trnngcn), evaluates every time step, and returns a JSON-serializable result
payload. Unsupervised methods report permutation-matched metrics over all
nodes; supervised methods report split metrics over the test nodes.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict, replace

import numpy as np

from decaygraph import neural
from decaygraph.dsbm import (
    DynamicGraph,
    ParameterError,
    SbmParams,
    connection_probability,
    build_connectivity,
    generate_sequence,
    labels_of,
)
from decaygraph.metrics import (
    accuracy,
    concentration,
    macro_auc,
    macro_f1,
    match_labels,
    relative_error,
    split_accuracy,
)
from decaygraph.neural import TrainConfig
from decaygraph.smoothing import (
    initial_smoothed,
    optimal_decay_matrix,
    smooth_matrix,
    smooth_scalar,
)
from decaygraph.spectral import decayed_spectral_cluster

__all__ = [
    "ExperimentConfig",
    "run_method",
    "grid_search",
    "sweep_lambda",
    "estimate_epsilon",
    "moving_average",
    "aggregate_results",
    "parallel_map",
]

METHODS = ("static-spectral", "decayed-spectral", "gcn-static", "rnngcn", "trnngcn")


@dataclass
class ExperimentConfig:
    """Resolved experiment description; serialized next to every run."""

    n: int = 200
    K: int = 2
    p: tuple = (0.5, 0.5)
    alpha: float = 0.02
    tau: float = 0.05
    epsilon: tuple = (0.05, 0.1)
    T: int = 50
    method: str = "decayed-spectral"
    decay: dict = field(
        default_factory=lambda: {"kind": "optimal", "mode": "oracle", "source": "oracle"}
    )
    train: TrainConfig = field(default_factory=TrainConfig)
    seeds: tuple = (1,)
    out: str = "results"
    static_clip: bool = True
    smoothing_window: int = 5
    protocol: str = "final"

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ParameterError(f"unknown method {self.method!r}")
        if self.protocol not in ("final", "online"):
            raise ParameterError(f"unknown protocol {self.protocol!r}")
        kind = self.decay.get("kind", "none")
        if kind not in ("none", "scalar", "matrix", "optimal"):
            raise ParameterError(f"unknown decay kind {kind!r}")
        if self.method == "static-spectral" and kind != "none":
            raise ParameterError("static-spectral takes decay kind 'none'")
        if self.method == "decayed-spectral" and kind == "none":
            raise ParameterError("decayed-spectral needs a decay specification")

    def sbm_params(self, seed: int) -> SbmParams:
        return SbmParams(
            n=self.n,
            K=self.K,
            p=np.asarray(self.p, dtype=float),
            alpha=self.alpha,
            tau=self.tau,
            epsilon=np.asarray(self.epsilon, dtype=float),
            T=self.T,
            seed=seed,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["p"] = list(self.p)
        d["epsilon"] = list(self.epsilon)
        d["seeds"] = list(self.seeds)
        d["train"]["split"] = list(self.train.split)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        train = d.pop("train", {})
        if isinstance(train, dict):
            train.setdefault("split", (0.7, 0.2, 0.1))
            train["split"] = tuple(train["split"])
            train = TrainConfig(**train)
        return cls(
            **{
                **d,
                "p": tuple(d.get("p", (0.5, 0.5))),
                "epsilon": tuple(d.get("epsilon", (0.05, 0.1))),
                "seeds": tuple(d.get("seeds", (1,))),
                "train": train,
            }
        )


def estimate_epsilon(memberships: list, nodes: np.ndarray) -> np.ndarray:
    """Empirical per-cluster change frequency over the given node subset."""
    K = memberships[0].shape[1]
    changes = np.zeros(K)
    exposure = np.zeros(K)
    for prev, cur in zip(memberships[:-1], memberships[1:]):
        lp = labels_of(prev)[nodes]
        lc = labels_of(cur)[nodes]
        for k in range(K):
            in_k = lp == k
            exposure[k] += in_k.sum()
            changes[k] += (in_k & (lc != k)).sum()
    with np.errstate(invalid="ignore", divide="ignore"):
        eps = np.where(exposure > 0, changes / np.maximum(exposure, 1), 0.0)
    return eps


def _resolve_decay(config: ExperimentConfig, graph: DynamicGraph):
    """Decay spec -> (decay object for the spectral pipeline, metadata dict)."""
    spec = config.decay
    kind = spec.get("kind", "none")
    if kind == "none":
        return None, {"kind": "none", "label": None}
    if kind == "scalar":
        return float(spec["value"]), {"kind": "scalar", "value": float(spec["value"]), "label": None}
    if kind == "matrix":
        mat = np.asarray(spec["value"], dtype=float)
        return mat, {"kind": "matrix", "value": mat.tolist(), "label": None}
    # optimal: closed-form matrix from true (ORACLE) or estimated epsilon
    source = spec.get("source", "oracle")
    if source == "oracle":
        eps = np.asarray(config.epsilon, dtype=float)
        label = "ORACLE"
    else:
        splits = neural.split_nodes(graph.n, config.train)
        eps = estimate_epsilon(graph.memberships, splits["train"])
        label = "ESTIMATED"
    mat = optimal_decay_matrix(config.n, config.alpha, eps)
    return mat, {"kind": "optimal", "value": mat.tolist(), "label": label}


def evaluate_step(theta_hat, scores, theta, nodes=None, mode="matched") -> dict:
    """Metric dict for one time step; node subset optional."""
    if nodes is not None:
        theta_hat = theta_hat[nodes]
        scores = scores[nodes]
        theta = theta[nodes]
    if mode == "matched":
        perm = match_labels(theta_hat, theta)
        aligned = np.empty_like(scores)
        aligned[:, perm] = scores
        acc = accuracy(theta_hat, theta)
        rel = relative_error(theta_hat, theta)
        f1 = macro_f1(theta_hat, theta, match=True)
    else:
        aligned = scores
        acc = split_accuracy(theta_hat, theta)
        rel = 2.0 * (1.0 - acc)
        f1 = macro_f1(theta_hat, theta, match=False)
    try:
        with np.errstate(all="ignore"), warnings.catch_warnings():
            warnings.simplefilter("ignore")
            auc = macro_auc(aligned, theta)
    except ParameterError:
        # a single-class node subset leaves AUC undefined; report chance
        auc = 0.5
    return {
        "relative_error": rel,
        "accuracy": acc,
        "macro_auc": auc,
        "macro_f1": f1,
    }


def _summarize(per_step: list) -> dict:
    keys = ("relative_error", "accuracy", "macro_auc", "macro_f1")
    return {k: float(np.mean([row[k] for row in per_step])) for k in keys}


def run_method(config: ExperimentConfig, seed: int, graph: DynamicGraph | None = None) -> dict:
    """Run one (method, seed) job end to end and return the result payload."""
    if graph is None:
        graph = generate_sequence(config.sbm_params(seed))
    if config.method in ("static-spectral", "decayed-spectral"):
        return _run_spectral(config, seed, graph)
    if config.protocol == "online":
        payload, _ = _run_neural_online(config, seed, graph)
    else:
        payload, _ = _run_neural(config, seed, graph)
    return payload


def run_method_with_model(
    config: ExperimentConfig,
    seed: int,
    graph: DynamicGraph | None = None,
    model=None,
):
    """Like :func:`run_method` for neural methods, also returning the model."""
    if graph is None:
        graph = generate_sequence(config.sbm_params(seed))
    if config.method in ("static-spectral", "decayed-spectral"):
        raise ParameterError("run_method_with_model only applies to neural methods")
    if config.protocol == "online":
        if model is not None:
            raise ParameterError("online-protocol runs cannot resume from a checkpoint")
        return _run_neural_online(config, seed, graph)
    return _run_neural(config, seed, graph, model=model)


def _run_spectral(config: ExperimentConfig, seed: int, graph: DynamicGraph) -> dict:
    decay, decay_meta = _resolve_decay(config, graph)
    steps = decayed_spectral_cluster(
        graph,
        decay,
        config.K,
        seed=seed,
        mode=config.decay.get("mode", "oracle"),
        static_clip=config.static_clip,
    )
    per_step = []
    for t, est in enumerate(steps, start=1):
        row = evaluate_step(est.theta, est.scores, graph.memberships[t - 1])
        row["t"] = t
        per_step.append(row)
    return {
        "method": config.method,
        "seed": seed,
        "decay": decay_meta,
        "config": config.to_dict(),
        "summary": {**_summarize(per_step), "accuracy_mode": "matched"},
        "per_step": per_step,
        "extras": {},
    }


def _train_config(config: ExperimentConfig, seed: int) -> TrainConfig:
    return replace(config.train, seed=seed)


_TRAINERS = {
    "gcn-static": neural.train_gcn,
    "rnngcn": neural.train_rnngcn,
    "trnngcn": neural.train_trnngcn,
}


def _neural_payload(config: ExperimentConfig, seed: int, per_step: list, model) -> dict:
    decay_value = neural.learned_decay(model)
    extras = {
        "final_loss": model.loss_history[-1] if model.loss_history else None,
        "protocol": config.protocol,
    }
    if decay_value is not None:
        extras["learned_decay"] = (
            float(decay_value) if np.ndim(decay_value) == 0 else np.asarray(decay_value).tolist()
        )
    return {
        "method": config.method,
        "seed": seed,
        "decay": {"kind": "learned", "label": None},
        "config": config.to_dict(),
        "summary": {**_summarize(per_step), "accuracy_mode": "split"},
        "per_step": per_step,
        "extras": extras,
    }


def _run_neural_online(config: ExperimentConfig, seed: int, graph: DynamicGraph):
    """Per-horizon evaluation: refit at every step with the labels known then.

    The model is trained in full on the first step, then warm-started with
    ``train.refine`` extra iterations at each later horizon; each step's
    metrics come from that horizon's own model on the held-out test nodes.
    """
    train_cfg = _train_config(config, seed)
    splits = neural.split_nodes(graph.n, train_cfg)
    model = None
    per_step = []
    for t in range(1, len(graph.snapshots) + 1):
        horizon = DynamicGraph(
            snapshots=graph.snapshots[:t],
            params=graph.params,
            memberships=graph.memberships[:t],
        )
        labels_t = labels_of(graph.memberships[t - 1])
        total = (
            train_cfg.iterations
            if model is None
            else model.iterations_done + train_cfg.refine
        )
        model, _ = _TRAINERS[config.method](
            horizon,
            labels_t,
            splits["train"],
            replace(train_cfg, iterations=total),
            K=config.K,
            model=model,
        )
        theta_hat, scores = neural.predict(model, horizon)
        row = evaluate_step(
            theta_hat, scores, graph.memberships[t - 1], nodes=splits["test"], mode="split"
        )
        row["t"] = t
        per_step.append(row)
    return _neural_payload(config, seed, per_step, model), model


def _run_neural(config: ExperimentConfig, seed: int, graph: DynamicGraph, model=None):
    train_cfg = _train_config(config, seed)
    splits = neural.split_nodes(graph.n, train_cfg)
    labels_T = labels_of(graph.memberships[-1])
    model, _ = _TRAINERS[config.method](
        graph, labels_T, splits["train"], train_cfg, K=config.K, model=model
    )
    per_step = []
    for t, (theta_hat, scores) in enumerate(neural.predict_per_step(model, graph), start=1):
        row = evaluate_step(
            theta_hat, scores, graph.memberships[t - 1], nodes=splits["test"], mode="split"
        )
        row["t"] = t
        per_step.append(row)
    return _neural_payload(config, seed, per_step, model), model


def parallel_map(fn, items: list, jobs: int = 1) -> list:
    """Order-preserving map, optionally across a process pool."""
    if jobs <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _grid_cell(args) -> dict:
    config_dict, seed, l11, l22 = args
    config = ExperimentConfig.from_dict(config_dict)
    lam = np.ones((config.K, config.K))
    lam[0, 0] = l11
    lam[1, 1] = l22
    cfg = ExperimentConfig.from_dict(
        {**config.to_dict(), "method": "decayed-spectral",
         "decay": {"kind": "matrix", "value": lam.tolist(), "mode": "oracle"}}
    )
    result = run_method(cfg, seed)
    return {
        "seed": seed,
        "l11": l11,
        "l22": l22,
        "accuracy": result["summary"]["accuracy"],
    }


def grid_search(config: ExperimentConfig, grid_values, jobs: int = 1) -> dict:
    """Accuracy of matrix-decay spectral clustering over a (L11, L22) grid.

    Cells run independently (optionally in parallel) and are merged by cell
    key, so serial and parallel execution produce identical output. Requires
    K = 2 for the 2-D grid.
    """
    if config.K != 2:
        raise ParameterError("2-D grid search requires K = 2")
    grid_values = [float(v) for v in grid_values]
    if not grid_values:
        raise ParameterError("empty grid")
    tasks = [
        (config.to_dict(), seed, l11, l22)
        for seed in config.seeds
        for l11 in grid_values
        for l22 in grid_values
    ]
    cells = parallel_map(_grid_cell, tasks, jobs=jobs)
    cells.sort(key=lambda c: (c["seed"], c["l11"], c["l22"]))
    # mean accuracy per cell plus the per-seed argmax cells
    mean_cells = []
    for l11 in grid_values:
        for l22 in grid_values:
            vals = [c["accuracy"] for c in cells if c["l11"] == l11 and c["l22"] == l22]
            mean_cells.append({"l11": l11, "l22": l22, "accuracy": float(np.mean(vals))})
    argmax_cell = max(mean_cells, key=lambda c: c["accuracy"])
    per_seed_argmax = []
    for seed in config.seeds:
        seed_cells = [c for c in cells if c["seed"] == seed]
        per_seed_argmax.append(max(seed_cells, key=lambda c: c["accuracy"]))
    return {
        "grid": grid_values,
        "cells": mean_cells,
        "per_seed_cells": cells,
        "argmax": argmax_cell,
        "per_seed_argmax": per_seed_argmax,
    }


def _sweep_point(args) -> dict:
    config_dict, seed, lam, n, alpha = args
    config = ExperimentConfig.from_dict(config_dict)
    params = SbmParams(
        n=n,
        K=config.K,
        p=np.asarray(config.p, dtype=float),
        alpha=alpha,
        tau=config.tau,
        epsilon=np.asarray(config.epsilon, dtype=float),
        T=config.T,
        seed=seed,
    )
    graph = generate_sequence(params)
    smoothed = initial_smoothed(graph.snapshots[0])
    for t in range(2, params.T + 1):
        smoothed = smooth_scalar(smoothed, graph.snapshots[t - 1], lam)
    B = build_connectivity(alpha, config.tau, config.K)
    p_final = connection_probability(graph.memberships[-1], B)
    np.fill_diagonal(p_final, 0.0)
    norm = concentration(smoothed.matrix, p_final)
    from decaygraph.spectral import spectral_cluster  # local to keep workers light

    theta_hat = spectral_cluster(smoothed.matrix, config.K, seed=seed)
    acc = accuracy(theta_hat, graph.memberships[-1])
    return {"seed": seed, "lambda": lam, "n": n, "alpha": alpha,
            "accuracy": acc, "spectral_norm": float(norm)}


def sweep_lambda(
    config: ExperimentConfig,
    lambdas,
    n_values=None,
    alpha_values=None,
    jobs: int = 1,
) -> dict:
    """Final-step accuracy and concentration ||A_hat_T - P_T|| per decay rate.

    One curve per n (or per alpha at fixed n); each point averages the given
    seeds. Used to locate the norm-minimizing decay rate.
    """
    lambdas = [float(x) for x in lambdas]
    if n_values is None and alpha_values is None:
        n_values = [config.n]
    variants = (
        [(int(n), config.alpha) for n in n_values]
        if n_values is not None
        else [(config.n, float(a)) for a in alpha_values]
    )
    tasks = [
        (config.to_dict(), seed, lam, n, alpha)
        for seed in config.seeds
        for (n, alpha) in variants
        for lam in lambdas
    ]
    points = parallel_map(_sweep_point, tasks, jobs=jobs)
    curves = []
    for n, alpha in variants:
        rows = []
        for lam in lambdas:
            sub = [
                p for p in points
                if p["n"] == n and p["alpha"] == alpha and p["lambda"] == lam
            ]
            rows.append(
                {
                    "lambda": lam,
                    "accuracy": float(np.mean([p["accuracy"] for p in sub])),
                    "spectral_norm": float(np.mean([p["spectral_norm"] for p in sub])),
                }
            )
        curves.append({"n": n, "alpha": alpha, "points": rows})
    return {"lambdas": lambdas, "curves": curves, "raw_points": points}


def moving_average(values, window: int = 5):
    """Centered moving average with shrinking windows at the boundaries."""
    values = np.asarray(values, dtype=float)
    half = window // 2
    out = np.empty_like(values)
    for i in range(values.shape[0]):
        lo = max(0, i - half)
        hi = min(values.shape[0], i + half + 1)
        out[i] = values[lo:hi].mean()
    return out


def aggregate_results(payloads: list) -> dict:
    """Merge seed runs: mean and standard error per method per metric."""
    keys = ("relative_error", "accuracy", "macro_auc", "macro_f1")
    by_method: dict[str, list] = {}
    for p in payloads:
        by_method.setdefault(p["method"], []).append(p)
    table = []
    curves = {}
    for method in sorted(by_method):
        runs = by_method[method]
        row = {"method": method, "seeds": sorted(r["seed"] for r in runs)}
        for k in keys:
            vals = np.array([r["summary"][k] for r in runs], dtype=float)
            row[k] = float(vals.mean())
            row[k + "_se"] = float(
                vals.std(ddof=1) / np.sqrt(len(vals)) if len(vals) > 1 else 0.0
            )
        table.append(row)
        steps = sorted({s["t"] for r in runs for s in r["per_step"]})
        curve = []
        for t in steps:
            entry = {"t": t}
            for k in keys:
                vals = [s[k] for r in runs for s in r["per_step"] if s["t"] == t]
                entry[k] = float(np.mean(vals))
            curve.append(entry)
        curves[method] = curve
    return {"table": table, "curves": curves}

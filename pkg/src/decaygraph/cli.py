"""Experiment runner CLI.

Subcommands: generate | cluster | grid-search | sweep-lambda | train | report.
Flags mirror the experiment config fields; ``--config FILE`` supplies a JSON
config that explicit flags override. Every run writes its resolved config
next to the results; timestamps live only in a sidecar ``run.log`` so result
files are byte-reproducible.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys

import numpy as np

from decaygraph import experiments, graph_io, neural, plots
from decaygraph.autodiff import TapeError
from decaygraph.dsbm import ParameterError, generate_sequence
from decaygraph.experiments import ExperimentConfig
from decaygraph.graph_io import FormatError
from decaygraph.neural import TrainingError


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _parse_decay(text: str) -> dict:
    if text == "none":
        return {"kind": "none"}
    if text == "optimal":
        return {"kind": "optimal", "mode": "oracle", "source": "oracle"}
    if text == "optimal:estimated":
        return {"kind": "optimal", "mode": "oracle", "source": "estimated"}
    if text.startswith("matrix:"):
        with open(text.split(":", 1)[1]) as fh:
            return {"kind": "matrix", "value": json.load(fh), "mode": "oracle"}
    value = text.split(":", 1)[1] if text.startswith("scalar:") else text
    try:
        return {"kind": "scalar", "value": float(value)}
    except ValueError:
        raise ParameterError(f"cannot parse decay spec {text!r}")


def _floats(text: str) -> list:
    return [float(x) for x in text.split(",") if x]


def _build_config(args) -> ExperimentConfig:
    base = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            base = json.load(fh)
    overrides = {}
    for key in ("n", "K", "alpha", "tau", "T", "method", "out"):
        value = getattr(args, key.replace("-", "_"), None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "epsilon", None) is not None:
        overrides["epsilon"] = _floats(args.epsilon)
    if getattr(args, "p", None) is not None:
        overrides["p"] = _floats(args.p)
    if getattr(args, "seeds", None) is not None:
        overrides["seeds"] = [int(x) for x in args.seeds.split(",") if x]
    if getattr(args, "decay", None) is not None:
        overrides["decay"] = _parse_decay(args.decay)
    if getattr(args, "online", False):
        overrides["protocol"] = "online"
    train = dict(base.get("train", {}))
    for src, dst in (
        ("iterations", "iterations"),
        ("learning_rate", "learning_rate"),
        ("dropout", "dropout"),
        ("refine", "refine"),
    ):
        value = getattr(args, src, None)
        if value is not None:
            train[dst] = value
    merged = {**base, **overrides}
    if train:
        merged["train"] = train
    # methods without an explicit decay get a consistent default
    method = merged.get("method", "decayed-spectral")
    if "decay" not in merged:
        merged["decay"] = (
            {"kind": "none"}
            if method in ("static-spectral", "gcn-static", "rnngcn", "trnngcn")
            else {"kind": "optimal", "mode": "oracle", "source": "oracle"}
        )
    if method == "static-spectral":
        merged["decay"] = {"kind": "none"}
    return ExperimentConfig.from_dict(merged)


def _prepare_out(config: ExperimentConfig) -> str:
    os.makedirs(config.out, exist_ok=True)
    with open(os.path.join(config.out, "config.json"), "w") as fh:
        json.dump(config.to_dict(), fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
    with open(os.path.join(config.out, "run.log"), "a") as fh:
        fh.write(f"{datetime.datetime.now().isoformat()} run\n")
    return config.out


def _smooth_payload(payload: dict, window: int) -> dict:
    keys = ("relative_error", "accuracy", "macro_auc", "macro_f1")
    per_step = payload.get("per_step") or []
    smoothed = []
    for k in keys:
        vals = experiments.moving_average([row[k] for row in per_step], window)
        for i, v in enumerate(vals):
            if len(smoothed) <= i:
                smoothed.append({"t": per_step[i]["t"]})
            smoothed[i][k] = float(v)
    payload["per_step_smoothed"] = smoothed
    return payload


def cmd_generate(args) -> int:
    config = _build_config(args)
    out = _prepare_out(config)
    for seed in config.seeds:
        params = config.sbm_params(seed)
        params.validate_strict()
        graph = generate_sequence(params)
        seed_dir = os.path.join(out, f"seed{seed}")
        os.makedirs(seed_dir, exist_ok=True)
        graph_io.save_temporal_graph(graph, os.path.join(seed_dir, "graph.txt"))
        graph_io.save_labels(graph.memberships, os.path.join(seed_dir, "labels.txt"))
    return 0


def cmd_cluster(args) -> int:
    config = _build_config(args)
    out = _prepare_out(config)
    for seed in config.seeds:
        payload = experiments.run_method(config, seed)
        payload = _smooth_payload(payload, config.smoothing_window)
        seed_dir = os.path.join(out, f"seed{seed}")
        os.makedirs(seed_dir, exist_ok=True)
        graph_io.save_results(payload, os.path.join(seed_dir, "result"))
    return 0


def cmd_grid_search(args) -> int:
    config = _build_config(args)
    out = _prepare_out(config)
    grid = _floats(args.grid)
    result = experiments.grid_search(config, grid, jobs=args.jobs)
    with open(os.path.join(out, "grid.json"), "w") as fh:
        json.dump(
            {"schema_version": graph_io.RESULTS_SCHEMA_VERSION, **result},
            fh, sort_keys=True, separators=(",", ":"),
        )
        fh.write("\n")
    lines = ["l11,l22,accuracy"]
    for c in result["cells"]:
        lines.append(f"{c['l11']!r},{c['l22']!r},{c['accuracy']!r}")
    with open(os.path.join(out, "grid.csv"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    plots.heatmap(
        grid, result["cells"], os.path.join(out, "grid.svg"),
        title="accuracy over decay grid", xlabel="L11", ylabel="L22",
    )
    return 0


def cmd_sweep_lambda(args) -> int:
    config = _build_config(args)
    out = _prepare_out(config)
    lambdas = _floats(args.lambdas)
    n_values = [int(x) for x in args.n_values.split(",")] if args.n_values else None
    alpha_values = _floats(args.alpha_values) if args.alpha_values else None
    result = experiments.sweep_lambda(
        config, lambdas, n_values=n_values, alpha_values=alpha_values, jobs=args.jobs
    )
    with open(os.path.join(out, "sweep.json"), "w") as fh:
        json.dump(
            {"schema_version": graph_io.RESULTS_SCHEMA_VERSION, **result},
            fh, sort_keys=True, separators=(",", ":"),
        )
        fh.write("\n")
    lines = ["n,alpha,lambda,accuracy,spectral_norm"]
    for curve in result["curves"]:
        for p in curve["points"]:
            lines.append(
                f"{curve['n']},{curve['alpha']!r},{p['lambda']!r},"
                f"{p['accuracy']!r},{p['spectral_norm']!r}"
            )
    with open(os.path.join(out, "sweep.csv"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    for field, fname in (("accuracy", "sweep_accuracy.svg"), ("spectral_norm", "sweep_norm.svg")):
        series = {
            f"n={c['n']},a={c['alpha']:g}": [(p["lambda"], p[field]) for p in c["points"]]
            for c in result["curves"]
        }
        plots.line_plot(
            series, os.path.join(out, fname),
            title=f"{field} vs decay rate", xlabel="lambda", ylabel=field,
        )
    return 0


def cmd_train(args) -> int:
    config = _build_config(args)
    if config.method not in ("gcn-static", "rnngcn", "trnngcn"):
        raise ParameterError("train requires method gcn-static | rnngcn | trnngcn")
    out = _prepare_out(config)

    def one_seed(seed: int) -> dict:
        seed_dir = os.path.join(out, f"seed{seed}")
        os.makedirs(seed_dir, exist_ok=True)
        resume_path = os.path.join(seed_dir, "checkpoint.json")
        model = None
        if args.resume and os.path.exists(resume_path):
            model = neural.load_checkpoint(resume_path)
        payload, trained = experiments.run_method_with_model(config, seed, model=model)
        neural.save_checkpoint(trained, resume_path)
        payload = _smooth_payload(payload, config.smoothing_window)
        graph_io.save_results(payload, os.path.join(seed_dir, "result"))
        return payload

    for seed in config.seeds:
        one_seed(seed)
    return 0


def cmd_report(args) -> int:
    payloads = []
    for d in args.dirs:
        for root, _, files in os.walk(d):
            for name in files:
                if name == "result.json":
                    payloads.append(graph_io.load_results(os.path.join(root, name)))
    if not payloads:
        raise FormatError("no result.json files found under the given directories")
    agg = experiments.aggregate_results(payloads)
    out = args.out or "report"
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "report.json"), "w") as fh:
        json.dump(
            {"schema_version": graph_io.RESULTS_SCHEMA_VERSION, **agg},
            fh, sort_keys=True, separators=(",", ":"),
        )
        fh.write("\n")
    keys = ("relative_error", "accuracy", "macro_auc", "macro_f1")
    lines = ["method,n_seeds," + ",".join(f"{k},{k}_se" for k in keys)]
    for row in agg["table"]:
        cells = [row["method"], str(len(row["seeds"]))]
        for k in keys:
            cells += [repr(row[k]), repr(row[k + "_se"])]
        lines.append(",".join(cells))
    with open(os.path.join(out, "report.csv"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    window = args.window
    series = {
        method: [
            (row["t"], v)
            for row, v in zip(
                curve,
                experiments.moving_average([r["accuracy"] for r in curve], window),
            )
        ]
        for method, curve in agg["curves"].items()
    }
    plots.line_plot(
        series, os.path.join(out, "accuracy_over_time.svg"),
        title="accuracy over time", xlabel="t", ylabel="accuracy",
    )
    plots.bar_chart(
        agg["table"], list(keys), os.path.join(out, "method_comparison.svg"),
        title="method comparison",
    )
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--n", type=int)
    p.add_argument("--K", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--epsilon", help="comma-separated change probabilities")
    p.add_argument("--p", help="comma-separated initial cluster distribution")
    p.add_argument("--T", type=int)
    p.add_argument("--method", choices=experiments.METHODS)
    p.add_argument("--decay", help="none | scalar:L | optimal | optimal:estimated | matrix:FILE")
    p.add_argument("--seeds", help="comma-separated seed list")
    p.add_argument("--seed", dest="seeds", help=argparse.SUPPRESS)
    p.add_argument("--out", help="output directory")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--iterations", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--dropout", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="decaygraph", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("generate", cmd_generate),
        ("cluster", cmd_cluster),
        ("train", cmd_train),
    ):
        p = sub.add_parser(name)
        _add_common(p)
        p.set_defaults(fn=fn)
        if name == "train":
            p.add_argument("--resume", action="store_true")
            p.add_argument(
                "--online", action="store_true",
                help="refit at every horizon instead of training once on the full graph",
            )
            p.add_argument("--refine", type=int)
    p = sub.add_parser("grid-search")
    _add_common(p)
    p.add_argument("--grid", required=True, help="comma-separated decay values")
    p.set_defaults(fn=cmd_grid_search)
    p = sub.add_parser("sweep-lambda")
    _add_common(p)
    p.add_argument("--lambdas", required=True)
    p.add_argument("--n-values", dest="n_values")
    p.add_argument("--alpha-values", dest="alpha_values")
    p.set_defaults(fn=cmd_sweep_lambda)
    p = sub.add_parser("report")
    p.add_argument("dirs", nargs="+")
    p.add_argument("--out")
    p.add_argument("--window", type=int, default=5)
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    try:
        return args.fn(args)
    except (FormatError, ParameterError, FileNotFoundError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except (TrainingError, TapeError, FloatingPointError, np.linalg.LinAlgError) as exc:
        sys.stderr.write(f"numeric failure: {exc}\n")
        return 3


if __name__ == "__main__":
    sys.exit(main())

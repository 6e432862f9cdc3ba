"""Bit-exact text formats for temporal graphs, labels, features and results.

All formats are line-oriented, whitespace-separated, with a one-line header
``<magic> <version> ...``:

* graph:    ``dyngraph 1 <n> <T>`` then one ``t u v`` line per edge, 1-based
  step t, node ids 0-based with u < v, sorted by (t, u, v); duplicate edges
  within a step collapse on load.
* labels:   ``dynlabels 1 <n> <T> <K>`` then ``t i c`` lines (T = 0 marks a
  static labeling with ``i c`` lines).
* features: ``dynfeat 1 <n> <D>`` then n rows of D floats.
* results:  canonical JSON (nested) plus a flat per-step CSV, both carrying
  a schema_version field.

Serialization is canonical: saving the same structure twice produces
identical bytes, and floats use shortest round-trip formatting.
"""

from __future__ import annotations

import json
import math
import os

import numpy as np

from decaygraph.dsbm import DynamicGraph, one_hot

__all__ = [
    "FormatError",
    "RESULTS_SCHEMA_VERSION",
    "save_temporal_graph",
    "load_temporal_graph",
    "save_labels",
    "load_labels",
    "save_features",
    "load_features",
    "save_results",
    "load_results",
]

RESULTS_SCHEMA_VERSION = 1
_CSV_FIELDS = ["relative_error", "accuracy", "macro_auc", "macro_f1"]


class FormatError(ValueError):
    """Malformed file content; message carries path and line number."""


def _parse_header(line: str, magic: str, path, nfields: int) -> list[int]:
    parts = line.split()
    if len(parts) != nfields + 2 or parts[0] != magic or parts[1] != "1":
        raise FormatError(f"{path}:1: expected header '{magic} 1 ...'")
    try:
        return [int(x) for x in parts[2:]]
    except ValueError as exc:
        raise FormatError(f"{path}:1: non-integer header field") from exc


def save_temporal_graph(graph: DynamicGraph, path) -> None:
    """Write the snapshot sequence as a canonical temporal edge list."""
    lines = [f"dyngraph 1 {graph.n} {graph.T}"]
    for t, a in enumerate(graph.snapshots, start=1):
        us, vs = np.nonzero(np.triu(a, k=1))
        for u, v in zip(us.tolist(), vs.tolist()):
            lines.append(f"{t} {u} {v}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_temporal_graph(path, labels_path=None) -> DynamicGraph:
    """Read a temporal edge list (and optional labels) back into a graph."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError(f"{path}:1: empty file")
    n, T = _parse_header(lines[0], "dyngraph", path, 2)
    snapshots = [np.zeros((n, n), dtype=np.int64) for _ in range(T)]
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 3:
            raise FormatError(f"{path}:{lineno}: expected 't u v'")
        try:
            t, u, v = (int(x) for x in parts)
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: non-integer field") from exc
        if not 1 <= t <= T:
            raise FormatError(f"{path}:{lineno}: step {t} outside [1, {T}]")
        if u == v or not (0 <= u < n and 0 <= v < n):
            raise FormatError(f"{path}:{lineno}: bad node pair ({u}, {v})")
        snapshots[t - 1][u, v] = 1
        snapshots[t - 1][v, u] = 1
    memberships = [] if labels_path is None else load_labels(labels_path)
    return DynamicGraph(snapshots=snapshots, memberships=memberships)


def save_labels(memberships: list, path) -> None:
    """Write per-step one-hot memberships (or a single static matrix)."""
    if isinstance(memberships, np.ndarray):
        memberships = [memberships]
        static = True
    else:
        static = len(memberships) == 1
    n, K = memberships[0].shape
    T = 0 if static else len(memberships)
    lines = [f"dynlabels 1 {n} {T} {K}"]
    if static:
        for i, c in enumerate(np.argmax(memberships[0], axis=1).tolist()):
            lines.append(f"{i} {c}")
    else:
        for t, theta in enumerate(memberships, start=1):
            for i, c in enumerate(np.argmax(theta, axis=1).tolist()):
                lines.append(f"{t} {i} {c}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_labels(path) -> list:
    """Read a label file into a list of one-hot membership matrices."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError(f"{path}:1: empty file")
    n, T, K = _parse_header(lines[0], "dynlabels", path, 3)
    static = T == 0
    steps = 1 if static else T
    labels = np.full((steps, n), -1, dtype=np.int64)
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != (2 if static else 3):
            raise FormatError(f"{path}:{lineno}: wrong field count")
        try:
            if static:
                t, i, c = 1, int(parts[0]), int(parts[1])
            else:
                t, i, c = (int(x) for x in parts)
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: non-integer field") from exc
        if not 1 <= t <= steps or not 0 <= i < n or not 0 <= c < K:
            raise FormatError(f"{path}:{lineno}: value out of range")
        labels[t - 1, i] = c
    if np.any(labels < 0):
        raise FormatError(f"{path}: some nodes are unlabeled")
    return [one_hot(labels[t], K) for t in range(steps)]


def save_features(features: np.ndarray, path) -> None:
    features = np.asarray(features, dtype=float)
    if not np.all(np.isfinite(features)):
        raise FormatError("features must be finite")
    n, d = features.shape
    lines = [f"dynfeat 1 {n} {d}"]
    for row in features:
        lines.append(" ".join(repr(float(x)) for x in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_features(path) -> np.ndarray:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError(f"{path}:1: empty file")
    n, d = _parse_header(lines[0], "dynfeat", path, 2)
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != d:
            raise FormatError(f"{path}:{lineno}: expected {d} values")
        try:
            rows.append([float(x) for x in parts])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: non-numeric value") from exc
    out = np.asarray(rows, dtype=float)
    if out.shape != (n, d) or not np.all(np.isfinite(out)):
        raise FormatError(f"{path}: feature matrix malformed")
    return out


def _check_finite(obj, context: str) -> None:
    if isinstance(obj, dict):
        for k, v in obj.items():
            _check_finite(v, f"{context}.{k}")
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            _check_finite(v, f"{context}[{i}]")
    elif isinstance(obj, float) and not math.isfinite(obj):
        raise FormatError(f"non-finite value at {context}")


def save_results(payload: dict, base_path) -> None:
    """Write one result payload as ``<base>.json`` and ``<base>.csv``.

    The payload must be JSON-serializable, carry finite metric values, and
    is stamped with the schema version. The CSV holds one row per per-step
    record (or a single summary row when there is no per-step data).
    """
    payload = dict(payload)
    payload["schema_version"] = RESULTS_SCHEMA_VERSION
    _check_finite(payload, "result")
    base = os.fspath(base_path)
    with open(base + ".json", "w") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
    method = payload.get("method", "")
    seed = payload.get("seed", "")
    rows = payload.get("per_step") or []
    lines = ["schema_version,method,seed,t," + ",".join(_CSV_FIELDS)]
    if rows:
        for row in rows:
            cells = [str(RESULTS_SCHEMA_VERSION), str(method), str(seed), str(row["t"])]
            cells += [repr(float(row[f])) for f in _CSV_FIELDS]
            lines.append(",".join(cells))
    else:
        summary = payload.get("summary", {})
        cells = [str(RESULTS_SCHEMA_VERSION), str(method), str(seed), ""]
        cells += [repr(float(summary.get(f, 0.0))) for f in _CSV_FIELDS]
        lines.append(",".join(cells))
    with open(base + ".csv", "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_results(json_path) -> dict:
    with open(json_path) as fh:
        payload = json.load(fh)
    if payload.get("schema_version") != RESULTS_SCHEMA_VERSION:
        raise FormatError(
            f"{json_path}: unsupported schema version {payload.get('schema_version')!r}"
        )
    return payload

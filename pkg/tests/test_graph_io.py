import json

import numpy as np
import pytest

from decaygraph.dsbm import DynamicGraph, SbmParams, generate_sequence, one_hot
from decaygraph.graph_io import (
    FormatError,
    load_features,
    load_labels,
    load_results,
    load_temporal_graph,
    save_features,
    save_labels,
    save_results,
    save_temporal_graph,
)


def small_graph(seed=0, n=20, T=4):
    params = SbmParams(n=n, K=2, p=[0.5, 0.5], alpha=0.3, tau=0.1,
                       epsilon=[0.1, 0.2], T=T, seed=seed)
    return generate_sequence(params)


class TestTemporalGraph:
    def test_round_trip(self, tmp_path):
        g = small_graph()
        path = tmp_path / "graph.txt"
        save_temporal_graph(g, path)
        back = load_temporal_graph(path)
        assert len(back.snapshots) == len(g.snapshots)
        for a, b in zip(g.snapshots, back.snapshots):
            assert np.array_equal(np.asarray(a) != 0, b != 0)

    def test_canonical_bytes(self, tmp_path):
        g = small_graph(seed=3)
        p1, p2 = tmp_path / "a.txt", tmp_path / "b.txt"
        save_temporal_graph(g, p1)
        save_temporal_graph(g, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_duplicate_edges_collapse(self, tmp_path):
        path = tmp_path / "dup.txt"
        path.write_text("dyngraph 1 3 1\n1 0 1\n1 0 1\n1 1 0\n")
        g = load_temporal_graph(path)
        assert g.snapshots[0][0, 1] == 1
        assert g.snapshots[0].sum() == 2  # symmetric single edge

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("dyngraf 1 3 1\n")
        with pytest.raises(FormatError):
            load_temporal_graph(path)

    def test_bad_version(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("dyngraph 2 3 1\n")
        with pytest.raises(FormatError):
            load_temporal_graph(path)

    def test_out_of_range_step(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("dyngraph 1 3 1\n2 0 1\n")
        with pytest.raises(FormatError, match="2"):
            load_temporal_graph(path)

    def test_self_loop_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("dyngraph 1 3 1\n1 2 2\n")
        with pytest.raises(FormatError):
            load_temporal_graph(path)

    def test_non_integer_field(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("dyngraph 1 3 1\n1 0 x\n")
        with pytest.raises(FormatError):
            load_temporal_graph(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.txt"
        path.write_text("")
        with pytest.raises(FormatError):
            load_temporal_graph(path)

    def test_error_reports_line_number(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("dyngraph 1 3 2\n1 0 1\n1 0\n")
        with pytest.raises(FormatError, match=":3:"):
            load_temporal_graph(path)


class TestLabels:
    def test_dynamic_round_trip(self, tmp_path):
        g = small_graph(seed=1)
        path = tmp_path / "labels.txt"
        save_labels(g.memberships, path)
        back = load_labels(path)
        assert len(back) == len(g.memberships)
        for a, b in zip(g.memberships, back):
            assert np.array_equal(a, b)

    def test_static_round_trip(self, tmp_path):
        theta = one_hot(np.array([0, 1, 1, 0, 2]), 3)
        path = tmp_path / "static.txt"
        save_labels(theta, path)
        back = load_labels(path)
        assert len(back) == 1
        assert np.array_equal(back[0], theta)
        assert path.read_text().splitlines()[0] == "dynlabels 1 5 0 3"

    def test_unlabeled_node_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("dynlabels 1 3 0 2\n0 1\n2 0\n")
        with pytest.raises(FormatError, match="unlabeled"):
            load_labels(path)

    def test_class_out_of_range(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("dynlabels 1 2 0 2\n0 0\n1 2\n")
        with pytest.raises(FormatError):
            load_labels(path)

    def test_graph_with_labels(self, tmp_path):
        g = small_graph(seed=2)
        gp, lp = tmp_path / "g.txt", tmp_path / "l.txt"
        save_temporal_graph(g, gp)
        save_labels(g.memberships, lp)
        back = load_temporal_graph(gp, labels_path=lp)
        assert len(back.memberships) == len(g.memberships)
        assert np.array_equal(back.memberships[-1], g.memberships[-1])


class TestFeatures:
    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        feats = rng.standard_normal((7, 3))
        path = tmp_path / "f.txt"
        save_features(feats, path)
        back = load_features(path)
        # repr round-trips doubles exactly
        assert np.array_equal(back, feats)

    def test_non_finite_rejected(self):
        with pytest.raises(FormatError):
            save_features(np.array([[np.nan]]), "/tmp/unused.txt")

    def test_wrong_width(self, tmp_path):
        path = tmp_path / "f.txt"
        path.write_text("dynfeat 1 2 2\n1.0 2.0\n3.0\n")
        with pytest.raises(FormatError):
            load_features(path)


class TestResults:
    def payload(self):
        return {
            "method": "decayed-spectral",
            "seed": 7,
            "summary": {"relative_error": 0.4, "accuracy": 0.8,
                        "macro_auc": 0.9, "macro_f1": 0.79},
            "per_step": [
                {"t": 1, "relative_error": 0.5, "accuracy": 0.75,
                 "macro_auc": 0.85, "macro_f1": 0.7},
                {"t": 2, "relative_error": 0.3, "accuracy": 0.85,
                 "macro_auc": 0.95, "macro_f1": 0.88},
            ],
        }

    def test_json_round_trip(self, tmp_path):
        base = tmp_path / "res"
        save_results(self.payload(), base)
        back = load_results(str(base) + ".json")
        assert back["summary"]["accuracy"] == 0.8
        assert back["schema_version"] == 1

    def test_canonical_bytes(self, tmp_path):
        b1, b2 = tmp_path / "r1", tmp_path / "r2"
        save_results(self.payload(), b1)
        save_results(self.payload(), b2)
        assert (tmp_path / "r1.json").read_bytes() == (tmp_path / "r2.json").read_bytes()
        assert (tmp_path / "r1.csv").read_bytes() == (tmp_path / "r2.csv").read_bytes()

    def test_csv_shape(self, tmp_path):
        base = tmp_path / "res"
        save_results(self.payload(), base)
        lines = (tmp_path / "res.csv").read_text().splitlines()
        assert lines[0].startswith("schema_version,method,seed,t,")
        assert len(lines) == 3
        assert lines[1].split(",")[1] == "decayed-spectral"

    def test_summary_only_csv(self, tmp_path):
        p = self.payload()
        del p["per_step"]
        base = tmp_path / "res"
        save_results(p, base)
        lines = (tmp_path / "res.csv").read_text().splitlines()
        assert len(lines) == 2

    def test_non_finite_rejected(self, tmp_path):
        p = self.payload()
        p["summary"]["accuracy"] = float("nan")
        with pytest.raises(FormatError):
            save_results(p, tmp_path / "res")

    def test_unknown_schema_rejected(self, tmp_path):
        path = tmp_path / "r.json"
        path.write_text(json.dumps({"schema_version": 99}))
        with pytest.raises(FormatError):
            load_results(path)

"""Ingestion validation and end-to-end CLI behaviour.

CLI tests call main() in-process and read stdout through capsys, so the
suite exercises argument parsing, exit codes, and report layout without
subprocess overhead.
"""

import csv
import io
import json

import numpy as np
import pytest

from kscore import (
    DiscreteMixture,
    JointDiscreteMixture,
    KernelSpec,
    SchemaError,
    distributional_variance,
    ensemble_gain,
    ensemble_variance_split,
    group_records,
    kernel_entropy,
    load_mixture,
    load_records,
    paired_sample_block,
    sample_block,
)
from kscore.cli import main


def write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))
    return str(path)


@pytest.fixture
def vectors_file(tmp_path):
    rows = [
        {"group_id": "g1", "payload": [0.0]},
        {"group_id": "g1", "payload": [1.0]},
        {"group_id": "g1", "payload": [0.0], "role": "target"},
        {"group_id": "g2", "payload": [2.0]},
        {"group_id": "g2", "payload": [3.0]},
        {"group_id": "g2", "payload": [2.5], "role": "target"},
        {"group_id": "g3", "payload": [0.5]},
        {"group_id": "g3", "payload": [0.5], "role": "target"},
    ]
    return write_jsonl(tmp_path / "vectors.jsonl", rows)


@pytest.fixture
def clustered_file(tmp_path):
    rows = [
        {"group_id": "g", "cluster_id": "a", "payload": [0.0]},
        {"group_id": "g", "cluster_id": "a", "payload": [1.0]},
        {"group_id": "g", "cluster_id": "b", "payload": [4.0]},
        {"group_id": "g", "cluster_id": "b", "payload": [5.0]},
    ]
    return write_jsonl(tmp_path / "clustered.jsonl", rows)


@pytest.fixture
def paired_file(tmp_path):
    rows = []
    for cid, (x0, y0) in (("a", (0.0, 0.0)), ("b", (1.0, 1.0))):
        rows.append({"group_id": "g", "cluster_id": cid, "side": "x",
                     "payload": [x0]})
        rows.append({"group_id": "g", "cluster_id": cid, "side": "y",
                     "payload": [y0]})
    return write_jsonl(tmp_path / "paired.jsonl", rows)


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def run_json(capsys, *argv):
    code, out, err = run_cli(capsys, *argv, "--no-timestamp")
    assert code == 0, err
    return json.loads(out)


class TestIngest:
    def test_grouping_and_text_normalization(self, tmp_path):
        path = write_jsonl(tmp_path / "t.jsonl", [
            {"group_id": "b", "text": "The  Cat   sat"},
            {"group_id": "a", "tokens": ["x", 3]},
            {"group_id": "b", "text": "dog"},
        ])
        groups = group_records(load_records(path))
        assert list(groups) == ["b", "a"]
        assert groups["b"][0].point == ("the", "cat", "sat")
        assert groups["a"][0].point == ("x", 3)

    def test_schema_errors_carry_line_numbers(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"group_id": "g", "payload": [1]}\nnot json\n')
        with pytest.raises(SchemaError, match="line 2"):
            load_records(str(path))

        cases = [
            ({"payload": [1]}, "group_id"),
            ({"group_id": "g", "payload": [1], "color": 1}, "unknown fields"),
            ({"group_id": "g", "payload": [1], "tokens": ["a"]}, "more than one"),
            ({"group_id": "g"}, "no point and no metric"),
            ({"group_id": "g", "payload": []}, "non-empty"),
            ({"group_id": "g", "payload": [float("nan")] }, "finite"),
            ({"group_id": "g", "payload": [1], "role": "judge"}, "role"),
            ({"group_id": "g", "payload": [1], "side": "z"}, "side"),
            ({"group_id": True, "payload": [1]}, "string or integer"),
            ({"group_id": "g", "uncertainty": True}, "number"),
        ]
        for row, needle in cases:
            p = write_jsonl(tmp_path / "one.jsonl", [row])
            with pytest.raises(SchemaError, match=needle):
                load_records(p)

    def test_blank_lines_skipped_and_int_ids_canonicalized(self, tmp_path):
        path = tmp_path / "t.jsonl"
        path.write_text('\n{"group_id": 7, "payload": [1]}\n\n')
        recs = load_records(str(path))
        assert len(recs) == 1
        assert recs[0].group_id == "7"
        assert recs[0].line == 2

    def test_csv_matches_jsonl(self, tmp_path):
        jpath = write_jsonl(tmp_path / "t.jsonl", [
            {"group_id": "g", "cluster_id": "a", "payload": [0.5, 1.5]},
            {"group_id": "g", "cluster_id": "b", "payload": [2.0, 3.0],
             "role": "target", "side": "y", "label": 1, "uncertainty": 0.25},
        ])
        cpath = tmp_path / "t.csv"
        cpath.write_text(
            "group_id,cluster_id,payload,role,side,label,uncertainty\n"
            "g,a,0.5|1.5,,,,\n"
            "g,b,2.0|3.0,target,y,1,0.25\n"
        )
        jrecs = load_records(jpath)
        crecs = load_records(str(cpath), fmt="csv")
        for a, b in zip(jrecs, crecs):
            assert np.array_equal(a.payload, b.payload)
            assert (a.group_id, a.cluster_id, a.role, a.side, a.label,
                    a.uncertainty) == (b.group_id, b.cluster_id, b.role,
                                       b.side, b.label, b.uncertainty)

    def test_csv_errors(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("group_id,flavor\ng,1\n")
        with pytest.raises(SchemaError, match="unknown columns"):
            load_records(str(path), fmt="csv")
        path.write_text("group_id,payload\ng,1|x\n")
        with pytest.raises(SchemaError, match="pipe-delimited"):
            load_records(str(path), fmt="csv")
        path.write_text("group_id,label\ng,nope\n")
        with pytest.raises(SchemaError, match="label must be a number"):
            load_records(str(path), fmt="csv")
        path.write_text("group_id,payload\ng,1,9\n")
        with pytest.raises(SchemaError, match="more cells"):
            load_records(str(path), fmt="csv")

    def test_sample_block_clustering(self, clustered_file):
        rows = group_records(load_records(clustered_file))["g"]
        block = sample_block(rows)
        assert block.n == 2
        assert block.sizes == (2, 2)
        assert block.dense[1, 0, 0] == 4.0

    def test_implicit_single_cluster(self, tmp_path):
        path = write_jsonl(tmp_path / "t.jsonl", [
            {"group_id": "g", "payload": [0.0]},
            {"group_id": "g", "payload": [1.0]},
        ])
        block = sample_block(group_records(load_records(path))["g"])
        assert block.n == 1
        assert block.sizes == (2,)

    def test_paired_block_sides(self, paired_file):
        rows = group_records(load_records(paired_file))["g"]
        paired = paired_sample_block(rows)
        assert paired.n == 2
        assert np.array_equal(paired.x.dense, paired.y.dense)

    def test_load_mixture(self, tmp_path):
        path = tmp_path / "mix.json"
        path.write_text(json.dumps({
            "type": "mixture",
            "probs": [0.6, 0.4],
            "components": [
                {"weights": [0.5, 0.5], "atoms": [[0.0], [1.0]]},
                {"weights": [1.0], "atoms": [[2.0]]},
            ],
        }))
        mix = load_mixture(str(path))
        assert isinstance(mix, DiscreteMixture)
        assert list(mix.probs) == [0.6, 0.4]

        path.write_text(json.dumps({
            "type": "joint",
            "probs": [1.0],
            "pairs": [[
                {"weights": [1.0], "tokens": [["a", "b"]]},
                {"weights": [1.0], "tokens": [["a"]]},
            ]],
        }))
        joint = load_mixture(str(path))
        assert isinstance(joint, JointDiscreteMixture)

    def test_load_mixture_errors(self, tmp_path):
        path = tmp_path / "mix.json"
        bad = [
            "not json",
            json.dumps([1, 2]),
            json.dumps({"type": "mixture", "components": []}),
            json.dumps({"type": "blend", "probs": [1.0]}),
            json.dumps({"type": "mixture", "probs": [1.0],
                        "components": [{"weights": [1.0]}]}),
            json.dumps({"type": "mixture", "probs": [0.5],
                        "components": [
                            {"weights": [1.0], "atoms": [[0.0]]}]}),
        ]
        for text in bad:
            path.write_text(text)
            with pytest.raises(SchemaError):
                load_mixture(str(path))


class TestCliReports:
    def test_entropy_matches_library_bitwise(self, capsys, vectors_file):
        report = run_json(capsys, "entropy", "--kernel", "rbf",
                          "--gamma", "1.0", "--input", vectors_file,
                          "--skip-errors")
        spec = KernelSpec("rbf", gamma=1.0)
        g1 = report["groups"][0]
        assert g1["group_id"] == "g1"
        assert g1["n_generations"] == 2
        assert g1["value"] == kernel_entropy(spec, [np.array([0.0]),
                                                    np.array([1.0])])
        assert g1["effective_gamma"] == 1.0
        assert report["aggregate"]["groups"] == 2
        assert report["kernel"]["kind"] == "rbf"
        assert report["errors"][0]["group_id"] == "g3"
        assert report["errors"][0]["error"] == "TooFewSamplesError"

    def test_default_gamma_reported(self, capsys, tmp_path):
        path = write_jsonl(tmp_path / "t.jsonl", [
            {"group_id": "g", "payload": [0.0, 0.0]},
            {"group_id": "g", "payload": [1.0, 1.0]},
        ])
        report = run_json(capsys, "entropy", "--kernel", "rbf",
                          "--input", path)
        assert report["groups"][0]["effective_gamma"] == 0.5

    def test_variance_report(self, capsys, clustered_file):
        report = run_json(capsys, "variance", "--kernel", "rbf",
                          "--gamma", "0.5", "--input", clustered_file)
        rows = group_records(load_records(clustered_file))["g"]
        expect = distributional_variance(KernelSpec("rbf", gamma=0.5),
                                         sample_block(rows))
        g = report["groups"][0]
        assert g["value"] == expect
        assert g["n"] == 2 and g["m"] == [2, 2]

    def test_correlation_report_flags(self, capsys, paired_file):
        report = run_json(capsys, "correlation", "--kernel", "rbf",
                          "--gamma", "1.0", "--input", paired_file)
        g = report["groups"][0]
        assert g["value"] == 1.0
        assert g["clamped"] == 1.0
        assert g["flags"] == []

    def test_decompose_single_target_flags(self, capsys, tmp_path):
        path = write_jsonl(tmp_path / "t.jsonl", [
            {"group_id": "g", "cluster_id": "a", "payload": [0.0]},
            {"group_id": "g", "cluster_id": "a", "payload": [1.0]},
            {"group_id": "g", "cluster_id": "b", "payload": [4.0]},
            {"group_id": "g", "cluster_id": "b", "payload": [5.0]},
            {"group_id": "g", "payload": [2.0], "role": "target"},
        ])
        report = run_json(capsys, "decompose", "--kernel", "rbf",
                          "--gamma", "1.0", "--input", path)
        g = report["groups"][0]
        assert g["noise"] is None
        assert "noise_unavailable_single_target" in g["flags"]
        assert g["kernel_score"] is not None
        assert g["variance"] is not None

    def test_rouge_report(self, capsys, tmp_path):
        path = write_jsonl(tmp_path / "t.jsonl", [
            {"group_id": "g", "text": "a b c d e"},
            {"group_id": "g", "text": "a b c d f", "role": "target"},
        ])
        report = run_json(capsys, "rouge", "--input", path)
        g = report["groups"][0]
        assert g["value"] == 0.8
        assert g["binary_loss"] == 1
        assert "kernel" not in report

    def test_gain_report(self, capsys):
        report = run_json(capsys, "gain", "--var", "0.12", "--cov", "0.05",
                          "--n", "4")
        assert report["gain"] == ensemble_gain(0.12, 0.05, 4)
        assert report["ensemble_variance"] == ensemble_variance_split(
            0.12, 0.05, 4)

    def test_output_file_and_csv(self, capsys, vectors_file, tmp_path):
        out = tmp_path / "report.json"
        code, stdout, _ = run_cli(capsys, "entropy", "--kernel", "delta",
                                  "--input", vectors_file, "--skip-errors",
                                  "--output", str(out), "--no-timestamp")
        assert code == 0 and stdout == ""
        report = json.loads(out.read_text())
        assert report["command"] == "entropy"

        code, stdout, _ = run_cli(capsys, "entropy", "--kernel", "delta",
                                  "--input", vectors_file, "--skip-errors",
                                  "--output-format", "csv", "--no-timestamp")
        assert code == 0
        rows = list(csv.DictReader(io.StringIO(stdout)))
        assert [r["group_id"] for r in rows] == ["g1", "g2"]
        assert float(rows[0]["value"]) == -0.0

    def test_byte_determinism(self, capsys, vectors_file):
        args = ("score", "--kernel", "rbf", "--gamma", "2.0",
                "--input", vectors_file, "--skip-errors", "--no-timestamp")
        _, out1, _ = run_cli(capsys, *args)
        _, out2, _ = run_cli(capsys, *args)
        assert out1 == out2

    def test_timestamp_present_by_default(self, capsys, vectors_file):
        code, out, _ = run_cli(capsys, "entropy", "--kernel", "delta",
                               "--input", vectors_file, "--skip-errors")
        assert code == 0
        assert "timestamp" in json.loads(out)


class TestCliAuroc:
    def test_explicit_scores(self, capsys, tmp_path):
        rows = [
            {"group_id": f"g{i}", "uncertainty": u, "label": l}
            for i, (u, l) in enumerate(
                [(0.1, 0), (0.4, 0), (0.35, 1), (0.8, 1)])
        ]
        path = write_jsonl(tmp_path / "t.jsonl", rows)
        report = run_json(capsys, "auroc", "--input", path,
                          "--orientation", "confidence")
        assert report["value"] == 0.75
        assert report["n_pos"] == 2 and report["n_neg"] == 2
        report = run_json(capsys, "auroc", "--input", path)
        assert report["value"] == 0.25
        assert report["groups"][0]["flags"] == []

    def test_derived_uncertainty_and_label(self, capsys, tmp_path):
        rows = []
        cases = [
            ("A", ["yes sir", "yes sir"], "yes sir"),
            ("B", ["no way", "maybe so"], "completely different words here"),
            ("C", ["a b", "a b"], "a b"),
            ("D", ["x y", "z w"], "q r s t"),
        ]
        for gid, gens, target in cases:
            rows += [{"group_id": gid, "text": g} for g in gens]
            rows.append({"group_id": gid, "text": target, "role": "target"})
        path = write_jsonl(tmp_path / "t.jsonl", rows)
        report = run_json(capsys, "auroc", "--kernel", "delta",
                          "--input", path)
        # Agreeing generations give entropy -1 and a correct label; the
        # disagreeing groups give entropy 0 and a wrong label. Errors are
        # ranked strictly above successes.
        assert report["value"] == 1.0
        g = report["groups"][0]
        assert g["flags"] == ["derived_uncertainty", "derived_label"]
        assert g["uncertainty"] == -1.0
        assert g["label"] == 1.0

    def test_needs_kernel_for_derivation(self, capsys, tmp_path):
        path = write_jsonl(tmp_path / "t.jsonl", [
            {"group_id": "g", "text": "a"},
            {"group_id": "g", "text": "a", "role": "target"},
            {"group_id": "h", "uncertainty": 0.5, "label": 0},
        ])
        code, _, err = run_cli(capsys, "auroc", "--input", path)
        assert code == 3
        assert "uncertainty" in err


class TestCliExitCodes:
    def test_missing_file_is_input_error(self, capsys):
        code, _, _ = run_cli(capsys, "entropy", "--kernel", "delta",
                             "--input", "/nonexistent.jsonl")
        assert code == 2

    def test_schema_error(self, capsys, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"group_id": "g", "wat": 1}\n')
        code, _, err = run_cli(capsys, "entropy", "--kernel", "delta",
                               "--input", str(path))
        assert code == 2
        assert "unknown fields" in err

    def test_compute_error(self, capsys, vectors_file):
        code, _, err = run_cli(capsys, "entropy", "--kernel", "delta",
                               "--input", vectors_file)
        assert code == 3
        assert "g3" in err

    def test_usage_errors(self, capsys, vectors_file):
        # Parameter that the kernel does not take.
        code, _, err = run_cli(capsys, "entropy", "--kernel", "rbf",
                               "--degree", "2", "--input", vectors_file)
        assert code == 4 and "does not take" in err
        # Missing required flag.
        code, _, _ = run_cli(capsys, "entropy", "--input", vectors_file)
        assert code == 4
        # Unknown subcommand.
        code, _, _ = run_cli(capsys, "frobnicate")
        assert code == 4
        # Invalid kernel parameter value.
        code, _, _ = run_cli(capsys, "entropy", "--kernel", "rbf",
                             "--gamma", "-1.0", "--input", vectors_file)
        assert code == 4
        # Ensemble size must be positive.
        code, _, _ = run_cli(capsys, "gain", "--var", "1.0", "--cov", "0.0",
                             "--n", "0")
        assert code == 4
        # Threshold outside [0, 1].
        code, _, _ = run_cli(capsys, "rouge", "--input", vectors_file,
                             "--threshold", "1.5")
        assert code == 4

    def test_ragged_payloads_need_padding(self, capsys, tmp_path):
        path = write_jsonl(tmp_path / "t.jsonl", [
            {"group_id": "g", "payload": [0.0]},
            {"group_id": "g", "payload": [1.0, 2.0]},
        ])
        code, _, _ = run_cli(capsys, "entropy", "--kernel", "rbf",
                             "--input", str(path))
        assert code == 3
        report = run_json(capsys, "entropy", "--kernel", "rbf",
                          "--pad-to-max", "--input", str(path))
        assert report["groups"][0]["effective_gamma"] == 0.5


class TestCliSimulate:
    def mixture_path(self, tmp_path):
        path = tmp_path / "mix.json"
        path.write_text(json.dumps({
            "type": "mixture",
            "probs": [0.6, 0.4],
            "components": [
                {"weights": [0.5, 0.5], "atoms": [[0.0], [1.0]]},
                {"weights": [0.25, 0.75], "atoms": [[2.0], [3.0]]},
            ],
        }))
        return str(path)

    def test_simulate_deterministic_across_threads(self, capsys, tmp_path,
                                                   monkeypatch):
        args = ("simulate", "--kernel", "rbf", "--gamma", "1.0",
                "--mixture", self.mixture_path(tmp_path),
                "--seed", "3", "--replications", "40", "--grid", "4:4,6:4",
                "--no-timestamp")
        monkeypatch.setenv("KSCORE_THREADS", "1")
        _, out1, _ = run_cli(capsys, *args)
        monkeypatch.setenv("KSCORE_THREADS", "3")
        _, out2, _ = run_cli(capsys, *args)
        assert out1 == out2
        report = json.loads(out1)
        assert report["estimator"] == "variance"
        assert len(report["cells"]) == 2
        assert report["cells"][0]["flags"] == ["below_recommended_sizes"]

    def test_simulate_bad_grid(self, capsys, tmp_path):
        code, _, _ = run_cli(capsys, "simulate", "--kernel", "rbf",
                             "--mixture", self.mixture_path(tmp_path),
                             "--grid", "4x4")
        assert code == 4
        code, _, _ = run_cli(capsys, "simulate", "--kernel", "rbf",
                             "--mixture", self.mixture_path(tmp_path),
                             "--grid", "4:1")
        assert code == 4

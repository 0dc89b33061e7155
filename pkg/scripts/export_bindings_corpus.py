#!/usr/bin/env python3
"""Regenerate the bindings parity corpus (frontend/fixtures/corpus.json).

Every case is executed through the CLI exactly the way the bindings
execute it (same rows, same flags, --no-timestamp), and the expected
values are lifted from the resulting report. The bindings then have to
reproduce each value bit-for-bit from the same inputs, so the corpus
file is the contract between the two packages.

Run from the repository root after any change to the primary package:

    python3 scripts/export_bindings_corpus.py
"""

from __future__ import annotations

import contextlib
import io
import json
import pathlib
import tempfile

from kscore.cli import main

ROOT = pathlib.Path(__file__).resolve().parent.parent
OUT = ROOT / "frontend" / "fixtures" / "corpus.json"


def is_tokens(point) -> bool:
    return any(isinstance(tok, str) for tok in point)


def point_row(point, **extra) -> dict:
    key = "tokens" if is_tokens(point) else "payload"
    return {"group_id": "g", key: list(point), **extra}


def rows_for(args: dict) -> list[dict]:
    rows = []
    for pt in args.get("generations", ()):
        rows.append(point_row(pt))
    for i, cluster in enumerate(args.get("clusters", ())):
        for pt in cluster:
            rows.append(point_row(pt, cluster_id=f"c{i}"))
    for side in ("x", "y"):
        for i, cluster in enumerate(args.get(side, ())):
            for pt in cluster:
                rows.append(point_row(pt, cluster_id=f"c{i}", side=side))
    for pt in args.get("targets", ()):
        rows.append(point_row(pt, role="target"))
    if "candidate" in args:
        rows.append(point_row(args["candidate"]))
        rows.append(point_row(args["reference"], role="target"))
    for i, pair in enumerate(args.get("pairs", ())):
        rows.append({"group_id": f"g{i}", "uncertainty": pair["uncertainty"],
                     "label": pair["label"]})
    return rows


OPTION_FLAGS = {
    "kernel": "--kernel",
    "gamma": "--gamma",
    "degree": "--degree",
    "offset": "--offset",
    "scale": "--scale",
    "t": "--t",
    "threshold": "--threshold",
    "orientation": "--orientation",
}
BOOL_FLAGS = {
    "padToMax": "--pad-to-max",
    "exactSum": "--exact-sum",
    "includeDiagonal": "--include-diagonal",
}

SUBCOMMAND = {
    "kernelEntropy": "entropy",
    "kernelScore": "score",
    "mmd2": "mmd2",
    "distributionalVariance": "variance",
    "distributionalCovariance": "covariance",
    "distributionalCorrelation": "correlation",
    "decompose": "decompose",
    "rougeL": "rouge",
    "auroc": "auroc",
    "ensembleGain": "gain",
}


def run_cli(argv: list[str]) -> dict:
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = main(argv)
    if code != 0:
        raise RuntimeError(f"kscore {' '.join(argv)} exited {code}")
    return json.loads(buf.getvalue())


def flag_list(options: dict) -> list[str]:
    argv = []
    for key, flag in OPTION_FLAGS.items():
        if key in options:
            argv += [flag, str(options[key])]
    for key, flag in BOOL_FLAGS.items():
        if options.get(key):
            argv.append(flag)
    return argv


def execute(fn: str, args: dict, options: dict):
    sub = SUBCOMMAND[fn]
    argv = [sub] + flag_list(options) + ["--no-timestamp"]
    if fn == "ensembleGain":
        argv += ["--var", str(args["var"]), "--cov", str(args["cov"]),
                 "--n", str(args["n"])]
        report = run_cli(argv)
        return {"gain": report["gain"],
                "ensembleVariance": report["ensemble_variance"]}
    with tempfile.NamedTemporaryFile("w", suffix=".jsonl", delete=False) as fh:
        for row in rows_for(args):
            fh.write(json.dumps(row) + "\n")
        path = fh.name
    report = run_cli(argv + ["--input", path])
    if fn == "auroc":
        return {"value": report["value"], "nPos": report["n_pos"],
                "nNeg": report["n_neg"]}
    group = report["groups"][0]
    if fn == "distributionalCorrelation":
        return {"value": group["value"], "clamped": group["clamped"],
                "flags": group["flags"]}
    if fn == "rougeL":
        return {"value": group["value"], "binaryLoss": group["binary_loss"]}
    if fn == "decompose":
        return {k: v for k, v in group.items()
                if k not in ("group_id", "warnings")}
    return group["value"]


CASES = [
    # Matching generations have kernel similarity 1, so the estimated
    # norm is 1 and the entropy is exactly -1.
    ("entropy_identical_tokens_delta", "kernelEntropy",
     {"generations": [["a", "b"], ["a", "b"]]}, {"kernel": "delta"}),
    # Shared-substring fixture: one order-2 match over norms sqrt(3*1).
    ("entropy_cs_fixture", "kernelEntropy",
     {"generations": [["a", "b", "a", "b"], ["a", "b"]]},
     {"kernel": "cs_subsequence", "t": 2}),
    ("entropy_rbf_vectors", "kernelEntropy",
     {"generations": [[0.0], [1.0], [0.4]]}, {"kernel": "rbf", "gamma": 1.0}),
    ("score_point_prediction_delta", "kernelScore",
     {"generations": [[0.0], [1.0]], "targets": [[0.0]]},
     {"kernel": "delta"}),
    # Dyadic class weights (1/8, 3/8, 1/2) as a sample multiset; with the
    # diagonal kept the score is the plug-in score of that histogram, and
    # score + 1 equals its squared error to the one-hot target.
    ("score_brier_multiset", "kernelScore",
     {"generations": [[0.0]] + [[1.0]] * 3 + [[2.0]] * 4,
      "targets": [[1.0]]},
     {"kernel": "delta", "includeDiagonal": True}),
    ("mmd2_disjoint_delta", "mmd2",
     {"generations": [[0.0], [0.0]], "targets": [[1.0], [1.0]]},
     {"kernel": "delta"}),
    ("mmd2_rbf_vectors", "mmd2",
     {"generations": [[0.0], [0.5], [1.0]], "targets": [[0.25], [0.75]]},
     {"kernel": "rbf", "gamma": 2.0}),
    # Two internally-identical, mutually-disjoint clusters: variance 1.
    ("variance_disjoint_clusters_delta", "distributionalVariance",
     {"clusters": [[[0.0], [0.0]], [[1.0], [1.0]]]}, {"kernel": "delta"}),
    ("variance_rbf_clusters", "distributionalVariance",
     {"clusters": [[[0.0], [1.0]], [[4.0], [5.0]]]},
     {"kernel": "rbf", "gamma": 0.5}),
    ("covariance_aligned_sides", "distributionalCovariance",
     {"x": [[[0.0]], [[1.0]]], "y": [[[0.0]], [[1.0]]]},
     {"kernel": "delta"}),
    ("correlation_anti_aligned", "distributionalCorrelation",
     {"x": [[[0.0]], [[1.0]]], "y": [[[1.0]], [[0.0]]]},
     {"kernel": "delta"}),
    ("decompose_two_targets_rbf", "decompose",
     {"clusters": [[[0.0], [1.0]], [[4.0], [5.0]]],
      "targets": [[2.0], [3.0]]},
     {"kernel": "rbf", "gamma": 1.0}),
    ("decompose_single_target_flags", "decompose",
     {"clusters": [[[0.0], [1.0]], [[4.0], [5.0]]], "targets": [[2.0]]},
     {"kernel": "rbf", "gamma": 1.0}),
    ("rouge_four_fifths", "rougeL",
     {"candidate": ["a", "b", "c", "d", "e"],
      "reference": ["a", "b", "c", "d", "f"]}, {}),
    # Overlap exactly 0.3: the strict threshold maps it to loss 0.
    ("rouge_strict_threshold", "rougeL",
     {"candidate": ["a", "b", "c", "x0", "x1", "x2", "x3", "x4", "x5", "x6"],
      "reference": ["a", "b", "c", "y0", "y1", "y2", "y3", "y4", "y5", "y6"]},
     {"threshold": 0.3}),
    ("auroc_confidence_three_quarters", "auroc",
     {"pairs": [{"uncertainty": 0.1, "label": 0},
                {"uncertainty": 0.4, "label": 0},
                {"uncertainty": 0.35, "label": 1},
                {"uncertainty": 0.8, "label": 1}]},
     {"orientation": "confidence"}),
    ("auroc_uncertainty_orientation", "auroc",
     {"pairs": [{"uncertainty": 0.1, "label": 0},
                {"uncertainty": 0.4, "label": 0},
                {"uncertainty": 0.35, "label": 1},
                {"uncertainty": 0.8, "label": 1}]}, {}),
    ("gain_fixture_n2", "ensembleGain",
     {"var": 0.0052, "cov": 0.0049, "n": 2}, {}),
    ("gain_fixture_n10", "ensembleGain",
     {"var": 0.0052, "cov": 0.0049, "n": 10}, {}),
    ("gain_fixture_n100", "ensembleGain",
     {"var": 0.0052, "cov": 0.0049, "n": 100}, {}),
]


def build() -> dict:
    cases = []
    for name, fn, args, options in CASES:
        cases.append({
            "name": name,
            "fn": fn,
            "args": args,
            "options": options,
            "expected": execute(fn, args, options),
        })
    return {"cases": cases}


if __name__ == "__main__":
    OUT.parent.mkdir(parents=True, exist_ok=True)
    corpus = build()
    OUT.write_text(json.dumps(corpus, indent=2, sort_keys=True) + "\n")
    print(f"wrote {OUT} ({len(corpus['cases'])} cases)")

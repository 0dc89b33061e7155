"""Command line front end.

Reads grouped sample files (JSONL or CSV), runs one estimator per
subcommand, and writes a deterministic JSON (or CSV) report: keys are
sorted, floats use shortest round-trip formatting, and --no-timestamp
removes the only run-dependent field, so identical inputs give
byte-identical output.

Exit codes: 0 success, 2 invalid input data, 3 computation error,
4 bad flags or usage.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import warnings
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .errors import (
    EmptyGroupError,
    KscoreError,
    MixedKindsError,
    SchemaError,
    TooFewSamplesError,
)
from .estimators import (
    decompose,
    distributional_correlation,
    distributional_covariance,
    distributional_variance,
    ensemble_gain,
    ensemble_variance_split,
    kernel_entropy,
    kernel_score,
    mmd2,
)
from .evaluate import auroc, binarize_loss, rouge_l
from .ingest import (
    generation_points,
    group_records,
    load_mixture,
    load_records,
    paired_sample_block,
    sample_block,
    target_points,
)
from .kernels import (
    KERNEL_KINDS,
    KERNEL_PARAMS,
    TOKENS,
    VECTOR,
    KernelSpec,
    as_vector,
    point_kind,
    points_kind,
    resolve_gamma,
    resolve_scale,
)
from .simulate import SimulationConfig, run as run_simulation

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_COMPUTE = 3
EXIT_USAGE = 4

# Errors that mean the input data is malformed rather than uncomputable.
SCHEMA_ERRORS = (SchemaError, MixedKindsError, EmptyGroupError)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _add_io_flags(p, with_input=True):
    if with_input:
        p.add_argument("--input", required=True, help="sample file to read")
        p.add_argument(
            "--format", choices=("jsonl", "csv"), default="jsonl",
            help="sample file format (default jsonl)",
        )
        p.add_argument(
            "--skip-errors", action="store_true",
            help="report per-group errors instead of aborting",
        )
    p.add_argument("--output", help="write the report here instead of stdout")
    p.add_argument(
        "--output-format", choices=("json", "csv"), default="json",
        help="report format (default json)",
    )
    p.add_argument(
        "--no-timestamp", action="store_true",
        help="omit the timestamp field (byte-stable reports)",
    )


def _add_kernel_flags(p, required=True):
    p.add_argument(
        "--kernel", choices=KERNEL_KINDS, required=required,
        help="kernel kind" + ("" if required else " (optional)"),
    )
    p.add_argument("--gamma", type=float, help="rbf/laplacian width parameter")
    p.add_argument("--degree", type=int, help="polynomial degree")
    p.add_argument("--offset", type=float, help="polynomial offset")
    p.add_argument("--scale", type=float, help="polynomial scale")
    p.add_argument("--t", type=int, help="shared-substring order")
    p.add_argument(
        "--pad-to-max", action="store_true",
        help="zero-pad shorter vectors to the longest in the collection",
    )


def _add_exact_sum_flag(p):
    p.add_argument(
        "--exact-sum", action="store_true",
        help="compensated summation: bit-identical under point reordering",
    )


def _kernel_from_args(args) -> KernelSpec | None:
    if args.kernel is None:
        return None
    provided = {}
    for name in ("gamma", "degree", "offset", "scale", "t"):
        value = getattr(args, name)
        if value is not None:
            provided[name] = value
    if args.pad_to_max:
        provided["pad_to_max"] = True
    allowed = set(KERNEL_PARAMS[args.kernel]) | {"pad_to_max"}
    extras = sorted(set(provided) - allowed)
    if extras:
        raise _UsageError(
            f"kernel {args.kernel!r} does not take parameter(s) {', '.join(extras)}; "
            f"it takes {sorted(allowed)}"
        )
    try:
        return KernelSpec(kind=args.kernel, **provided)
    except ValueError as exc:
        raise _UsageError(str(exc)) from exc


def _effective_params(spec: KernelSpec, points) -> dict:
    """Data-resolved kernel parameters for the report, when they apply."""
    if spec is None or not points:
        return {}
    try:
        kind = points_kind(points)
    except KscoreError:
        return {}
    if kind != VECTOR:
        return {}
    widths = [as_vector(p).size for p in points]
    dim = max(widths) if spec.pad_to_max else widths[0]
    out = {}
    if spec.kind in ("rbf", "laplacian"):
        out["effective_gamma"] = resolve_gamma(spec, dim)
    if spec.kind == "polynomial":
        out["effective_scale"] = resolve_scale(spec, dim)
    return out


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def _csv_rows(report: dict) -> list[dict]:
    if "groups" in report:
        return report["groups"]
    if "cells" in report:
        return report["cells"]
    scalar = {
        k: v
        for k, v in report.items()
        if not isinstance(v, dict) and not isinstance(v, list)
    }
    return [scalar]


def _csv_text(report: dict) -> str:
    rows = [_jsonable(r) for r in _csv_rows(report)]
    columns = sorted({key for row in rows for key in row})
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        record = []
        for col in columns:
            value = row.get(col)
            if value is None:
                record.append("")
            elif isinstance(value, (list, tuple)):
                record.append("|".join(str(v) for v in value))
            elif isinstance(value, dict):
                record.append(json.dumps(value, sort_keys=True))
            else:
                record.append(str(value))
        writer.writerow(record)
    return buf.getvalue()


def _emit(args, report: dict) -> None:
    if args.output_format == "csv":
        text = _csv_text(report)
    else:
        text = json.dumps(_jsonable(report), indent=2, sort_keys=True,
                          allow_nan=False) + "\n"
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _base_report(args, command: str) -> dict:
    report = {"tool": "kscore", "version": __version__, "command": command}
    if not args.no_timestamp:
        report["timestamp"] = datetime.now(timezone.utc).isoformat()
    return report


def _for_each_group(args, compute_one):
    """(groups, errors) where errors holds skipped groups under --skip-errors."""
    records = load_records(args.input, args.format)
    out_groups = []
    errors = []
    for gid, rows in group_records(records).items():
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                gdict = compute_one(gid, rows)
            except KscoreError as exc:
                if args.skip_errors:
                    errors.append({
                        "group_id": gid,
                        "error": type(exc).__name__,
                        "message": str(exc),
                    })
                    continue
                # Same class (the exit code depends on it), group named.
                raise type(exc)(f"group {gid!r}: {exc}") from exc
        gdict.setdefault("flags", [])
        gdict["warnings"] = sorted({str(w.message) for w in caught})
        out_groups.append({"group_id": gid, **gdict})
    return out_groups, errors


def _aggregate(groups: list[dict]) -> dict:
    values = [g["value"] for g in groups if isinstance(g.get("value"), float)]
    agg = {"groups": len(groups), "valued": len(values)}
    if values:
        agg["mean"] = float(np.mean(np.asarray(values)))
    return agg


def _finish_group_report(args, command, spec, groups, errors, options) -> dict:
    report = _base_report(args, command)
    if spec is not None:
        report["kernel"] = spec.as_dict()
    report["input"] = {"path": args.input, "format": args.format}
    report["options"] = options
    report["groups"] = groups
    report["errors"] = errors
    report["aggregate"] = _aggregate(groups)
    return report


def cmd_entropy(args) -> dict:
    spec = _kernel_from_args(args)

    def one(gid, rows):
        pts = generation_points(rows)
        value = kernel_entropy(spec, pts, exact_sum=args.exact_sum)
        out = {"n_generations": len(pts), "value": value}
        out.update(_effective_params(spec, pts))
        return out

    groups, errors = _for_each_group(args, one)
    return _finish_group_report(
        args, "entropy", spec, groups, errors, {"exact_sum": args.exact_sum}
    )


def cmd_score(args) -> dict:
    spec = _kernel_from_args(args)

    def one(gid, rows):
        pts = generation_points(rows)
        tgts = target_points(rows)
        value = kernel_score(
            spec, pts, tgts,
            include_diagonal=args.include_diagonal,
            exact_sum=args.exact_sum,
        )
        out = {"n_generations": len(pts), "n_targets": len(tgts), "value": value}
        out.update(_effective_params(spec, pts))
        return out

    groups, errors = _for_each_group(args, one)
    options = {
        "exact_sum": args.exact_sum,
        "include_diagonal": args.include_diagonal,
    }
    return _finish_group_report(args, "score", spec, groups, errors, options)


def cmd_mmd2(args) -> dict:
    spec = _kernel_from_args(args)

    def one(gid, rows):
        pts = generation_points(rows)
        tgts = target_points(rows)
        value = mmd2(spec, pts, tgts, exact_sum=args.exact_sum)
        out = {"n_generations": len(pts), "n_targets": len(tgts), "value": value}
        out.update(_effective_params(spec, pts))
        return out

    groups, errors = _for_each_group(args, one)
    return _finish_group_report(
        args, "mmd2", spec, groups, errors, {"exact_sum": args.exact_sum}
    )


def cmd_variance(args) -> dict:
    spec = _kernel_from_args(args)

    def one(gid, rows):
        block = sample_block(rows, side="x")
        value = distributional_variance(spec, block, exact_sum=args.exact_sum)
        out = {"n": block.n, "m": list(block.sizes), "value": value}
        out.update(_effective_params(spec, generation_points(rows, side="x")))
        return out

    groups, errors = _for_each_group(args, one)
    return _finish_group_report(
        args, "variance", spec, groups, errors, {"exact_sum": args.exact_sum}
    )


def cmd_covariance(args) -> dict:
    spec = _kernel_from_args(args)

    def one(gid, rows):
        paired = paired_sample_block(rows)
        value = distributional_covariance(spec, paired, exact_sum=args.exact_sum)
        return {
            "n": paired.n,
            "m_x": list(paired.x.sizes),
            "m_y": list(paired.y.sizes),
            "value": value,
        }

    groups, errors = _for_each_group(args, one)
    return _finish_group_report(
        args, "covariance", spec, groups, errors, {"exact_sum": args.exact_sum}
    )


def cmd_correlation(args) -> dict:
    spec = _kernel_from_args(args)

    def one(gid, rows):
        paired = paired_sample_block(rows)
        res = distributional_correlation(spec, paired, exact_sum=args.exact_sum)
        return {
            "n": paired.n,
            "m_x": list(paired.x.sizes),
            "m_y": list(paired.y.sizes),
            "value": res.raw,
            "clamped": res.clamped,
            "flags": list(res.flags),
        }

    groups, errors = _for_each_group(args, one)
    return _finish_group_report(
        args, "correlation", spec, groups, errors, {"exact_sum": args.exact_sum}
    )


def cmd_decompose(args) -> dict:
    spec = _kernel_from_args(args)

    def one(gid, rows):
        block = sample_block(rows, side="x")
        tgts = target_points(rows)
        rep = decompose(spec, block, tgts, exact_sum=args.exact_sum).as_dict()
        rep.pop("kernel")
        out = {"n_targets": len(tgts), **rep}
        out.update(_effective_params(spec, generation_points(rows, side="x")))
        return out

    groups, errors = _for_each_group(args, one)
    return _finish_group_report(
        args, "decompose", spec, groups, errors, {"exact_sum": args.exact_sum}
    )


def _check_threshold(threshold: float) -> None:
    if not 0.0 <= threshold <= 1.0:
        raise _UsageError(f"--threshold must be in [0, 1], got {threshold!r}")


def _group_uncertainty(gid, rows, spec, exact_sum):
    explicit = [r.uncertainty for r in rows if r.uncertainty is not None]
    if explicit:
        return explicit[0], False
    gens = generation_points(rows)
    if spec is None:
        raise TooFewSamplesError(
            f"group {gid!r} has no uncertainty field; pass --kernel to derive "
            "one from the generations"
        )
    if len(gens) < 2:
        raise TooFewSamplesError(
            f"group {gid!r} has no uncertainty field and fewer than 2 "
            "generations to derive one"
        )
    return kernel_entropy(spec, gens, exact_sum=exact_sum), True


def _group_label(gid, rows, threshold):
    explicit = [r.label for r in rows if r.label is not None]
    if explicit:
        return explicit[0], False
    gens = generation_points(rows)
    tgts = target_points(rows)
    if not gens or not tgts:
        raise TooFewSamplesError(
            f"group {gid!r} has no label field and lacks a generation/target "
            "pair to derive one"
        )
    if point_kind(gens[0]) != TOKENS or point_kind(tgts[0]) != TOKENS:
        raise MixedKindsError(
            f"group {gid!r}: deriving a label needs token points"
        )
    return float(binarize_loss(gens[0], tgts[0], threshold)), True


def cmd_auroc(args) -> dict:
    """Rank groups by uncertainty against their binary correctness labels.

    label = 1 means the group's outcome was correct. With the default
    uncertainty orientation the score should rank incorrect groups higher,
    so labels are inverted for the pair counting; with --orientation
    confidence the score is taken as a correctness score directly.
    """
    spec = _kernel_from_args(args)
    _check_threshold(args.threshold)

    def one(gid, rows):
        u, u_derived = _group_uncertainty(gid, rows, spec, args.exact_sum)
        label, l_derived = _group_label(gid, rows, args.threshold)
        if label not in (0.0, 1.0):
            raise SchemaError(f"group {gid!r} label must be 0 or 1, got {label!r}")
        flags = []
        if u_derived:
            flags.append("derived_uncertainty")
        if l_derived:
            flags.append("derived_label")
        return {"uncertainty": u, "label": label, "flags": flags}

    groups, errors = _for_each_group(args, one)
    scores = [g["uncertainty"] for g in groups]
    labels = [g["label"] for g in groups]
    if args.orientation == "uncertainty":
        oriented = [1.0 - v for v in labels]
    else:
        oriented = labels
    value = auroc(scores, oriented)
    n_pos = int(sum(oriented))
    report = _finish_group_report(
        args, "auroc", spec, groups, errors,
        {
            "exact_sum": args.exact_sum,
            "orientation": args.orientation,
            "threshold": args.threshold,
        },
    )
    report["value"] = value
    report["n_pos"] = n_pos
    report["n_neg"] = len(oriented) - n_pos
    report["aggregate"] = {"groups": len(groups), "value": value}
    return report


def cmd_rouge(args) -> dict:
    _check_threshold(args.threshold)

    def one(gid, rows):
        gens = generation_points(rows)
        tgts = target_points(rows)
        if not gens or not tgts:
            raise EmptyGroupError(
                f"group {gid!r} needs one generation and one target row"
            )
        cand, ref = gens[0], tgts[0]
        if point_kind(cand) != TOKENS or point_kind(ref) != TOKENS:
            raise MixedKindsError(
                f"group {gid!r}: overlap scoring needs token points"
            )
        return {
            "n_generations": len(gens),
            "n_targets": len(tgts),
            "value": rouge_l(cand, ref),
            "binary_loss": binarize_loss(cand, ref, args.threshold),
        }

    groups, errors = _for_each_group(args, one)
    return _finish_group_report(
        args, "rouge", None, groups, errors, {"threshold": args.threshold}
    )


def cmd_gain(args) -> dict:
    try:
        gain = ensemble_gain(args.var, args.cov, args.n)
        ensemble_variance = ensemble_variance_split(args.var, args.cov, args.n)
    except (KscoreError, ValueError) as exc:
        raise _UsageError(str(exc)) from exc
    report = _base_report(args, "gain")
    report.update({
        "variance": args.var,
        "covariance": args.cov,
        "n": args.n,
        "gain": gain,
        "ensemble_variance": ensemble_variance,
    })
    return report


def _parse_grid(text: str) -> tuple[tuple[int, int], ...]:
    cells = []
    for part in text.split(","):
        bits = part.strip().split(":")
        if len(bits) != 2:
            raise _UsageError(
                f"grid entries look like n:m, got {part.strip()!r}"
            )
        try:
            n, m = int(bits[0]), int(bits[1])
        except ValueError:
            raise _UsageError(f"grid entry {part.strip()!r} is not a pair of "
                              "integers") from None
        cells.append((n, m))
    return tuple(cells)


def cmd_simulate(args) -> dict:
    spec = _kernel_from_args(args)
    mixture = load_mixture(args.mixture)
    try:
        config = SimulationConfig(
            seed=args.seed,
            replications=args.replications,
            grid=_parse_grid(args.grid),
            estimator=args.estimator,
            kernel=spec,
            source=mixture,
        )
    except ValueError as exc:
        raise _UsageError(str(exc)) from exc
    result = run_simulation(config)
    report = _base_report(args, "simulate")
    payload = result.as_dict()
    report["kernel"] = payload.pop("kernel")
    report.update(payload)
    report["options"] = {
        "mixture": args.mixture,
        "seed": args.seed,
        "replications": args.replications,
        "grid": args.grid,
        "estimator": args.estimator,
    }
    return report


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="kscore",
        description="Kernel scores, entropies, and dispersion decompositions "
                    "for generated samples.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_text, *, kernel="required", with_input=True):
        p = sub.add_parser(name, help=help_text)
        if kernel is not None:
            _add_kernel_flags(p, required=(kernel == "required"))
        _add_io_flags(p, with_input=with_input)
        p.set_defaults(func=func)
        return p

    p = add("entropy", cmd_entropy, "predictive kernel entropy per group")
    _add_exact_sum_flag(p)

    p = add("score", cmd_score, "kernel score of generations against targets")
    p.add_argument(
        "--include-diagonal", action="store_true",
        help="keep the self-similarity diagonal in the norm term",
    )
    _add_exact_sum_flag(p)

    p = add("mmd2", cmd_mmd2, "unbiased squared MMD per group")
    _add_exact_sum_flag(p)

    p = add("variance", cmd_variance, "two-stage distributional variance")
    _add_exact_sum_flag(p)

    p = add("covariance", cmd_covariance,
            "two-stage distributional covariance of paired sides")
    _add_exact_sum_flag(p)

    p = add("correlation", cmd_correlation,
            "distributional correlation of paired sides")
    _add_exact_sum_flag(p)

    p = add("decompose", cmd_decompose,
            "noise/bias/variance split of the kernel score")
    _add_exact_sum_flag(p)

    p = add("auroc", cmd_auroc,
            "rank groups by uncertainty against binary labels",
            kernel="optional")
    p.add_argument(
        "--orientation", choices=("uncertainty", "confidence"),
        default="uncertainty",
        help="whether scores rank errors (uncertainty, default) or "
             "correct outcomes (confidence)",
    )
    p.add_argument(
        "--threshold", type=float, default=0.3,
        help="overlap threshold for derived labels (default 0.3)",
    )
    _add_exact_sum_flag(p)

    p = add("rouge", cmd_rouge,
            "overlap score of the first generation against the target",
            kernel=None)
    p.add_argument(
        "--threshold", type=float, default=0.3,
        help="binarization threshold (default 0.3)",
    )

    p = sub.add_parser("gain", help="ensemble variance reduction from "
                                    "variance, covariance, and size")
    p.add_argument("--var", type=float, required=True, help="member variance")
    p.add_argument("--cov", type=float, required=True, help="pair covariance")
    p.add_argument("--n", type=int, required=True, help="ensemble size")
    _add_io_flags(p, with_input=False)
    p.set_defaults(func=cmd_gain)

    p = sub.add_parser("simulate", help="Monte-Carlo study of an estimator "
                                        "against its exact value")
    _add_kernel_flags(p, required=True)
    p.add_argument("--mixture", required=True,
                   help="mixture description file (JSON)")
    p.add_argument("--estimator", choices=("variance", "covariance",
                                           "correlation"), default="variance")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replications", type=int, default=1000)
    p.add_argument("--grid", default="10:10",
                   help="comma-separated n:m cells, e.g. 4:20,8:20")
    _add_io_flags(p, with_input=False)
    p.set_defaults(func=cmd_simulate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        report = args.func(args)
        _emit(args, report)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SCHEMA_ERRORS as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except KscoreError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except OSError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    return EXIT_OK

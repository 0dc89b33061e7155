"""Record ingestion: JSONL / CSV sample files and mixture description files.

A record row carries one point (numeric payload, token list, or raw text
that gets lowercased and whitespace-split) plus grouping metadata.
Validation is strict: unknown fields, malformed values, and kind mixes
raise SchemaError with the 1-based line number of the offending row.

Row fields:
    group_id    required; the instance the row belongs to
    cluster_id  optional; rows sharing it form one generator draw,
                rows without it share one implicit cluster
    payload     numeric point, list of finite numbers
    tokens      token point, list of strings or integers
    text        raw string; lowercased and split on whitespace
    role        "generation" (default) or "target"
    side        "x" (default) or "y", for paired estimators
    label       optional number (binary outcome for ranking)
    uncertainty optional finite number (precomputed score)

A row must carry at most one of payload / tokens / text; a row with
none of them must carry label or uncertainty (a metric-only row).

CSV uses the same field names as columns; payload and tokens cells are
pipe-delimited ("0.5|1.5"); empty cells mean the field is absent.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import EmptyGroupError, SchemaError, ShapeMismatchError
from .estimators import PairedSampleBlock, SampleBlock
from .exact import DiscreteDistribution, DiscreteMixture, JointDiscreteMixture

ROLES = ("generation", "target")
SIDES = ("x", "y")

_FIELDS = (
    "group_id",
    "cluster_id",
    "payload",
    "tokens",
    "text",
    "role",
    "side",
    "label",
    "uncertainty",
)


@dataclass(frozen=True)
class IngestRecord:
    """One validated input row."""

    group_id: str
    cluster_id: str | None
    payload: np.ndarray | None
    tokens: tuple | None
    role: str
    side: str
    label: float | None
    uncertainty: float | None
    line: int

    @property
    def point(self):
        """The row's point (array or token tuple), None for metric-only rows."""
        if self.payload is not None:
            return self.payload
        return self.tokens


def _id_value(value, field, line):
    if isinstance(value, bool) or not isinstance(value, (str, int)):
        raise SchemaError(f"{field} must be a string or integer", line=line)
    return str(value)


def _number(value, field, line):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{field} must be a number", line=line)
    value = float(value)
    if not np.isfinite(value):
        raise SchemaError(f"{field} must be finite", line=line)
    return value


def _payload_value(value, line):
    if not isinstance(value, (list, tuple)) or not value:
        raise SchemaError("payload must be a non-empty list of numbers", line=line)
    out = []
    for item in value:
        out.append(_number(item, "payload entry", line))
    return np.asarray(out, dtype=np.float64)


def _tokens_value(value, line):
    if not isinstance(value, (list, tuple)):
        raise SchemaError("tokens must be a list", line=line)
    out = []
    for item in value:
        if isinstance(item, bool) or not isinstance(item, (str, int)):
            raise SchemaError("tokens entries must be strings or integers", line=line)
        out.append(item)
    return tuple(out)


def _record_from_mapping(obj: dict, line: int) -> IngestRecord:
    unknown = sorted(set(obj) - set(_FIELDS))
    if unknown:
        raise SchemaError(f"unknown fields {unknown}", line=line)
    if "group_id" not in obj:
        raise SchemaError("missing required field group_id", line=line)
    group_id = _id_value(obj["group_id"], "group_id", line)
    cluster_id = None
    if "cluster_id" in obj:
        cluster_id = _id_value(obj["cluster_id"], "cluster_id", line)

    carriers = [name for name in ("payload", "tokens", "text") if name in obj]
    if len(carriers) > 1:
        raise SchemaError(
            f"row carries more than one of payload/tokens/text: {carriers}",
            line=line,
        )
    payload = tokens = None
    if "payload" in obj:
        payload = _payload_value(obj["payload"], line)
    elif "tokens" in obj:
        tokens = _tokens_value(obj["tokens"], line)
    elif "text" in obj:
        if not isinstance(obj["text"], str):
            raise SchemaError("text must be a string", line=line)
        tokens = tuple(obj["text"].lower().split())

    role = obj.get("role", "generation")
    if role not in ROLES:
        raise SchemaError(f"role must be one of {ROLES}, got {role!r}", line=line)
    side = obj.get("side", "x")
    if side not in SIDES:
        raise SchemaError(f"side must be one of {SIDES}, got {side!r}", line=line)
    label = _number(obj["label"], "label", line) if "label" in obj else None
    uncertainty = (
        _number(obj["uncertainty"], "uncertainty", line)
        if "uncertainty" in obj
        else None
    )
    if payload is None and tokens is None and label is None and uncertainty is None:
        raise SchemaError(
            "row carries no point and no metric (payload/tokens/text/label/"
            "uncertainty all absent)",
            line=line,
        )
    return IngestRecord(
        group_id=group_id,
        cluster_id=cluster_id,
        payload=payload,
        tokens=tokens,
        role=role,
        side=side,
        label=label,
        uncertainty=uncertainty,
        line=line,
    )


def _load_jsonl(path: str) -> list[IngestRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON: {exc.msg}", line=line_no) from exc
            if not isinstance(obj, dict):
                raise SchemaError("row must be a JSON object", line=line_no)
            records.append(_record_from_mapping(obj, line_no))
    return records


def _csv_cell(row: dict, name: str):
    value = row.get(name)
    if value is None or value == "":
        return None
    return value


def _load_csv(path: str) -> list[IngestRecord]:
    records = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh, restkey="_extra")
        if reader.fieldnames is None:
            return []
        unknown = sorted(set(reader.fieldnames) - set(_FIELDS))
        if unknown:
            raise SchemaError(f"unknown columns {unknown}", line=1)
        for row in reader:
            line = reader.line_num
            if row.get("_extra"):
                raise SchemaError("row has more cells than the header", line=line)
            obj: dict = {}
            for name in ("group_id", "cluster_id", "role", "side", "text"):
                cell = _csv_cell(row, name)
                if cell is not None:
                    obj[name] = cell
            for name in ("label", "uncertainty"):
                cell = _csv_cell(row, name)
                if cell is not None:
                    try:
                        obj[name] = float(cell)
                    except ValueError:
                        raise SchemaError(
                            f"{name} must be a number, got {cell!r}", line=line
                        ) from None
            cell = _csv_cell(row, "payload")
            if cell is not None:
                try:
                    obj["payload"] = [float(part) for part in cell.split("|")]
                except ValueError:
                    raise SchemaError(
                        f"payload cell must be pipe-delimited numbers, got {cell!r}",
                        line=line,
                    ) from None
            cell = _csv_cell(row, "tokens")
            if cell is not None:
                obj["tokens"] = cell.split("|")
            records.append(_record_from_mapping(obj, line))
    return records


def load_records(path: str, fmt: str = "jsonl") -> list[IngestRecord]:
    """Read and validate a sample file; fmt is "jsonl" or "csv"."""
    if fmt == "jsonl":
        return _load_jsonl(path)
    if fmt == "csv":
        return _load_csv(path)
    raise ValueError(f"format must be jsonl or csv, got {fmt!r}")


def group_records(records) -> dict[str, list[IngestRecord]]:
    """Bucket records by group_id, groups ordered by first appearance."""
    groups: dict[str, list[IngestRecord]] = {}
    for rec in records:
        groups.setdefault(rec.group_id, []).append(rec)
    return groups


def _point_rows(rows, role, side=None):
    picked = [r for r in rows if r.role == role and r.point is not None]
    if side is not None:
        picked = [r for r in picked if r.side == side]
    return picked


def generation_points(rows, side=None) -> list:
    """Points of generation rows, pooled across clusters, row order."""
    return [r.point for r in _point_rows(rows, "generation", side)]


def target_points(rows) -> list:
    """Points of target rows, any side, row order."""
    return [r.point for r in _point_rows(rows, "target")]


def sample_block(rows, side="x") -> SampleBlock:
    """Cluster a group's generation rows into a SampleBlock.

    Clusters follow cluster_id first-appearance order; rows without a
    cluster_id share one implicit cluster.
    """
    clusters: dict[str, list] = {}
    for rec in _point_rows(rows, "generation", side):
        clusters.setdefault("" if rec.cluster_id is None else rec.cluster_id, []).append(
            rec.point
        )
    if not clusters:
        raise EmptyGroupError(f"no generation rows on side {side!r}")
    return SampleBlock(list(clusters.values()))


def paired_sample_block(rows) -> PairedSampleBlock:
    """Pair the x-side and y-side clusters of one group.

    Both sides must produce the same clusters in the same order; pairing
    is positional per shared cluster_id.
    """
    return PairedSampleBlock(sample_block(rows, "x"), sample_block(rows, "y"))


def _distribution_from(obj: dict, where: str) -> DiscreteDistribution:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: component must be an object")
    unknown = sorted(set(obj) - {"weights", "atoms", "tokens"})
    if unknown:
        raise SchemaError(f"{where}: unknown fields {unknown}")
    if "weights" not in obj:
        raise SchemaError(f"{where}: missing weights")
    has_atoms = "atoms" in obj
    has_tokens = "tokens" in obj
    if has_atoms == has_tokens:
        raise SchemaError(f"{where}: exactly one of atoms/tokens required")
    try:
        if has_atoms:
            atoms = [np.asarray(a, dtype=np.float64) for a in obj["atoms"]]
        else:
            atoms = [tuple(t) for t in obj["tokens"]]
        return DiscreteDistribution(atoms, obj["weights"])
    except (ValueError, TypeError, ShapeMismatchError) as exc:
        raise SchemaError(f"{where}: {exc}") from exc


def load_mixture(path: str):
    """Read a mixture description file (JSON).

    Two shapes:
        {"type": "mixture", "probs": [...], "components": [component...]}
        {"type": "joint", "probs": [...], "pairs": [[component, component]...]}
    where a component is {"weights": [...], "atoms": [[...]...]} for
    numeric atoms or {"weights": [...], "tokens": [[...]...]} for token
    atoms. Returns DiscreteMixture or JointDiscreteMixture.
    """
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON in {path}: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise SchemaError("mixture file must hold a JSON object")
    probs = obj.get("probs")
    if not isinstance(probs, list) or not all(
        isinstance(p, (int, float)) and not isinstance(p, bool) for p in probs
    ):
        raise SchemaError("probs must be a list of numbers")
    kind = obj.get("type")
    if kind == "mixture":
        unknown = sorted(set(obj) - {"type", "probs", "components"})
        if unknown:
            raise SchemaError(f"unknown fields {unknown}")
        comps = obj.get("components")
        if not isinstance(comps, list) or not comps:
            raise SchemaError("components must be a non-empty list")
        dists = [
            _distribution_from(c, f"components[{i}]") for i, c in enumerate(comps)
        ]
        try:
            return DiscreteMixture(dists, probs)
        except (ValueError, ShapeMismatchError) as exc:
            raise SchemaError(str(exc)) from exc
    if kind == "joint":
        unknown = sorted(set(obj) - {"type", "probs", "pairs"})
        if unknown:
            raise SchemaError(f"unknown fields {unknown}")
        pairs = obj.get("pairs")
        if not isinstance(pairs, list) or not pairs:
            raise SchemaError("pairs must be a non-empty list")
        built = []
        for i, pair in enumerate(pairs):
            if not isinstance(pair, list) or len(pair) != 2:
                raise SchemaError(f"pairs[{i}] must be a [component, component] pair")
            built.append(
                (
                    _distribution_from(pair[0], f"pairs[{i}][0]"),
                    _distribution_from(pair[1], f"pairs[{i}][1]"),
                )
            )
        try:
            return JointDiscreteMixture(built, probs)
        except (ValueError, ShapeMismatchError) as exc:
            raise SchemaError(str(exc)) from exc
    raise SchemaError(f"type must be 'mixture' or 'joint', got {kind!r}")

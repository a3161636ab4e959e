"""JSON-lines file formats and canonical JSON serialization.

Every on-disk format is JSON lines (one record per line, explicit header
records where needed): streamable, diffable, no binary. Floats are serialized
with shortest round-trip formatting (Python's repr, which json uses), so
save -> load reproduces every finite double bit-exactly. Non-finite values
are rejected at write time, never encoded.

Schemas
-------
responses:   {"items": [d strings]} header line, then {"id": str,
             "responses": [d floats]} per row, order preserved.
personas:    {"id": str, "narrative": str} per record, plus optional
             "embedding": [E floats], "response_row": int, "seed_id": str.
embeddings:  {"id": str, "embedding": [E floats]} per record.
pairs:       {"query_id": str, "positive_id": str, "negative_ids":
             [strings], "exhausted": bool} per record.
config:      one flat JSON document mirroring AlignmentConfig field names;
             item_weights is a list of d floats or absent/null.
report:      one JSON document, schema versioned via "report_version".
"""

import json
import math

import numpy as np

from .core import AlignmentConfig, ItemWeights, PersonaRecord, ResponseMatrix
from .errors import NonFiniteValue, ParseError, SchemaError
from .retrieval import EmbeddingIndex, TrainingPair


def _require(record, key, types, lineno, label):
    if key not in record:
        raise SchemaError(f"line {lineno}: {label} record missing {key!r}", line=lineno)
    val = record[key]
    if not isinstance(val, types):
        raise SchemaError(
            f"line {lineno}: {label} field {key!r} has type {type(val).__name__}",
            line=lineno,
        )
    return val


def _float_list(values, lineno, label):
    out = []
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise SchemaError(f"line {lineno}: {label} contains a non-number", line=lineno)
        f = float(v)
        if not math.isfinite(f):
            raise NonFiniteValue(f"line {lineno}: {label} contains a non-finite value")
        out.append(f)
    return out


def parse_jsonl(path):
    """Yield (1-based line number, parsed record) for each nonblank line."""
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"line {lineno}: {exc.msg}", line=lineno) from exc
            yield lineno, record


def dump_jsonl(path, records):
    """Write records one per line; rejects non-finite floats."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            try:
                fh.write(json.dumps(record, allow_nan=False) + "\n")
            except ValueError as exc:
                raise NonFiniteValue(f"refusing to serialize non-finite value: {exc}") from exc


def _check_finite_tree(obj, context):
    if isinstance(obj, float) and not math.isfinite(obj):
        raise NonFiniteValue(f"{context}: non-finite value {obj!r}")
    if isinstance(obj, dict):
        for v in obj.values():
            _check_finite_tree(v, context)
    elif isinstance(obj, (list, tuple)):
        for v in obj:
            _check_finite_tree(v, context)


def canonical_json(obj):
    """Deterministic JSON text: sorted keys, fixed separators, no NaN."""
    _check_finite_tree(obj, "canonical_json")
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False)


# ---------------------------------------------------------------- responses

def save_responses(path, matrix, ids=None):
    if not isinstance(matrix, ResponseMatrix):
        matrix = ResponseMatrix(matrix)
    if ids is None:
        ids = [f"r{i}" for i in range(matrix.n)]
    ids = [str(i) for i in ids]
    if len(ids) != matrix.n:
        raise SchemaError(f"{len(ids)} ids for {matrix.n} rows")
    records = [{"items": list(matrix.item_ids)}]
    records.extend(
        {"id": ids[i], "responses": [float(v) for v in matrix.values[i]]}
        for i in range(matrix.n)
    )
    dump_jsonl(path, records)


def load_response_records(path):
    """(row ids, ResponseMatrix) from a response file; row order preserved."""
    items = None
    ids = []
    rows = []
    for lineno, record in parse_jsonl(path):
        if not isinstance(record, dict):
            raise SchemaError(f"line {lineno}: expected an object", line=lineno)
        if items is None:
            if "items" not in record:
                raise SchemaError(
                    f"line {lineno}: first record must be the items header", line=lineno
                )
            items = record["items"]
            if not isinstance(items, list) or not all(isinstance(s, str) for s in items):
                raise SchemaError(f"line {lineno}: items must be a list of strings", line=lineno)
            if not items:
                raise SchemaError(f"line {lineno}: items header is empty", line=lineno)
            continue
        rid = _require(record, "id", str, lineno, "response")
        vals = _require(record, "responses", list, lineno, "response")
        if len(vals) != len(items):
            raise SchemaError(
                f"line {lineno}: row has {len(vals)} entries, header names {len(items)} items",
                line=lineno,
            )
        ids.append(rid)
        rows.append(_float_list(vals, lineno, "responses"))
    if items is None:
        raise SchemaError("response file has no header record")
    if not rows:
        raise SchemaError("response file has no data rows")
    return ids, ResponseMatrix(np.array(rows, dtype=np.float64), tuple(items))


def load_responses(path):
    """ResponseMatrix from a response file (ids discarded)."""
    _, matrix = load_response_records(path)
    return matrix


# ----------------------------------------------------------------- personas

def save_personas(path, personas):
    records = []
    for rec in personas:
        row = {"id": rec.id, "narrative": rec.narrative}
        if rec.embedding is not None:
            row["embedding"] = [float(v) for v in rec.embedding]
        if rec.response_row is not None:
            row["response_row"] = int(rec.response_row)
        if rec.seed_id is not None:
            row["seed_id"] = rec.seed_id
        records.append(row)
    dump_jsonl(path, records)


def load_personas(path):
    out = []
    for lineno, record in parse_jsonl(path):
        if not isinstance(record, dict):
            raise SchemaError(f"line {lineno}: expected an object", line=lineno)
        pid = _require(record, "id", str, lineno, "persona")
        narrative = record.get("narrative", "")
        if not isinstance(narrative, str):
            raise SchemaError(f"line {lineno}: narrative must be a string", line=lineno)
        emb = record.get("embedding")
        if emb is not None:
            emb = np.array(_float_list(
                _require(record, "embedding", list, lineno, "persona"), lineno, "embedding"
            ))
        row = record.get("response_row")
        if row is not None and (isinstance(row, bool) or not isinstance(row, int)):
            raise SchemaError(f"line {lineno}: response_row must be an integer", line=lineno)
        seed_id = record.get("seed_id")
        if seed_id is not None and not isinstance(seed_id, str):
            raise SchemaError(f"line {lineno}: seed_id must be a string", line=lineno)
        out.append(
            PersonaRecord(
                id=pid, narrative=narrative, embedding=emb, response_row=row, seed_id=seed_id
            )
        )
    if not out:
        raise SchemaError("persona file has no records")
    return out


# --------------------------------------------------------------- embeddings

def save_embeddings(path, ids, vectors):
    vectors = np.asarray(vectors, dtype=np.float64)
    ids = [str(i) for i in ids]
    if vectors.ndim != 2 or vectors.shape[0] != len(ids):
        raise SchemaError(f"{len(ids)} ids for embedding array of shape {vectors.shape}")
    dump_jsonl(
        path,
        ({"id": ids[i], "embedding": [float(v) for v in vectors[i]]} for i in range(len(ids))),
    )


def load_embedding_records(path):
    """(ids, raw vector array) exactly as stored, no normalization."""
    ids = []
    rows = []
    dim = None
    for lineno, record in parse_jsonl(path):
        if not isinstance(record, dict):
            raise SchemaError(f"line {lineno}: expected an object", line=lineno)
        ids.append(_require(record, "id", str, lineno, "embedding"))
        vals = _float_list(
            _require(record, "embedding", list, lineno, "embedding"), lineno, "embedding"
        )
        if dim is None:
            dim = len(vals)
        elif len(vals) != dim:
            raise SchemaError(
                f"line {lineno}: embedding length {len(vals)} differs from {dim}", line=lineno
            )
        rows.append(vals)
    if not rows:
        raise SchemaError("embedding file has no records")
    return ids, np.array(rows, dtype=np.float64)


def load_embeddings(path):
    """EmbeddingIndex (validated, L2-normalized) from an embedding file."""
    ids, vectors = load_embedding_records(path)
    return EmbeddingIndex.build(ids, vectors)


# -------------------------------------------------------------------- items

def save_items(path, items):
    dump_jsonl(path, ({"item": str(t)} for t in items))


def load_items(path):
    out = []
    for lineno, record in parse_jsonl(path):
        if not isinstance(record, dict):
            raise SchemaError(f"line {lineno}: expected an object", line=lineno)
        out.append(_require(record, "item", str, lineno, "item"))
    if not out:
        raise SchemaError("items file has no records")
    return out


# -------------------------------------------------------------------- pairs

def save_pairs(path, pairs):
    dump_jsonl(
        path,
        (
            {
                "query_id": p.query_id,
                "positive_id": p.positive_id,
                "negative_ids": list(p.negative_ids),
                "exhausted": bool(p.exhausted),
            }
            for p in pairs
        ),
    )


def load_pairs(path):
    out = []
    for lineno, record in parse_jsonl(path):
        if not isinstance(record, dict):
            raise SchemaError(f"line {lineno}: expected an object", line=lineno)
        negs = _require(record, "negative_ids", list, lineno, "pair")
        if not all(isinstance(s, str) for s in negs):
            raise SchemaError(f"line {lineno}: negative_ids must be strings", line=lineno)
        exhausted = record.get("exhausted", False)
        if not isinstance(exhausted, bool):
            raise SchemaError(f"line {lineno}: exhausted must be a boolean", line=lineno)
        out.append(
            TrainingPair(
                query_id=_require(record, "query_id", str, lineno, "pair"),
                positive_id=_require(record, "positive_id", str, lineno, "pair"),
                negative_ids=tuple(negs),
                exhausted=exhausted,
            )
        )
    return out


# ------------------------------------------------------------------- config

_CONFIG_FIELDS = (
    "n_is_candidates",
    "n_final",
    "seed",
    "bandwidth",
    "retain_fraction",
    "epsilon",
    "sinkhorn_iters",
    "sinkhorn_tol",
    "item_weights",
    "ot_batch_size",
)


def save_config(path, config):
    doc = {
        "n_is_candidates": config.n_is_candidates,
        "n_final": config.n_final,
        "seed": config.seed,
        "bandwidth": config.bandwidth,
        "retain_fraction": config.retain_fraction,
        "epsilon": config.epsilon,
        "sinkhorn_iters": config.sinkhorn_iters,
        "sinkhorn_tol": config.sinkhorn_tol,
        "item_weights": None
        if config.item_weights is None
        else [float(v) for v in config.item_weights.weights],
        "ot_batch_size": config.ot_batch_size,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(doc) + "\n")


def config_from_mapping(doc, overrides=None):
    """AlignmentConfig from a flat mapping, with optional field overrides."""
    if not isinstance(doc, dict):
        raise SchemaError("config document must be a JSON object")
    unknown = set(doc) - set(_CONFIG_FIELDS)
    if unknown:
        raise SchemaError(f"unknown config fields: {sorted(unknown)}")
    merged = dict(doc)
    for key, val in (overrides or {}).items():
        if val is not None:
            merged[key] = val
    if merged.get("item_weights") is not None and not isinstance(
        merged["item_weights"], ItemWeights
    ):
        merged["item_weights"] = ItemWeights(np.asarray(merged["item_weights"], dtype=np.float64))
    try:
        return AlignmentConfig(**merged)
    except TypeError as exc:
        raise SchemaError(f"config incomplete: {exc}") from exc


def load_config(path, overrides=None):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"config: {exc.msg} at line {exc.lineno}", line=exc.lineno) from exc
    return config_from_mapping(doc, overrides)

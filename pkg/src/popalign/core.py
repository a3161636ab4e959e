"""Shared domain types and pool validation.

Responses are stored as 64-bit floats regardless of the source scale; all
downstream math is continuous. Types are immutable after construction and safe
to share across threads.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateId,
    InvalidConfig,
    NonFiniteValue,
)

_MAX_SEED = (1 << 64) - 1


def _frozen_array(values, dtype=np.float64, ndim=None, name="array"):
    arr = np.array(values, dtype=dtype, order="C")
    if ndim is not None and arr.ndim != ndim:
        raise DimensionMismatch(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ResponseMatrix:
    """N x d matrix of scalar questionnaire responses.

    Rows are individuals (personas or humans), columns are inventory items.
    Entries must be finite; `item_ids` name the d columns and are carried
    through to reports, the alignment math ignores them.
    """

    values: np.ndarray
    item_ids: tuple = ()

    def __post_init__(self):
        arr = _frozen_array(self.values, ndim=2, name="responses")
        n, d = arr.shape
        if n < 1 or d < 1:
            raise DimensionMismatch(f"response matrix must be at least 1x1, got {n}x{d}")
        bad = np.argwhere(~np.isfinite(arr))
        if bad.size:
            r, c = (int(v) for v in bad[0])
            raise NonFiniteValue(f"non-finite response at row {r}, column {c}", row=r, col=c)
        ids = tuple(self.item_ids) if self.item_ids else tuple(f"item{k}" for k in range(d))
        if len(ids) != d:
            raise DimensionMismatch(f"{len(ids)} item ids for {d} columns")
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "item_ids", ids)

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def d(self):
        return self.values.shape[1]

    def column(self, t):
        return self.values[:, t]

    def take_rows(self, rows):
        """New matrix with the given rows (multiset semantics allowed)."""
        return ResponseMatrix(self.values[np.asarray(rows, dtype=np.intp)], self.item_ids)


@dataclass(frozen=True)
class PersonaRecord:
    """One candidate persona: id, narrative, optional embedding and response row.

    `seed_id` records provenance when the record was produced by revising
    another persona (group-specific generation); None otherwise.
    """

    id: str
    narrative: str = ""
    embedding: np.ndarray = None
    response_row: int = None
    seed_id: str = None

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise InvalidConfig(f"persona id must be a nonempty string, got {self.id!r}")
        if self.embedding is not None:
            emb = _frozen_array(self.embedding, ndim=1, name="embedding")
            if not np.isfinite(emb).all():
                raise NonFiniteValue(f"non-finite embedding entry for persona {self.id!r}")
            object.__setattr__(self, "embedding", emb)
        if self.response_row is not None:
            object.__setattr__(self, "response_row", int(self.response_row))


@dataclass(frozen=True)
class ItemWeights:
    """Per-item positive weights for the squared-difference transport cost."""

    weights: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.weights, ndim=1, name="item weights")
        if arr.size < 1:
            raise DimensionMismatch("item weights must be nonempty")
        if not np.isfinite(arr).all() or (arr <= 0).any():
            raise InvalidConfig("item weights must all be positive finite reals")
        object.__setattr__(self, "weights", arr)

    @property
    def d(self):
        return self.weights.shape[0]


@dataclass(frozen=True)
class AlignmentConfig:
    """All pipeline knobs.

    epsilon is a multiplier on the median transport cost (effective
    regularization = epsilon * median cost); see popalign.ot for the
    absolute-epsilon escape hatch. Defaults follow the published experiment
    settings: bandwidth 0.20, retain the top 70% by importance weight,
    epsilon 0.08 of median cost, 250 Sinkhorn iterations, transport batches
    of 10,000.
    """

    n_is_candidates: int
    n_final: int
    seed: int
    bandwidth: float = 0.20
    retain_fraction: float = 0.70
    epsilon: float = 0.08
    sinkhorn_iters: int = 250
    sinkhorn_tol: float = 1e-6
    item_weights: ItemWeights = None
    ot_batch_size: int = 10_000

    def __post_init__(self):
        for name in ("n_is_candidates", "n_final", "sinkhorn_iters", "ot_batch_size"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1:
                raise InvalidConfig(f"{name} must be a positive integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        for name in ("bandwidth", "epsilon", "sinkhorn_tol"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v <= 0:
                raise InvalidConfig(f"{name} must be a positive finite real, got {v!r}")
            object.__setattr__(self, name, v)
        rf = float(self.retain_fraction)
        if not 0 < rf <= 1:
            raise InvalidConfig(f"retain_fraction must lie in (0, 1], got {rf!r}")
        object.__setattr__(self, "retain_fraction", rf)
        if not isinstance(self.seed, (int, np.integer)) or isinstance(self.seed, bool):
            raise InvalidConfig(f"seed must be an integer, got {self.seed!r}")
        if not 0 <= int(self.seed) <= _MAX_SEED:
            raise InvalidConfig(f"seed must be unsigned 64-bit, got {self.seed}")
        object.__setattr__(self, "seed", int(self.seed))
        if self.n_final > self.n_is_candidates:
            raise InvalidConfig(
                f"n_final ({self.n_final}) exceeds n_is_candidates ({self.n_is_candidates})"
            )
        if self.item_weights is not None and not isinstance(self.item_weights, ItemWeights):
            raise InvalidConfig("item_weights must be an ItemWeights instance or None")


@dataclass(frozen=True)
class ValidatedPool:
    """Handle returned by validate_pool; carries the checked inputs."""

    personas: tuple
    responses: ResponseMatrix
    id_to_index: dict = field(compare=False, default=None)


def validate_pool(personas, responses=None):
    """Check pool-wide invariants and return a ValidatedPool handle.

    Validation is idempotent: re-validating a ValidatedPool returns it
    unchanged. Any violated invariant raises the matching error naming the
    offending record; nothing is repaired silently.
    """
    if isinstance(personas, ValidatedPool):
        return personas
    if responses is None:
        raise InvalidConfig("validate_pool requires a response matrix for unvalidated input")
    personas = tuple(personas)
    if not isinstance(responses, ResponseMatrix):
        responses = ResponseMatrix(responses)

    seen = {}
    for rec in personas:
        if rec.id in seen:
            raise DuplicateId(f"duplicate persona id {rec.id!r}", id=rec.id)
        seen[rec.id] = rec

    emb_dim = None
    for rec in personas:
        if rec.embedding is None:
            continue
        if emb_dim is None:
            emb_dim = rec.embedding.shape[0]
        elif rec.embedding.shape[0] != emb_dim:
            raise DimensionMismatch(
                f"persona {rec.id!r} embedding has length {rec.embedding.shape[0]}, "
                f"pool uses {emb_dim}"
            )

    rows_used = {}
    for rec in personas:
        if rec.response_row is None:
            continue
        if not 0 <= rec.response_row < responses.n:
            raise DimensionMismatch(
                f"persona {rec.id!r} response_row {rec.response_row} outside [0, {responses.n})"
            )
        if rec.response_row in rows_used:
            raise DuplicateId(
                f"personas {rows_used[rec.response_row]!r} and {rec.id!r} share response row "
                f"{rec.response_row}",
                id=rec.id,
            )
        rows_used[rec.response_row] = rec.id

    return ValidatedPool(
        personas=personas,
        responses=responses,
        id_to_index={rec.id: i for i, rec in enumerate(personas)},
    )

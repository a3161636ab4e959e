"""Cosine retrieval over persona embeddings and contrastive training pairs.

Embeddings arrive precomputed (file-based or via an external service); this
module never trains or serves an embedding model. Vectors are L2-normalized on
ingestion, so cosine similarity reduces to a dot product. Retrieval order is
total: descending score with ties broken by ascending id.

The false-negative filter and the group reviser are injected callables with
HTTP wire contracts (see popalign.clients); tests use deterministic stubs.
"""

from dataclasses import dataclass, field
import logging

import numpy as np

from .core import PersonaRecord
from .errors import (
    DimensionMismatch,
    DuplicateId,
    EmptyNegativePool,
    InvalidConfig,
    KOutOfRange,
    NonFiniteValue,
    ZeroVector,
)
from .rng import derive_seed, rng_from_seed

logger = logging.getLogger(__name__)


def _as_vector(v, name="vector"):
    arr = np.asarray(v, dtype=np.float64).ravel()
    if arr.size == 0:
        raise DimensionMismatch(f"{name} is empty")
    if not np.isfinite(arr).all():
        raise NonFiniteValue(f"{name} contains a non-finite entry")
    return arr


def _unit(v, name="vector"):
    arr = _as_vector(v, name)
    norm = float(np.linalg.norm(arr))
    if norm == 0.0:
        raise ZeroVector(f"{name} is the zero vector")
    return arr / norm


@dataclass(frozen=True)
class EmbeddingIndex:
    """Persona ids with their L2-normalized embedding vectors."""

    ids: tuple
    vectors: np.ndarray
    id_to_row: dict = field(compare=False, default=None)

    @classmethod
    def build(cls, ids, vectors):
        """Validate, normalize, and freeze an index.

        Rejects duplicate ids, ragged dimensions, zero vectors, and non-finite
        entries; every stored vector has unit norm after ingestion.
        """
        ids = tuple(str(i) for i in ids)
        if len(set(ids)) != len(ids):
            seen = set()
            for i in ids:
                if i in seen:
                    raise DuplicateId(f"duplicate embedding id {i!r}", id=i)
                seen.add(i)
        arr = np.asarray(vectors, dtype=np.float64)
        if arr.ndim != 2:
            raise DimensionMismatch(f"embedding matrix must be 2-d, got shape {arr.shape}")
        if arr.shape[0] != len(ids):
            raise DimensionMismatch(f"{len(ids)} ids for {arr.shape[0]} vectors")
        if not np.isfinite(arr).all():
            raise NonFiniteValue("embedding matrix contains a non-finite entry")
        norms = np.linalg.norm(arr, axis=1)
        dead = np.flatnonzero(norms == 0.0)
        if dead.size:
            raise ZeroVector(f"zero embedding vector for id {ids[int(dead[0])]!r}")
        unit = arr / norms[:, None]
        unit.setflags(write=False)
        return cls(ids=ids, vectors=unit, id_to_row={i: r for r, i in enumerate(ids)})

    @property
    def size(self):
        return len(self.ids)

    @property
    def dim(self):
        return self.vectors.shape[1]


def cosine_similarity(a, b):
    """<a,b> / (||a|| ||b||), clamped to [-1, 1] against roundoff."""
    va = _as_vector(a, "first vector")
    vb = _as_vector(b, "second vector")
    if va.shape[0] != vb.shape[0]:
        raise DimensionMismatch(f"vector lengths differ: {va.shape[0]} vs {vb.shape[0]}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine similarity is undefined for the zero vector")
    return float(np.clip(va @ vb / (na * nb), -1.0, 1.0))


def _scores(query, index):
    q = _unit(query, "query")
    if q.shape[0] != index.dim:
        raise DimensionMismatch(f"query length {q.shape[0]} vs index dimension {index.dim}")
    return np.clip(index.vectors @ q, -1.0, 1.0)


def top_k_retrieve(query, index, k):
    """Top k (id, score) pairs, descending score, ties by ascending id."""
    if not isinstance(k, (int, np.integer)) or isinstance(k, bool):
        raise KOutOfRange(f"k must be an integer, got {k!r}")
    if not 1 <= k <= index.size:
        raise KOutOfRange(f"k={k} outside [1, {index.size}]")
    scores = _scores(query, index)
    order = sorted(range(index.size), key=lambda r: (-scores[r], index.ids[r]))
    return [(index.ids[r], float(scores[r])) for r in order[: int(k)]]


def contrastive_loss(query_emb, positive_emb, negative_embs, temperature=1.0):
    """-log( exp(s+/t) / (exp(s+/t) + sum_j exp(s-_j/t)) ), s = cosine sim.

    Computed through log-sum-exp; temperature defaults to 1 (the plain
    unscaled form).
    """
    negative_embs = list(negative_embs)
    if not negative_embs:
        raise InvalidConfig("contrastive_loss needs at least one negative")
    s_pos = cosine_similarity(query_emb, positive_emb)
    s_negs = [cosine_similarity(query_emb, n) for n in negative_embs]
    return contrastive_loss_from_scores(s_pos, s_negs, temperature)


def contrastive_loss_from_scores(s_pos, s_negs, temperature=1.0):
    """Same loss evaluated directly on similarity scores."""
    t = float(temperature)
    if not np.isfinite(t) or t <= 0:
        raise InvalidConfig(f"temperature must be positive, got {temperature!r}")
    logits = np.asarray([s_pos] + list(s_negs), dtype=np.float64) / t
    peak = logits.max()
    lse = peak + np.log(np.exp(logits - peak).sum())
    return float(lse - logits[0])


@dataclass(frozen=True)
class TrainingPair:
    """Positive (query, persona) pair with its filtered negatives.

    `exhausted` flags pairs that got fewer negatives than requested because
    the candidate pool ran out after filtering.
    """

    query_id: str
    positive_id: str
    negative_ids: tuple
    exhausted: bool = False

    def __post_init__(self):
        negs = tuple(self.negative_ids)
        if not negs:
            raise EmptyNegativePool(
                f"pair for query {self.query_id!r} has no negatives",
                query_ids=(self.query_id,),
            )
        if self.positive_id in negs:
            raise DuplicateId(
                f"positive {self.positive_id!r} appears among its own negatives",
                id=self.positive_id,
            )
        object.__setattr__(self, "negative_ids", negs)


def _accept_all(query_id, candidate_id):
    return False


def build_training_pairs(
    index,
    queries,
    n_hard=10,
    n_random=10,
    seed=0,
    false_negative_filter=None,
    strict=True,
):
    """Construct contrastive training pairs with hard and random negatives.

    For each (query_id, query_emb, source_persona_id): hard negatives are the
    top-n_hard most similar index entries excluding the positive; random
    negatives are seeded uniform draws (without replacement) from the
    remainder. Every candidate passes through `false_negative_filter`, a
    predicate returning True when the candidate is semantically aligned with
    the query and must be excluded; rejected candidates are replaced from the
    next-ranked / re-drawn pool until counts are met or the pool is exhausted
    (the pair is then flagged `exhausted`).

    Queries whose whole pool is filtered away yield no pair: strict mode
    raises EmptyNegativePool listing every such query id, otherwise they are
    skipped with a warning each. The per-query draw order depends only on
    (seed, query position), so pair sets are reproducible.
    """
    if n_hard < 0 or n_random < 0 or n_hard + n_random < 1:
        raise InvalidConfig("need n_hard, n_random >= 0 with n_hard + n_random >= 1")
    # reject(query_id, candidate_id) -> True means "semantically aligned, drop it"
    reject = false_negative_filter if false_negative_filter is not None else _accept_all
    pairs = []
    empty_queries = []
    for q_pos, (query_id, query_emb, positive_id) in enumerate(queries):
        scores = _scores(query_emb, index)
        ranked = sorted(range(index.size), key=lambda r: (-scores[r], index.ids[r]))
        candidates = [index.ids[r] for r in ranked if index.ids[r] != positive_id]

        hard = []
        cursor = 0
        while len(hard) < n_hard and cursor < len(candidates):
            cand = candidates[cursor]
            cursor += 1
            if not reject(query_id, cand):
                hard.append(cand)

        hard_set = set(hard)
        remainder = [c for c in candidates if c not in hard_set]
        rng = rng_from_seed(derive_seed(seed, q_pos))
        order = rng.permutation(len(remainder)) if remainder else []
        rand = []
        for r in order:
            if len(rand) >= n_random:
                break
            cand = remainder[int(r)]
            if not reject(query_id, cand):
                rand.append(cand)

        negatives = tuple(hard + rand)
        if not negatives:
            empty_queries.append(query_id)
            continue
        pairs.append(
            TrainingPair(
                query_id=str(query_id),
                positive_id=str(positive_id),
                negative_ids=negatives,
                exhausted=len(negatives) < n_hard + n_random,
            )
        )
    if empty_queries:
        if strict:
            raise EmptyNegativePool(
                f"no negatives survive filtering for queries {empty_queries}",
                query_ids=empty_queries,
            )
        for qid in empty_queries:
            logger.warning("query %r: no negatives survive filtering, skipped", qid)
    return pairs


def group_subset(query_emb, index, k, reviser, personas, query_text=""):
    """Group-conditioned persona generation from retrieved seeds.

    Retrieves the k nearest seed personas, runs each narrative through the
    injected `reviser(query_text, narrative) -> revised narrative`, and
    returns fresh PersonaRecords whose `seed_id` links back to the seed. A
    reviser failure on one seed logs a warning and skips that seed; the batch
    never aborts.
    """
    hits = top_k_retrieve(query_emb, index, k)
    out = []
    for pos, (seed_id, _score) in enumerate(hits):
        rec = personas.get(seed_id) if hasattr(personas, "get") else None
        if rec is None:
            logger.warning("seed persona %r has no narrative record, skipped", seed_id)
            continue
        try:
            revised = reviser(query_text, rec.narrative)
        except Exception as exc:  # external-call failure: skip, never abort
            logger.warning("reviser failed on seed %r: %s", seed_id, exc)
            continue
        out.append(
            PersonaRecord(
                id=f"group{pos}:{seed_id}",
                narrative=str(revised),
                embedding=None,
                response_row=None,
                seed_id=seed_id,
            )
        )
    return out

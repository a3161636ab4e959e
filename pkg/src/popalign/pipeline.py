"""End-to-end alignment: Stage 1 importance resampling, Stage 2 transport.

run_alignment wires the full chain: fit the two KDEs, compute clamped
importance weights, keep the top fraction by weight, draw the candidate
multiset, deduplicate, solve batched entropic transport against the
reference, and draw the final aligned subset from the transport weights.
Every intermediate summary lands in the AlignmentReport; fixed (inputs,
config) reproduces outputs bit-identically.

Errors raised inside a stage propagate with their original type, a `stage`
attribute, and a message prefix naming the stage.
"""

from contextlib import contextmanager
from dataclasses import dataclass
import math
import time

import numpy as np

from .core import AlignmentConfig, ResponseMatrix, validate_pool
from .errors import InvalidConfig, PopalignError, ResponderFailure
from .io import canonical_json
from .kde import fit_kde, importance_log_ratios
from .metrics import metric_report
from .ot import batched_ot_weights, resample_ot
from .rng import derive_seed, rng_from_seed
from .sampling import multinomial_draw, normalize_weights

REPORT_VERSION = 1

# stream tags for the pipeline's independent draw streams
_STAGE1_STREAM = 11
_FINAL_STREAM = 12
_RANDOM_SELECT_STREAM = 13
_KDE_SUBSAMPLE_STREAM = 14
_SW_PRE_TAG = 21
_SW_POST_TAG = 22


@contextmanager
def _stage(name, timings):
    t0 = time.perf_counter()
    try:
        yield
    except PopalignError as e:
        e.stage = name
        if e.args:
            e.args = (f"stage {name}: {e.args[0]}",) + e.args[1:]
        else:
            e.args = (f"stage {name}",)
        raise
    finally:
        timings[name] = timings.get(name, 0.0) + (time.perf_counter() - t0)


def collect_responses(personas, items, responder, seed, retries=2):
    """Fill the N x d response matrix through the injected responder.

    Per-cell seeds derive from (seed, row, column), so recomputing any subset
    of cells reproduces the full-run values. A cell failing after `retries`
    additional attempts aborts with ResponderFailure carrying the coordinates.
    """
    items = list(items)
    if not personas or not items:
        raise InvalidConfig("collect_responses needs at least one persona and one item")
    values = np.empty((len(personas), len(items)))
    for i, rec in enumerate(personas):
        for k, item in enumerate(items):
            cell_seed = derive_seed(seed, i, k)
            last = None
            for _attempt in range(retries + 1):
                try:
                    value = float(responder.respond(rec.narrative, item, cell_seed))
                except Exception as exc:
                    last = exc
                    continue
                if not math.isfinite(value):
                    last = InvalidConfig(f"responder returned non-finite {value!r}")
                    continue
                values[i, k] = value
                break
            else:
                raise ResponderFailure(
                    f"cell ({i}, {k}) failed after {retries + 1} attempts: {last}",
                    row=i,
                    col=k,
                ) from last
    return ResponseMatrix(values, tuple(items))


def truncate_by_weight(weights, retain_fraction):
    """Indices of the top ceil(retain_fraction * n) entries by weight.

    Ties resolve toward the lower index (stable order); the result is sorted
    ascending.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size < 1:
        raise InvalidConfig(f"weights must be a nonempty 1-d vector, got shape {w.shape}")
    if not 0 < float(retain_fraction) <= 1:
        raise InvalidConfig(f"retain_fraction must lie in (0, 1], got {retain_fraction!r}")
    n_keep = max(1, math.ceil(float(retain_fraction) * w.size))
    order = np.argsort(-w, kind="stable")
    return np.sort(order[:n_keep])


def _weight_summary(log_ratios, log_clamp):
    clamped = np.clip(log_ratios, -log_clamp, log_clamp)
    w = np.exp(clamped)
    return w, {
        "min": float(w.min()),
        "median": float(np.median(w)),
        "max": float(w.max()),
        "clamp_count": int(np.count_nonzero(np.abs(log_ratios) > log_clamp)),
        "log_clamp": float(log_clamp),
    }


@dataclass(frozen=True)
class AlignmentReport:
    """Everything a run observed, serializable as one canonical JSON document.

    `timings` is wall-clock and therefore excluded from the canonical
    serialization that the determinism guarantee covers; pass
    include_timings=True to report_json for a human-readable variant.
    """

    config: dict
    pool_sizes: dict
    is_weights: dict
    sinkhorn_batches: list
    metrics_random_select: dict
    metrics_aligned: dict
    selected: list  # [id, multiplicity] pairs sorted by id
    selected_ids: list  # draw order, length n_final
    timings: dict

    def to_dict(self, include_timings=False):
        doc = {
            "report_version": REPORT_VERSION,
            "config": self.config,
            "pool_sizes": self.pool_sizes,
            "is_weights": self.is_weights,
            "sinkhorn_batches": self.sinkhorn_batches,
            "metrics_random_select": self.metrics_random_select,
            "metrics_aligned": self.metrics_aligned,
            "selected": self.selected,
            "selected_ids": self.selected_ids,
        }
        if include_timings:
            doc["timings"] = self.timings
        return doc


def report_json(report, include_timings=False):
    """Canonical JSON text of the report (byte-stable for fixed inputs)."""
    return canonical_json(report.to_dict(include_timings=include_timings))


def _config_snapshot(config):
    return {
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


def _maybe_subsample(matrix, cap, seed, stream_word):
    if cap is None or matrix.n <= cap:
        return matrix
    rng = rng_from_seed(seed, stream=(_KDE_SUBSAMPLE_STREAM, stream_word))
    rows = np.sort(rng.choice(matrix.n, size=int(cap), replace=False))
    return matrix.take_rows(rows)


def run_alignment(
    pool_responses,
    reference,
    personas,
    config,
    *,
    allow_unconverged=False,
    kde_fit_subsample=None,
    epsilon_absolute=None,
    log_clamp=30.0,
):
    """Align the pool to the reference; returns (selected ids, report).

    The returned list holds n_final persona ids in draw order (a multiset,
    duplicates expected). kde_fit_subsample caps both KDE fitting sets by a
    seeded subsample for very large pools; the default fits on everything.
    Under a subsampled fit the persona density is evaluated self-inclusively
    (each pool point counts toward its own estimate), keeping importance
    ratios bounded at pool points the subsample missed.
    """
    if not isinstance(config, AlignmentConfig):
        raise InvalidConfig("run_alignment needs an AlignmentConfig")
    timings = {}

    with _stage("validate", timings):
        pool = validate_pool(personas, pool_responses)
        if not isinstance(reference, ResponseMatrix):
            reference = ResponseMatrix(reference)
        pool_matrix = pool.responses
        if reference.d != pool_matrix.d:
            raise InvalidConfig(
                f"reference dimension {reference.d} differs from pool dimension {pool_matrix.d}"
            )
        if config.n_is_candidates > pool_matrix.n:
            raise InvalidConfig(
                f"n_is_candidates ({config.n_is_candidates}) exceeds pool size "
                f"({pool_matrix.n})"
            )
        row_to_id = {}
        for rec in pool.personas:
            if rec.response_row is not None:
                row_to_id[rec.response_row] = rec.id
        if len(row_to_id) != pool_matrix.n:
            raise InvalidConfig(
                f"pool rows with personas: {len(row_to_id)} of {pool_matrix.n}; "
                f"every row needs exactly one persona"
            )

    with _stage("kde_fit", timings):
        human_model = fit_kde(
            _maybe_subsample(reference, kde_fit_subsample, config.seed, 1), config.bandwidth
        )
        persona_model = fit_kde(
            _maybe_subsample(pool_matrix, kde_fit_subsample, config.seed, 2), config.bandwidth
        )

    with _stage("importance_weights", timings):
        # a subsampled persona fit loses the self-term floor at pool points
        # outside the subset; include_query restores it
        log_ratios = importance_log_ratios(
            human_model, persona_model, pool_matrix,
            query_in_source=kde_fit_subsample is not None,
        )
        is_weights, weight_summary = _weight_summary(log_ratios, float(log_clamp))

    with _stage("truncate", timings):
        kept = truncate_by_weight(is_weights, config.retain_fraction)

    with _stage("stage1_draw", timings):
        probs = normalize_weights(is_weights[kept])
        draw = multinomial_draw(
            probs, config.n_is_candidates, derive_seed(config.seed, _STAGE1_STREAM)
        )
        candidate_rows = kept[draw]

    with _stage("dedup", timings):
        distinct_rows = np.unique(candidate_rows)
        X_dagger = pool_matrix.take_rows(distinct_rows)

    with _stage("transport", timings):
        ot_w, batch_details = batched_ot_weights(
            X_dagger,
            reference,
            config,
            epsilon_absolute=epsilon_absolute,
            allow_unconverged=allow_unconverged,
            return_details=True,
        )

    with _stage("final_draw", timings):
        final_draw = resample_ot(ot_w, config.n_final, derive_seed(config.seed, _FINAL_STREAM))
        selected_rows = distinct_rows[final_draw]

    with _stage("metrics", timings):
        rng = rng_from_seed(config.seed, stream=(_RANDOM_SELECT_STREAM,))
        baseline_rows = np.sort(rng.choice(pool_matrix.n, size=config.n_final, replace=False))
        metrics_pre = metric_report(
            pool_matrix.take_rows(baseline_rows),
            reference,
            seed=derive_seed(config.seed, _SW_PRE_TAG),
        )
        metrics_post = metric_report(
            pool_matrix.take_rows(selected_rows),
            reference,
            seed=derive_seed(config.seed, _SW_POST_TAG),
        )

    selected_ids = [row_to_id[int(r)] for r in selected_rows]
    counts = {}
    for sid in selected_ids:
        counts[sid] = counts.get(sid, 0) + 1
    report = AlignmentReport(
        config=_config_snapshot(config),
        pool_sizes={
            "n_pool": pool_matrix.n,
            "m_reference": reference.n,
            "n_retained": int(kept.size),
            "n_is_raw": int(candidate_rows.size),
            "n_is_dedup": int(distinct_rows.size),
            "n_final": config.n_final,
        },
        is_weights=weight_summary,
        sinkhorn_batches=batch_details,
        metrics_random_select=metrics_pre.to_record(),
        metrics_aligned=metrics_post.to_record(),
        selected=[[sid, counts[sid]] for sid in sorted(counts)],
        selected_ids=selected_ids,
        timings=timings,
    )
    return selected_ids, report

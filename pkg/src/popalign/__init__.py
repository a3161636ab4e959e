"""Population-level alignment of persona response pools.

Selects, from a large candidate pool of persona-attached response vectors, a
subset whose empirical distribution matches a reference human distribution:
KDE-based importance resampling followed by entropic optimal transport. Ships
the divergence-metric suite used to judge alignment and a cosine-retrieval
module for group-specific subsetting.
"""

from .checks import (
    ConvergenceSweepResult,
    GapRecord,
    convergence_sweep,
    entropic_gap,
    wasserstein2_1d,
)
from .core import (
    AlignmentConfig,
    ItemWeights,
    PersonaRecord,
    ResponseMatrix,
    ValidatedPool,
    validate_pool,
)
from .errors import PopalignError
from .kde import (
    DensityModel,
    fit_kde,
    importance_log_ratios,
    importance_weights,
    log_density,
    log_density_many,
)
from .metrics import (
    MetricReport,
    amw,
    frechet_distance,
    mae_corr,
    metric_report,
    mmd,
    mmd_unsquared,
    pearson_corr_matrix,
    sliced_wasserstein,
    wasserstein_1d,
)
from .ot import (
    CostMatrix,
    TransportPlan,
    batched_ot_weights,
    cost_matrix,
    exact_ot_small,
    gibbs_kernel,
    ot_weights,
    resample_ot,
    sinkhorn,
    transport_cost,
)
from .pipeline import (
    AlignmentReport,
    collect_responses,
    report_json,
    run_alignment,
    truncate_by_weight,
)
from .retrieval import (
    EmbeddingIndex,
    TrainingPair,
    build_training_pairs,
    contrastive_loss,
    contrastive_loss_from_scores,
    cosine_similarity,
    group_subset,
    top_k_retrieve,
)
from .rng import derive_seed, rng_from_seed
from .sampling import SamplingProbabilities, multinomial_draw, normalize_weights
from .synthetic import (
    PRESETS,
    TraitResponder,
    make_trait_personas,
    parse_trait_narrative,
    sample_population,
    trait_narrative,
)

__version__ = "0.1.0"

__all__ = [
    "AlignmentConfig",
    "AlignmentReport",
    "ConvergenceSweepResult",
    "CostMatrix",
    "DensityModel",
    "EmbeddingIndex",
    "GapRecord",
    "ItemWeights",
    "MetricReport",
    "PersonaRecord",
    "PopalignError",
    "PRESETS",
    "ResponseMatrix",
    "SamplingProbabilities",
    "TrainingPair",
    "TraitResponder",
    "TransportPlan",
    "ValidatedPool",
    "amw",
    "batched_ot_weights",
    "build_training_pairs",
    "collect_responses",
    "contrastive_loss",
    "contrastive_loss_from_scores",
    "convergence_sweep",
    "cosine_similarity",
    "cost_matrix",
    "derive_seed",
    "entropic_gap",
    "exact_ot_small",
    "fit_kde",
    "frechet_distance",
    "gibbs_kernel",
    "group_subset",
    "importance_log_ratios",
    "importance_weights",
    "log_density",
    "log_density_many",
    "mae_corr",
    "make_trait_personas",
    "metric_report",
    "mmd",
    "mmd_unsquared",
    "multinomial_draw",
    "normalize_weights",
    "ot_weights",
    "parse_trait_narrative",
    "pearson_corr_matrix",
    "report_json",
    "resample_ot",
    "rng_from_seed",
    "run_alignment",
    "sample_population",
    "sinkhorn",
    "sliced_wasserstein",
    "top_k_retrieve",
    "trait_narrative",
    "transport_cost",
    "truncate_by_weight",
    "validate_pool",
    "wasserstein2_1d",
    "wasserstein_1d",
]

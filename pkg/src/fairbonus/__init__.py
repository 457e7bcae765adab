"""Explainable bonus-point compensation for group disparity in score-based
top-k rankings.

The core workflow: load or generate a RecordTable, define a RankingSpec, and
run the sampling-based disparity compensation optimizer to obtain the bonus
vector that minimizes a pluggable fairness objective.
"""

from .baselines import ConstraintSet, QuotaSpec, greedy_reranker, grid_search_oracle, quota_select
from .datasets import (
    DatasetConfig,
    DatasetSummary,
    GroupSpec,
    ScoreDist,
    SyntheticSpec,
    compas_ranking_spec,
    generate_synthetic,
    load_compas,
    load_csv,
    summarize,
    write_csv,
)
from .dca import (
    AdamParams,
    DcaConfig,
    DcaResult,
    ScaledBonus,
    TrajectoryPoint,
    core_dca,
    full_dca_step,
    refine,
    run_dca,
    scale_bonus_for_utility,
)
from .errors import ConfigError, DataError, DataWarning, FairbonusError, InfeasibleError
from .metrics import (
    DisparityVector,
    MetricFamily,
    MetricKind,
    binary_groups,
    disparate_impact_scaled,
    disparity,
    evaluate_objective,
    exposure_ddp,
    fpr_gap,
    log_discounted_disparity,
    ndcg_at_k,
    utility_weights,
)
from .model import (
    BonusVector,
    Orientation,
    RankingSpec,
    RecordTable,
    SampleSpec,
    SelectionResult,
    draw_sample,
    k_count_for,
    rank_order,
    recommended_sample_size,
    rng_for,
    score,
    select_top_k,
)

__version__ = "0.1.0"

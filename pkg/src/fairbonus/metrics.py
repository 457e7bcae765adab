"""Fairness and utility metrics over top-k selections and whole rankings.

All group metrics share one shape: a signed per-attribute component in
[-1, 1] where 0 means parity, negative means the attribute-1 group is
underrepresented among the selected, and the vector's L2 norm summarizes
overall unfairness. That common shape is what lets the optimizer treat the
metrics interchangeably.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DataError, DataWarning
from .model import (
    BonusVector,
    RankingSpec,
    RecordTable,
    SelectionResult,
    k_count_for,
    rank_order,
    score,
    select_top_k,
)

__all__ = [
    "DisparityVector",
    "MetricFamily",
    "MetricKind",
    "disparity",
    "log_discounted_disparity",
    "disparate_impact_scaled",
    "fpr_gap",
    "ndcg_at_k",
    "exposure_ddp",
    "binary_groups",
    "utility_weights",
    "evaluate_objective",
]


@dataclass(frozen=True)
class DisparityVector:
    """Signed per-attribute fairness components plus an L2 norm summary.

    For plain disparity, each component is mean(attr | selected) minus
    mean(attr | everyone): the distance between the selected-set centroid and
    the population centroid along that attribute.
    """

    components: Mapping[str, float]
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        frozen: dict[str, float] = {}
        for attr, value in self.components.items():
            v = float(value)
            if not math.isfinite(v):
                raise DataError(f"component for {attr!r} is not finite")
            if abs(v) > 1.0 + 1e-9:
                raise DataError(f"component for {attr!r} is {v}, outside [-1, 1]")
            frozen[str(attr)] = min(1.0, max(-1.0, v))
        object.__setattr__(self, "components", frozen)

    @property
    def norm(self) -> float:
        return math.sqrt(sum(v * v for v in self.components.values()))

    @property
    def attrs(self) -> tuple[str, ...]:
        return tuple(self.components)

    def as_array(self, attrs: Sequence[str] | None = None) -> np.ndarray:
        names = self.attrs if attrs is None else attrs
        return np.array([self.components[a] for a in names], dtype=np.float64)


class MetricFamily(Enum):
    DISPARITY = "disparity"
    DISPARATE_IMPACT = "di"
    FPR_GAP = "fpr"


@dataclass(frozen=True)
class MetricKind:
    """Which fairness objective to evaluate, at a single selection fraction
    or logarithmically discounted over ranking checkpoints up to k_max."""

    family: MetricFamily = MetricFamily.DISPARITY
    log_discounted: bool = False
    k_max: float = 1.0
    checkpoint_step: int = 10

    def __post_init__(self):
        if not isinstance(self.family, MetricFamily):
            raise ConfigError(f"family must be a MetricFamily, got {self.family!r}")
        if not 0.0 < self.k_max <= 1.0:
            raise ConfigError(f"k_max must lie in (0, 1], got {self.k_max!r}")
        if int(self.checkpoint_step) != self.checkpoint_step or self.checkpoint_step < 1:
            raise ConfigError(f"checkpoint_step must be a positive integer, got {self.checkpoint_step!r}")


def _selection_mask(table: RecordTable, selection: SelectionResult) -> np.ndarray:
    if selection.selected_ids.size == 0:
        raise DataError("selection is empty")
    mask = np.zeros(table.n_records, dtype=bool)
    mask[table.indices_for(selection.selected_ids)] = True
    return mask


def _binary_mask(table: RecordTable, attr: str, metric: str) -> np.ndarray:
    if attr not in table.fairness_attrs:
        raise ConfigError(f"unknown fairness attribute {attr!r}")
    if attr not in table.binary_attrs:
        raise ConfigError(f"{metric} requires binary fairness attributes; {attr!r} is continuous")
    return table.fairness_attrs[attr] == 1.0


def disparity(
    table: RecordTable, selection: SelectionResult, fairness_attrs: Sequence[str] | None = None
) -> DisparityVector:
    """Selected-set centroid minus population centroid, per fairness attribute.

    Negative components mean the attribute-1 (or high-value) group appears
    less among the selected than in the population.
    """
    attrs = table.fairness_names if fairness_attrs is None else tuple(fairness_attrs)
    idx = table.indices_for(selection.selected_ids)
    if idx.size == 0:
        raise DataError("selection is empty")
    F = table.fairness_matrix(attrs)
    comps = F[idx].mean(axis=0) - F.mean(axis=0)
    return DisparityVector(dict(zip(attrs, comps)))


def _di_component(p1, p0) -> np.ndarray:
    """Scaled disparate impact: sign * (1 - min selection-rate ratio).

    0 at equal rates; -1 when the attribute-1 group is never selected while
    the other group is; +1 in the opposite extreme.
    """
    p1 = np.asarray(p1, dtype=np.float64)
    p0 = np.asarray(p0, dtype=np.float64)
    safe1 = np.where(p1 > 0, p1, 1.0)
    safe0 = np.where(p0 > 0, p0, 1.0)
    ratio = np.minimum(p0 / safe1, p1 / safe0)
    scaled = np.sign(p1 - p0) * (1.0 - ratio)
    return np.where((p1 > 0) & (p0 > 0), scaled, np.where(p1 == p0, 0.0, np.where(p1 == 0.0, -1.0, 1.0)))


def disparate_impact_scaled(
    table: RecordTable, selection: SelectionResult, fairness_attrs: Sequence[str] | None = None
) -> DisparityVector:
    """Disparate impact per binary attribute, rescaled to [-1, 1] so it can
    serve as an optimizer objective alongside disparity."""
    attrs = table.fairness_names if fairness_attrs is None else tuple(fairness_attrs)
    mask = _selection_mask(table, selection)
    comps: dict[str, float] = {}
    for attr in attrs:
        g = _binary_mask(table, attr, "disparate impact")
        n1 = int(g.sum())
        n0 = table.n_records - n1
        if n1 == 0 or n0 == 0:
            raise DataError(f"attribute {attr!r} does not split the table into two nonempty groups")
        p1 = float(np.count_nonzero(mask & g)) / n1
        p0 = float(np.count_nonzero(mask & ~g)) / n0
        comps[attr] = float(_di_component(p1, p0))
    return DisparityVector(comps)


def fpr_gap(
    table: RecordTable, selection: SelectionResult, fairness_attrs: Sequence[str] | None = None
) -> DisparityVector:
    """Per-group false-positive rate minus the overall false-positive rate,
    treating the selection as the predicted-positive set."""
    if table.outcome is None:
        raise ConfigError("FPR gap requires an outcome column")
    attrs = table.fairness_names if fairness_attrs is None else tuple(fairness_attrs)
    mask = _selection_mask(table, selection)
    neg = table.outcome == 0.0
    n_neg = int(neg.sum())
    if n_neg == 0:
        raise DataError("no real negatives in the table; FPR is undefined")
    overall = float(np.count_nonzero(mask & neg)) / n_neg
    comps: dict[str, float] = {}
    warns: list[str] = []
    for attr in attrs:
        g = _binary_mask(table, attr, "FPR gap")
        g_neg = g & neg
        n_g_neg = int(g_neg.sum())
        if n_g_neg == 0:
            comps[attr] = 0.0
            warns.append(f"group {attr!r} has no real negatives; FPR gap set to 0")
            continue
        fpr_g = float(np.count_nonzero(mask & g_neg)) / n_g_neg
        comps[attr] = float(np.clip(fpr_g - overall, -1.0, 1.0))
    return DisparityVector(comps, tuple(warns))


def _checkpoint_ranks(
    n_records: int, checkpoints: Iterable[float] | None, k_max: float, step: int
) -> np.ndarray:
    """Ranking depths at which a discounted metric is evaluated.

    Generated checkpoints are absolute ranks step, 2*step, ... up to the rank
    that k_max selects. Explicit checkpoints may be given as absolute ranks
    (integers >= 1) or selection fractions (floats < 1).
    """
    limit = n_records if k_max == 1.0 else k_count_for(k_max, n_records)
    if checkpoints is None:
        ranks = np.arange(step, limit + 1, step, dtype=np.int64)
        if ranks.size == 0:
            ranks = np.array([limit], dtype=np.int64)
        return ranks
    given = list(checkpoints)
    if not given:
        raise ConfigError("checkpoint set must not be empty")
    ranks_list: list[int] = []
    for c in given:
        if 0 < c < 1:
            ranks_list.append(max(1, math.floor(c * n_records)))
        elif c >= 1 and float(c) == int(c):
            ranks_list.append(int(c))
        else:
            raise ConfigError(f"checkpoint {c!r} is neither a fraction in (0, 1) nor an integer rank")
    ranks = np.unique(np.asarray(ranks_list, dtype=np.int64))
    if ranks.max() > limit:
        raise ConfigError(f"checkpoint rank {int(ranks.max())} exceeds the k_max={k_max} limit of {limit}")
    return ranks


def _log_discounted_components(
    table: RecordTable,
    spec: RankingSpec,
    bonus: BonusVector | None,
    family: MetricFamily,
    ranks: np.ndarray,
    attrs: tuple[str, ...],
) -> tuple[np.ndarray, list[str]]:
    order = rank_order(table, spec, bonus)
    w = 1.0 / np.log2(ranks + 1.0)
    z = w.sum()
    warns: list[str] = []

    if family is MetricFamily.DISPARITY:
        F = table.fairness_matrix(attrs)
        cum = np.cumsum(F[order], axis=0)
        prefix_means = cum[ranks - 1] / ranks[:, None]
        per_rank = prefix_means - F.mean(axis=0)
        return (w[:, None] * per_rank).sum(axis=0) / z, warns

    if family is MetricFamily.DISPARATE_IMPACT:
        comps = []
        for attr in attrs:
            g = _binary_mask(table, attr, "disparate impact")
            n1 = int(g.sum())
            n0 = table.n_records - n1
            if n1 == 0 or n0 == 0:
                raise DataError(f"attribute {attr!r} does not split the table into two nonempty groups")
            cnt1 = np.cumsum(g[order].astype(np.float64))[ranks - 1]
            p1 = cnt1 / n1
            p0 = (ranks - cnt1) / n0
            comps.append((w * _di_component(p1, p0)).sum() / z)
        return np.asarray(comps), warns

    if table.outcome is None:
        raise ConfigError("FPR gap requires an outcome column")
    neg = table.outcome == 0.0
    n_neg = int(neg.sum())
    if n_neg == 0:
        raise DataError("no real negatives in the table; FPR is undefined")
    cum_neg = np.cumsum(neg[order].astype(np.float64))[ranks - 1]
    overall = cum_neg / n_neg
    comps = []
    for attr in attrs:
        g = _binary_mask(table, attr, "FPR gap")
        g_neg = g & neg
        n_g_neg = int(g_neg.sum())
        if n_g_neg == 0:
            comps.append(0.0)
            warns.append(f"group {attr!r} has no real negatives; FPR gap set to 0")
            continue
        fpr_g = np.cumsum(g_neg[order].astype(np.float64))[ranks - 1] / n_g_neg
        comps.append((w * np.clip(fpr_g - overall, -1.0, 1.0)).sum() / z)
    return np.asarray(comps), warns


def log_discounted_disparity(
    table: RecordTable,
    spec: RankingSpec,
    bonus: BonusVector | None = None,
    checkpoints: Iterable[float] | None = None,
    k_max: float = 1.0,
    step: int = 10,
    fairness_attrs: Sequence[str] | None = None,
) -> DisparityVector:
    """Disparity averaged over ranking checkpoints with 1/log2(rank+1)
    weights, normalized so a constant per-checkpoint disparity of c yields c.

    Earlier checkpoints weigh more, matching settings where the realized
    selection size is unknown but small selections matter most.
    """
    attrs = table.fairness_names if fairness_attrs is None else tuple(fairness_attrs)
    ranks = _checkpoint_ranks(table.n_records, checkpoints, k_max, step)
    comps, warns = _log_discounted_components(table, spec, bonus, MetricFamily.DISPARITY, ranks, attrs)
    return DisparityVector(dict(zip(attrs, comps)), tuple(warns))


def ndcg_at_k(
    original_order: np.ndarray,
    adjusted_order: np.ndarray,
    k: float,
    weights: np.ndarray,
) -> float:
    """DCG of the adjusted ranking over DCG of the original ranking, both
    truncated at floor(k*n); 1.0 means the intervention cost no utility.

    Orders are row positions (best first) over the same record set; weights
    are the per-record original scores, which must be nonnegative.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if not np.all(np.isfinite(weights)):
        raise DataError("utility weights contain non-finite values")
    if weights.min() < 0:
        raise ConfigError("utility weights must be nonnegative")
    n = weights.size
    orig = np.asarray(original_order, dtype=np.int64)
    adj = np.asarray(adjusted_order, dtype=np.int64)
    for name, order in (("original", orig), ("adjusted", adj)):
        if order.shape != (n,) or not np.array_equal(np.sort(order), np.arange(n)):
            raise ConfigError(f"{name} ranking is not a permutation of all {n} records")
    kc = k_count_for(k, n)
    disc = 1.0 / np.log2(np.arange(2, kc + 2, dtype=np.float64))
    ideal = float(weights[orig[:kc]] @ disc)
    if ideal == 0.0:
        raise DataError("ideal DCG is zero; utility weights vanish over the top-k")
    return float(weights[adj[:kc]] @ disc) / ideal


def binary_groups(table: RecordTable, attrs: Sequence[str] | None = None) -> dict[str, np.ndarray]:
    """Attribute-1 membership masks for binary fairness attributes.

    Continuous attributes are excluded with a warning since exposure-based
    group metrics have no notion of partial membership.
    """
    names = table.fairness_names if attrs is None else tuple(attrs)
    groups: dict[str, np.ndarray] = {}
    for attr in names:
        if attr not in table.fairness_attrs:
            raise ConfigError(f"unknown fairness attribute {attr!r}")
        if attr not in table.binary_attrs:
            warnings.warn(f"attribute {attr!r} is continuous; excluded from exposure groups", DataWarning, stacklevel=2)
            continue
        groups[attr] = table.fairness_attrs[attr] == 1.0
    return groups


def exposure_ddp(order: np.ndarray, groups: Mapping[str, np.ndarray]) -> float:
    """Largest pairwise gap in per-capita exposure between groups.

    Exposure of a record at 1-based rank r is 1/log2(r+1), summed over the
    group and divided by group size. 0 means all groups sit equally high in
    the ranking on average.
    """
    order = np.asarray(order, dtype=np.int64)
    n = order.size
    exposure = np.empty(n, dtype=np.float64)
    exposure[order] = 1.0 / np.log2(np.arange(1, n + 1, dtype=np.float64) + 1.0)
    per_capita: list[float] = []
    for name, mask in groups.items():
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (n,):
            raise ConfigError(f"group {name!r} mask has shape {mask.shape}, expected ({n},)")
        size = int(mask.sum())
        if size == 0:
            warnings.warn(f"group {name!r} is empty; excluded from DDP", DataWarning, stacklevel=2)
            continue
        per_capita.append(float(exposure[mask].sum()) / size)
    if len(per_capita) < 2:
        return 0.0
    return max(per_capita) - min(per_capita)


def utility_weights(table: RecordTable, spec: RankingSpec) -> np.ndarray:
    """Nonnegative per-record utility for DCG: the raw composite score, mapped
    onto the positive scale for lower-is-better rankings."""
    base = score(table, spec)
    if spec.orientation.sign < 0:
        base = base + spec.score_scale
    return np.maximum(base, 0.0)


def evaluate_objective(
    table: RecordTable,
    spec: RankingSpec,
    bonus: BonusVector | None,
    kind: MetricKind = MetricKind(),
) -> DisparityVector:
    """The configured fairness objective under the given bonus points."""
    if kind.log_discounted:
        attrs = table.fairness_names
        ranks = _checkpoint_ranks(table.n_records, None, kind.k_max, kind.checkpoint_step)
        comps, warns = _log_discounted_components(table, spec, bonus, kind.family, ranks, attrs)
        return DisparityVector(dict(zip(attrs, comps)), tuple(warns))
    selection = select_top_k(score(table, spec, bonus), table, spec.k)
    if kind.family is MetricFamily.DISPARITY:
        return disparity(table, selection)
    if kind.family is MetricFamily.DISPARATE_IMPACT:
        return disparate_impact_scaled(table, selection)
    return fpr_gap(table, selection)

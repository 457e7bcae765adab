"""Comparison selection methods: quota set-asides, utility-greedy re-ranking
under group-count constraints, and an exhaustive grid-search oracle over
bonus vectors."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, DataError, InfeasibleError
from .metrics import DisparityVector, MetricKind, evaluate_objective
from .model import (
    BonusVector,
    RankingSpec,
    RecordTable,
    SelectionResult,
    k_count_for,
    score,
)

__all__ = [
    "QuotaSpec",
    "ConstraintSet",
    "quota_select",
    "greedy_reranker",
    "grid_search_oracle",
]


@dataclass(frozen=True)
class QuotaSpec:
    """Reserve a fraction of the selection slots for records matching any of
    the given binary attributes."""

    quota_fraction: float
    protected_attrs: tuple[str, ...]

    def __post_init__(self):
        if not 0.0 <= self.quota_fraction <= 1.0:
            raise ConfigError(f"quota_fraction must lie in [0, 1], got {self.quota_fraction!r}")
        attrs = tuple(self.protected_attrs)
        if not attrs:
            raise ConfigError("quota needs at least one protected attribute")
        object.__setattr__(self, "protected_attrs", attrs)


def _rank_positions(scores: np.ndarray, ids: np.ndarray) -> np.ndarray:
    return np.lexsort((ids, -scores))


def _floor_warning(k: float, n: int) -> tuple[str, ...]:
    if math.floor(k * n) == 0:
        return (f"floor(k*n) = 0 for k={k}, n={n}; selecting 1 record",)
    return ()


def quota_select(table: RecordTable, spec: RankingSpec, quota: QuotaSpec) -> SelectionResult:
    """Top-k with reserved slots: the best protected records fill
    floor(quota_fraction * k_count) seats, everyone competes for the rest."""
    for attr in quota.protected_attrs:
        if attr not in table.fairness_attrs:
            raise ConfigError(f"unknown fairness attribute {attr!r}")
        if attr not in table.binary_attrs:
            raise ConfigError(f"quota predicates need binary attributes; {attr!r} is continuous")
    scores = score(table, spec)
    kc = k_count_for(spec.k, table.n_records)
    warns = list(_floor_warning(spec.k, table.n_records))
    reserved = math.floor(quota.quota_fraction * kc)

    order = _rank_positions(scores, table.record_ids)
    protected = np.zeros(table.n_records, dtype=bool)
    for attr in quota.protected_attrs:
        protected |= table.fairness_attrs[attr] == 1.0

    reserved_picks = order[protected[order]][:reserved]
    if reserved_picks.size < reserved:
        warns.append(
            f"only {reserved_picks.size} protected records available for {reserved} reserved slots"
        )
    taken = np.zeros(table.n_records, dtype=bool)
    taken[reserved_picks] = True
    open_slots = kc - reserved_picks.size
    open_picks = order[~taken[order]][:open_slots]
    taken[open_picks] = True
    final = order[taken[order]]  # re-sorted by score, ties by id
    return SelectionResult(
        selected_ids=table.record_ids[final],
        threshold_score=float(scores[final[-1]]),
        k_count=kc,
        warnings=tuple(warns),
    )


@dataclass(frozen=True)
class ConstraintSet:
    """Minimum selected counts per binary fairness attribute.

    Feasibility is judged by the conservative sum rule: the minima must fit
    in the selection even if no record counted toward two of them.
    """

    minimums: Mapping[str, int]

    def __post_init__(self):
        frozen: dict[str, int] = {}
        for attr, m in self.minimums.items():
            if int(m) != m or m < 0:
                raise ConfigError(f"minimum for {attr!r} must be a nonnegative integer, got {m!r}")
            frozen[str(attr)] = int(m)
        object.__setattr__(self, "minimums", frozen)

    @classmethod
    def from_target_disparity(
        cls, table: RecordTable, target: DisparityVector | Mapping[str, float], k_count: int
    ) -> "ConstraintSet":
        """Group minima that realize a target disparity component per
        attribute: ceil((population mean + target) * k_count)."""
        components = target.components if isinstance(target, DisparityVector) else dict(target)
        minima = {}
        for attr, component in components.items():
            if attr not in table.fairness_attrs:
                raise ConfigError(f"unknown fairness attribute {attr!r}")
            wanted = math.ceil((float(table.fairness_attrs[attr].mean()) + component) * k_count)
            minima[attr] = min(max(wanted, 0), k_count)
        return cls(minima)

    @classmethod
    def from_selection(
        cls, table: RecordTable, selection: SelectionResult, attrs: Sequence[str] | None = None
    ) -> "ConstraintSet":
        """Group counts another method achieved, reusable as constraints."""
        names = table.fairness_names if attrs is None else tuple(attrs)
        idx = table.indices_for(selection.selected_ids)
        minima = {}
        for attr in names:
            if attr not in table.binary_attrs:
                continue
            minima[attr] = int(np.count_nonzero(table.fairness_attrs[attr][idx] == 1.0))
        return cls(minima)


def greedy_reranker(table: RecordTable, spec: RankingSpec, constraints: ConstraintSet) -> SelectionResult:
    """Build the selection position by position, always placing the
    best-scoring record that still leaves every group minimum reachable.

    With empty constraints this reproduces plain top-k exactly.
    """
    scores = score(table, spec)
    n = table.n_records
    kc = k_count_for(spec.k, n)
    warns = _floor_warning(spec.k, n)

    groups: dict[str, np.ndarray] = {}
    for attr in constraints.minimums:
        if attr not in table.fairness_attrs:
            raise ConfigError(f"unknown fairness attribute {attr!r}")
        if attr not in table.binary_attrs:
            raise ConfigError(f"count constraints need binary attributes; {attr!r} is continuous")
        groups[attr] = table.fairness_attrs[attr] == 1.0

    for attr, minimum in constraints.minimums.items():
        available = int(groups[attr].sum())
        if minimum > available:
            raise InfeasibleError(f"group {attr!r} has {available} members; cannot select {minimum}")
    if sum(constraints.minimums.values()) > kc:
        raise InfeasibleError(
            f"group minima sum to {sum(constraints.minimums.values())} but only {kc} slots exist"
        )

    order = _rank_positions(scores, table.record_ids)
    rank_of = np.empty(n, dtype=np.int64)
    rank_of[order] = np.arange(n)
    group_orders = {attr: order[mask[order]] for attr, mask in groups.items()}
    group_ptr = {attr: 0 for attr in groups}
    deficits = dict(constraints.minimums)
    placed = np.zeros(n, dtype=bool)
    chosen: list[int] = []
    global_ptr = 0

    for position in range(kc):
        remaining = kc - position
        total_deficit = sum(deficits.values())
        if total_deficit < remaining:
            while placed[order[global_ptr]]:
                global_ptr += 1
            pick = order[global_ptr]
        else:
            # every remaining slot is spoken for: the pick must cover a deficit
            pick = -1
            for attr, d in deficits.items():
                if d == 0:
                    continue
                g_order = group_orders[attr]
                ptr = group_ptr[attr]
                while placed[g_order[ptr]]:
                    ptr += 1
                group_ptr[attr] = ptr
                candidate = g_order[ptr]
                if pick < 0 or rank_of[candidate] < rank_of[pick]:
                    pick = candidate
        placed[pick] = True
        chosen.append(pick)
        for attr, mask in groups.items():
            if deficits[attr] > 0 and mask[pick]:
                deficits[attr] -= 1

    final = np.asarray(chosen, dtype=np.int64)
    return SelectionResult(
        selected_ids=table.record_ids[final],
        threshold_score=float(scores[final].min()),
        k_count=kc,
        warnings=warns,
    )


def grid_search_oracle(
    table: RecordTable,
    spec: RankingSpec,
    granularity: float,
    bonus_max: float,
    objective: MetricKind = MetricKind(),
    grid_limit: int = 10**7,
) -> BonusVector:
    """Exhaustively evaluate every bonus vector on the granularity grid up to
    bonus_max and return the one minimizing the full-table objective norm.

    Ties go to the smallest L1 total, then lexicographically smallest vector,
    so the result is deterministic and the zero vector wins at parity.
    """
    if not (math.isfinite(granularity) and granularity > 0):
        raise ConfigError(f"granularity must be positive, got {granularity!r}")
    if not (math.isfinite(bonus_max) and bonus_max >= 0):
        raise ConfigError(f"bonus_max must be nonnegative, got {bonus_max!r}")
    attrs = table.fairness_names
    if not attrs:
        raise ConfigError("table has no fairness attributes")
    steps = math.floor(bonus_max / granularity + 1e-9)
    values = [i * granularity for i in range(steps + 1)]
    n_points = (steps + 1) ** len(attrs)
    if n_points > grid_limit:
        raise ConfigError(
            f"grid has {n_points} points (> {grid_limit}); use a coarser granularity or smaller bonus_max"
        )

    best: tuple[float, float, tuple[float, ...]] | None = None
    for combo in itertools.product(values, repeat=len(attrs)):
        bonus = BonusVector(dict(zip(attrs, combo)), granularity)
        norm = evaluate_objective(table, spec, bonus, objective).norm
        key = (norm, sum(combo), combo)
        if best is None or key < best:
            best = key
    assert best is not None
    return BonusVector(dict(zip(attrs, best[2])), granularity)

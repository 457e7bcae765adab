"""Derivative-free bonus-point optimizer.

The objective (disparity or a compatible [-1, 1] fairness vector) is a step
function of the bonus points, so there is no usable gradient. The descent
uses the objective vector itself as the step direction: each iteration draws
a small random sample, measures the objective on it, and moves the bonus
vector against it. A second pass refines the estimate with Adam-style
per-component adaptive steps, then averages and rounds the late iterates.

Because every iteration touches only a fixed-size sample, the loop cost is
independent of the dataset size.
"""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError
from .metrics import DisparityVector, MetricKind, evaluate_objective, ndcg_at_k, utility_weights
from .model import (
    BonusVector,
    RankingSpec,
    RecordTable,
    SampleSpec,
    draw_sample,
    rank_order,
    rng_for,
)

__all__ = [
    "AdamParams",
    "DcaConfig",
    "TrajectoryPoint",
    "DcaResult",
    "ScaledBonus",
    "core_dca",
    "refine",
    "run_dca",
    "full_dca_step",
    "scale_bonus_for_utility",
]

# Stream key reserved for drawing the random starting vector, so sample
# draws (keyed by iteration counter) never share a stream with it.
_INIT_KEY = 1 << 40


@dataclass(frozen=True)
class AdamParams:
    alpha: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.alpha <= 0:
            raise ConfigError(f"adam alpha must be positive, got {self.alpha!r}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("adam beta1/beta2 must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ConfigError(f"adam epsilon must be positive, got {self.epsilon!r}")


@dataclass(frozen=True)
class DcaConfig:
    """Optimizer schedule, caps, objective, and seed.

    The descent pass walks the decreasing learning rates for
    iterations_per_rate steps each; the refinement pass runs
    refine_iterations Adam steps and returns the rounded rolling average of
    the last rolling_average_window iterates. sample.seed is ignored here:
    every sample seed derives from master_seed and the iteration counter.
    """

    learning_rates: tuple[float, ...] = (1.0, 0.1)
    iterations_per_rate: int = 100
    refine_iterations: int = 100
    rolling_average_window: int = 100
    sample: SampleSpec = SampleSpec()
    granularity: float = 0.5
    bonus_min: float = 0.0
    bonus_max: float | None = None
    objective: MetricKind = MetricKind()
    master_seed: int = 0
    adam: AdamParams = AdamParams()

    def __post_init__(self):
        rates = tuple(float(r) for r in self.learning_rates)
        if not rates or any(r <= 0 for r in rates):
            raise ConfigError("learning_rates must be a nonempty list of positive values")
        if any(later >= earlier for earlier, later in zip(rates, rates[1:])):
            raise ConfigError(f"learning_rates must be strictly decreasing, got {rates}")
        object.__setattr__(self, "learning_rates", rates)
        if self.iterations_per_rate < 1:
            raise ConfigError("iterations_per_rate must be at least 1")
        if self.refine_iterations < 1:
            raise ConfigError("refine_iterations must be at least 1")
        if self.rolling_average_window < 1:
            raise ConfigError("rolling_average_window must be at least 1")
        if not (math.isfinite(self.granularity) and self.granularity > 0):
            raise ConfigError(f"granularity must be positive, got {self.granularity!r}")
        if self.bonus_min < 0:
            raise ConfigError("bonus_min must be nonnegative; bonuses are never penalties")
        if self.bonus_max is not None and self.bonus_max < self.bonus_min:
            raise ConfigError(f"bonus_max {self.bonus_max} is below bonus_min {self.bonus_min}")
        lo, hi = _grid_bounds(self)
        if hi < lo:
            raise ConfigError(
                f"no multiple of granularity {self.granularity} lies within [{self.bonus_min}, {self.bonus_max}]"
            )
        if not isinstance(self.objective, MetricKind):
            raise ConfigError(f"objective must be a MetricKind, got {self.objective!r}")
        if not isinstance(self.sample, SampleSpec):
            raise ConfigError(f"sample must be a SampleSpec, got {self.sample!r}")
        if not isinstance(self.adam, AdamParams):
            raise ConfigError(f"adam must be AdamParams, got {self.adam!r}")


@dataclass(frozen=True)
class TrajectoryPoint:
    """One optimizer iteration: the post-update bonus values and the norm of
    the sampled objective that produced the update."""

    stage: str
    learning_rate: float | None
    bonuses: tuple[float, ...]
    objective_norm: float


@dataclass(frozen=True)
class DcaResult:
    """Final rounded bonus vector plus the full-table before/after report."""

    bonus: BonusVector
    trajectory: tuple[TrajectoryPoint, ...]
    objective_before: DisparityVector
    objective_after: DisparityVector
    ndcg_after: float
    loop_seconds: float
    wall_seconds: float
    config: DcaConfig


def _grid_bounds(config: DcaConfig) -> tuple[float, float]:
    """Caps aligned inward onto the granularity grid, so rounded results can
    satisfy the caps and the grid at the same time."""
    g = config.granularity
    lo = math.ceil(config.bonus_min / g - 1e-9) * g
    hi = math.inf if config.bonus_max is None else math.floor(config.bonus_max / g + 1e-9) * g
    return lo, hi


def _clamp(values: np.ndarray, config: DcaConfig) -> np.ndarray:
    hi = math.inf if config.bonus_max is None else config.bonus_max
    return np.clip(values, config.bonus_min, hi)


def _sample_objective(
    table: RecordTable,
    spec: RankingSpec,
    config: DcaConfig,
    attrs: tuple[str, ...],
    b: np.ndarray,
    counter: int,
) -> np.ndarray:
    sample_spec = dataclasses.replace(config.sample, seed=config.master_seed)
    sample = draw_sample(table, sample_spec, draw_index=counter)
    bonus = BonusVector.from_array(attrs, b, config.granularity)
    vec = evaluate_objective(sample, spec, bonus, config.objective)
    return vec.as_array(attrs)


def core_dca(
    table: RecordTable, spec: RankingSpec, config: DcaConfig
) -> tuple[BonusVector, list[TrajectoryPoint]]:
    """Descent pass: walk decreasing learning rates, each for a fixed number
    of sampled steps, moving the bonus vector against the sampled objective.

    Returns the unrounded end-of-descent vector and the iteration log.
    """
    attrs = table.fairness_names
    if not attrs:
        raise ConfigError("table has no fairness attributes to compensate")
    b = rng_for(config.master_seed, _INIT_KEY).uniform(0.0, 4.0 * config.granularity, size=len(attrs))
    b = _clamp(b, config)
    trajectory: list[TrajectoryPoint] = []
    counter = 0
    for rate in config.learning_rates:
        for _ in range(config.iterations_per_rate):
            d = _sample_objective(table, spec, config, attrs, b, counter)
            counter += 1
            b = _clamp(b - rate * d, config)
            trajectory.append(TrajectoryPoint("core", rate, tuple(b.tolist()), float(np.linalg.norm(d))))
    return BonusVector.from_array(attrs, b, config.granularity), trajectory


def refine(
    table: RecordTable,
    spec: RankingSpec,
    config: DcaConfig,
    core_result: tuple[BonusVector, list[TrajectoryPoint]],
) -> DcaResult:
    """Refinement pass: Adam steps driven by the sampled objective, followed
    by a rolling average of the last iterates, rounding, and capping.

    The before/after objective is evaluated on the full table, not a sample.
    """
    core_bonus, core_trajectory = core_result
    attrs = table.fairness_names
    b = core_bonus.as_array(attrs)
    adam = config.adam
    m = np.zeros_like(b)
    v = np.zeros_like(b)
    counter = len(config.learning_rates) * config.iterations_per_rate
    iterates: list[np.ndarray] = []
    trajectory = list(core_trajectory)

    loop_start = time.perf_counter()
    for step in range(1, config.refine_iterations + 1):
        d = _sample_objective(table, spec, config, attrs, b, counter)
        counter += 1
        m = adam.beta1 * m + (1.0 - adam.beta1) * d
        v = adam.beta2 * v + (1.0 - adam.beta2) * d * d
        m_hat = m / (1.0 - adam.beta1**step)
        v_hat = v / (1.0 - adam.beta2**step)
        b = _clamp(b - adam.alpha * m_hat / (np.sqrt(v_hat) + adam.epsilon), config)
        iterates.append(b.copy())
        trajectory.append(TrajectoryPoint("refine", None, tuple(b.tolist()), float(np.linalg.norm(d))))
    loop_seconds = time.perf_counter() - loop_start

    window = min(config.rolling_average_window, len(iterates))
    averaged = np.mean(iterates[-window:], axis=0)
    g = config.granularity
    rounded = np.floor(averaged / g + 0.5) * g
    lo, hi = _grid_bounds(config)
    final = BonusVector.from_array(attrs, np.clip(rounded, lo, hi), g)

    before = evaluate_objective(table, spec, None, config.objective)
    after = evaluate_objective(table, spec, final, config.objective)
    weights = utility_weights(table, spec)
    ndcg = ndcg_at_k(rank_order(table, spec), rank_order(table, spec, final), spec.k, weights)
    return DcaResult(
        bonus=final,
        trajectory=tuple(trajectory),
        objective_before=before,
        objective_after=after,
        ndcg_after=ndcg,
        loop_seconds=loop_seconds,
        wall_seconds=loop_seconds,
        config=config,
    )


def run_dca(table: RecordTable, spec: RankingSpec, config: DcaConfig | None = None) -> DcaResult:
    """Descent followed by refinement; a pure function of (table, spec,
    config) including the master seed."""
    if config is None:
        config = DcaConfig()
    wall_start = time.perf_counter()
    core_start = time.perf_counter()
    core_result = core_dca(table, spec, config)
    core_seconds = time.perf_counter() - core_start
    result = refine(table, spec, config, core_result)
    return dataclasses.replace(
        result,
        loop_seconds=result.loop_seconds + core_seconds,
        wall_seconds=time.perf_counter() - wall_start,
    )


def full_dca_step(
    table: RecordTable,
    spec: RankingSpec,
    bonus: BonusVector,
    learning_rate: float,
    kind: MetricKind = MetricKind(),
) -> BonusVector:
    """One descent update computed on the entire table instead of a sample.

    Guarantees that whenever swapping an unselected record for a selected one
    would shrink the objective norm, the unselected record's score gains
    strictly more from the update.
    """
    if learning_rate <= 0:
        raise ConfigError(f"learning_rate must be positive, got {learning_rate!r}")
    attrs = table.fairness_names
    d = evaluate_objective(table, spec, bonus, kind).as_array(attrs)
    updated = np.maximum(bonus.as_array(attrs) - learning_rate * d, 0.0)
    return BonusVector.from_array(attrs, updated, bonus.granularity)


@dataclass(frozen=True)
class ScaledBonus:
    """Bonus vector rescaled toward a utility or fairness target."""

    bonus: BonusVector
    scale: float
    ndcg: float
    norm: float
    feasible: bool


def scale_bonus_for_utility(
    table: RecordTable,
    spec: RankingSpec,
    result: DcaResult,
    min_ndcg: float | None = None,
    max_norm: float | None = None,
    max_steps: int = 30,
) -> ScaledBonus:
    """Binary-search a multiplicative factor s in [0, 1] over the optimized
    bonus vector (rounded to granularity at every probe).

    With min_ndcg, returns the largest s whose nDCG stays at or above the
    floor; with max_norm, the smallest s whose objective norm reaches the
    ceiling. An unreachable target returns the boundary with feasible=False.
    """
    if (min_ndcg is None) == (max_norm is None):
        raise ConfigError("pass exactly one of min_ndcg or max_norm")
    config = result.config
    lo_cap, hi_cap = _grid_bounds(config)
    attrs = result.bonus.attrs
    weights = utility_weights(table, spec)
    original_order = rank_order(table, spec)
    cache: dict[tuple[float, ...], tuple[float, float]] = {}

    def probe(s: float) -> tuple[BonusVector, float, float]:
        values = np.clip(result.bonus.scaled(s).rounded().as_array(attrs), lo_cap, hi_cap)
        bonus = BonusVector.from_array(attrs, values, config.granularity)
        key = tuple(values.tolist())
        if key not in cache:
            norm = evaluate_objective(table, spec, bonus, config.objective).norm
            ndcg = ndcg_at_k(original_order, rank_order(table, spec, bonus), spec.k, weights)
            cache[key] = (ndcg, norm)
        ndcg, norm = cache[key]
        return bonus, ndcg, norm

    top = max(result.bonus.bonuses.values(), default=0.0)

    if min_ndcg is not None:
        ok = lambda ndcg, norm: ndcg >= min_ndcg
        prefer_large_s = True
    else:
        ok = lambda ndcg, norm: norm <= max_norm
        prefer_large_s = False

    b1, ndcg1, norm1 = probe(1.0)
    b0, ndcg0, norm0 = probe(0.0)
    if prefer_large_s:
        if ok(ndcg1, norm1):
            return ScaledBonus(b1, 1.0, ndcg1, norm1, True)
        if not ok(ndcg0, norm0):
            return ScaledBonus(b0, 0.0, ndcg0, norm0, False)
        lo, hi = 0.0, 1.0  # lo feasible, hi not
        best = ScaledBonus(b0, 0.0, ndcg0, norm0, True)
    else:
        if not ok(ndcg1, norm1):
            return ScaledBonus(b1, 1.0, ndcg1, norm1, False)
        if ok(ndcg0, norm0):
            return ScaledBonus(b0, 0.0, ndcg0, norm0, True)
        lo, hi = 0.0, 1.0  # hi feasible, lo not
        best = ScaledBonus(b1, 1.0, ndcg1, norm1, True)

    for _ in range(max_steps):
        if (hi - lo) * top < config.granularity / 2:
            break  # the bracket can no longer change any rounded component
        mid = (lo + hi) / 2.0
        bonus, ndcg, norm = probe(mid)
        if ok(ndcg, norm):
            if prefer_large_s:
                lo = mid
            else:
                hi = mid
            best = ScaledBonus(bonus, mid, ndcg, norm, True)
        else:
            if prefer_large_s:
                hi = mid
            else:
                lo = mid
    return best

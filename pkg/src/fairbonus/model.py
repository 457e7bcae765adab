"""Columnar record model, weighted-sum scoring with bonus points,
deterministic top-k selection, and seeded sampling.

Scores are kept in an internal higher-is-better orientation: rankings where a
lower raw score is preferable are negated at scoring time, so bonus points are
always nonnegative additions regardless of the underlying scale direction.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DataError, DataWarning

__all__ = [
    "Orientation",
    "RecordTable",
    "RankingSpec",
    "BonusVector",
    "SelectionResult",
    "SampleSpec",
    "k_count_for",
    "recommended_sample_size",
    "score",
    "rank_order",
    "select_top_k",
    "draw_sample",
    "rng_for",
]


class Orientation(Enum):
    """Direction of the raw ranking scale."""

    HIGHER_BETTER = "higher"
    LOWER_BETTER = "lower"

    @property
    def sign(self) -> float:
        return 1.0 if self is Orientation.HIGHER_BETTER else -1.0


def k_count_for(k: float, n_records: int) -> int:
    """Number of records a top-k fraction selects: floor(k * n), at least 1."""
    if not (isinstance(k, (int, float)) and 0.0 < k < 1.0):
        raise ConfigError(f"selection fraction k must lie strictly in (0, 1), got {k!r}")
    return max(1, math.floor(k * n_records))


def recommended_sample_size(k: float, rarest_frequency: float | None = None) -> int:
    """Smallest sample giving ~30 expected members both in the selection and
    in the rarest group: ceil(max(30/k, 30/r))."""
    if not 0.0 < k < 1.0:
        raise ConfigError(f"selection fraction k must lie in (0, 1), got {k!r}")
    bound = 30.0 / k
    if rarest_frequency is not None:
        if not 0.0 < rarest_frequency <= 1.0:
            raise ConfigError(f"rarest group frequency must lie in (0, 1], got {rarest_frequency!r}")
        bound = max(bound, 30.0 / rarest_frequency)
    return math.ceil(bound)


def rng_for(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for a (seed, stream...) pair.

    Streams derived from the same master seed with different keys are
    statistically independent and reproducible across platforms.
    """
    entropy = int(seed) & 0xFFFFFFFFFFFFFFFF
    return np.random.default_rng(np.random.SeedSequence(entropy=entropy, spawn_key=tuple(int(x) for x in key)))


def _column(name: str, values, n: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != (n,):
        raise DataError(f"column {name!r} has shape {arr.shape}, expected ({n},)")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"column {name!r} contains non-finite values")
    if arr.min() < lo - 1e-12 or arr.max() > hi + 1e-12:
        raise DataError(f"column {name!r} lies outside [{lo}, {hi}]")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class RecordTable:
    """Immutable columnar dataset of ranked objects.

    score_attrs hold the ranking inputs, normalized to [0, 1]. fairness_attrs
    are the dimensions on which disparity is controlled, each binary {0, 1}
    or continuous in [0, 1]. record_ids are unique integers and provide the
    deterministic tie-break order everywhere.
    """

    record_ids: np.ndarray
    score_attrs: dict[str, np.ndarray]
    fairness_attrs: dict[str, np.ndarray]
    binary_attrs: frozenset[str] = frozenset()
    outcome_name: str | None = None
    outcome: np.ndarray | None = None

    def __post_init__(self):
        ids = np.asarray(self.record_ids, dtype=np.int64)
        if ids.ndim != 1 or ids.size == 0:
            raise DataError("a table needs at least one record")
        n = ids.size
        if np.unique(ids).size != n:
            raise DataError("record ids must be unique")
        ids = ids.copy()
        ids.setflags(write=False)
        object.__setattr__(self, "record_ids", ids)

        object.__setattr__(
            self, "score_attrs", {name: _column(name, col, n) for name, col in self.score_attrs.items()}
        )
        object.__setattr__(
            self, "fairness_attrs", {name: _column(name, col, n) for name, col in self.fairness_attrs.items()}
        )
        binary = frozenset(self.binary_attrs)
        unknown = binary - set(self.fairness_attrs)
        if unknown:
            raise ConfigError(f"binary_attrs not present as fairness attributes: {sorted(unknown)}")
        for name in sorted(binary):
            col = self.fairness_attrs[name]
            if not np.all((col == 0.0) | (col == 1.0)):
                raise DataError(f"fairness attribute {name!r} declared binary but contains values outside {{0, 1}}")
        object.__setattr__(self, "binary_attrs", binary)

        if (self.outcome is None) != (self.outcome_name is None):
            raise ConfigError("outcome and outcome_name must be given together")
        if self.outcome is not None:
            out = _column(self.outcome_name or "outcome", self.outcome, n)
            if not np.all((out == 0.0) | (out == 1.0)):
                raise DataError(f"outcome column {self.outcome_name!r} must be binary")
            object.__setattr__(self, "outcome", out)

    @property
    def n_records(self) -> int:
        return self.record_ids.size

    @property
    def score_names(self) -> tuple[str, ...]:
        return tuple(self.score_attrs)

    @property
    def fairness_names(self) -> tuple[str, ...]:
        return tuple(self.fairness_attrs)

    def fairness_matrix(self, attrs: Sequence[str] | None = None) -> np.ndarray:
        """(n_records, n_attrs) matrix of fairness columns in the given order."""
        names = self.fairness_names if attrs is None else tuple(attrs)
        missing = [a for a in names if a not in self.fairness_attrs]
        if missing:
            raise ConfigError(f"unknown fairness attributes: {missing}")
        return np.column_stack([self.fairness_attrs[a] for a in names])

    @cached_property
    def _id_sorter(self) -> np.ndarray:
        return np.argsort(self.record_ids, kind="stable")

    def indices_for(self, ids: np.ndarray | Sequence[int]) -> np.ndarray:
        """Row positions of the given record ids, in the given order."""
        ids = np.asarray(ids, dtype=np.int64)
        sorter = self._id_sorter
        sorted_ids = self.record_ids[sorter]
        pos = np.searchsorted(sorted_ids, ids)
        pos_clipped = np.minimum(pos, sorted_ids.size - 1)
        if not np.all(sorted_ids[pos_clipped] == ids):
            raise DataError("some record ids are not present in the table")
        return sorter[pos_clipped]

    def subset(self, indices: np.ndarray | Sequence[int], record_ids: np.ndarray | None = None) -> "RecordTable":
        """New table holding the rows at the given positions; ids are kept
        unless explicitly replaced (needed when rows repeat)."""
        idx = np.asarray(indices, dtype=np.int64)
        return RecordTable(
            record_ids=self.record_ids[idx] if record_ids is None else record_ids,
            score_attrs={name: col[idx] for name, col in self.score_attrs.items()},
            fairness_attrs={name: col[idx] for name, col in self.fairness_attrs.items()},
            binary_attrs=self.binary_attrs,
            outcome_name=self.outcome_name,
            outcome=None if self.outcome is None else self.outcome[idx],
        )


@dataclass(frozen=True)
class RankingSpec:
    """Weighted-sum ranking function plus the selection fraction.

    The composite score is score_scale * sum(weights[a] * attr[a]), negated
    for LOWER_BETTER scales. score_scale expresses bonuses in the rubric's
    native points (e.g. 100 for a 100-point admission rubric).
    """

    weights: Mapping[str, float]
    orientation: Orientation = Orientation.HIGHER_BETTER
    k: float = 0.05
    score_scale: float = 100.0

    def __post_init__(self):
        if not self.weights:
            raise ConfigError("ranking weights must not be empty")
        frozen = {str(a): float(w) for a, w in self.weights.items()}
        if not all(math.isfinite(w) for w in frozen.values()):
            raise ConfigError("ranking weights must be finite")
        object.__setattr__(self, "weights", frozen)
        if not isinstance(self.orientation, Orientation):
            raise ConfigError(f"orientation must be an Orientation, got {self.orientation!r}")
        if not 0.0 < self.k < 1.0:
            raise ConfigError(f"selection fraction k must lie strictly in (0, 1), got {self.k!r}")
        if not (math.isfinite(self.score_scale) and self.score_scale > 0):
            raise ConfigError(f"score_scale must be positive, got {self.score_scale!r}")


@dataclass(frozen=True)
class BonusVector:
    """Nonnegative per-fairness-attribute bonus points (internal orientation).

    Values are expressed in the ranking's native point scale. ``rounded()``
    snaps every component to the nearest granularity multiple, halves away
    from zero.
    """

    bonuses: Mapping[str, float]
    granularity: float = 0.5

    def __post_init__(self):
        if not (math.isfinite(self.granularity) and self.granularity > 0):
            raise ConfigError(f"granularity must be positive, got {self.granularity!r}")
        frozen = {str(a): float(b) for a, b in self.bonuses.items()}
        for a, b in frozen.items():
            if not math.isfinite(b):
                raise DataError(f"bonus for {a!r} is not finite")
            if b < 0:
                raise ConfigError(f"bonus for {a!r} is negative ({b}); bonuses must be >= 0")
        object.__setattr__(self, "bonuses", frozen)

    @classmethod
    def zero(cls, attrs: Iterable[str], granularity: float = 0.5) -> "BonusVector":
        return cls({a: 0.0 for a in attrs}, granularity)

    @classmethod
    def from_array(cls, attrs: Sequence[str], values: np.ndarray, granularity: float = 0.5) -> "BonusVector":
        return cls({a: float(v) for a, v in zip(attrs, values)}, granularity)

    @property
    def attrs(self) -> tuple[str, ...]:
        return tuple(self.bonuses)

    def as_array(self, attrs: Sequence[str] | None = None) -> np.ndarray:
        names = self.attrs if attrs is None else attrs
        return np.array([self.bonuses.get(a, 0.0) for a in names], dtype=np.float64)

    def rounded(self) -> "BonusVector":
        g = self.granularity
        return BonusVector({a: g * math.floor(b / g + 0.5) for a, b in self.bonuses.items()}, g)

    def scaled(self, factor: float) -> "BonusVector":
        return BonusVector({a: b * factor for a, b in self.bonuses.items()}, self.granularity)

    @property
    def is_rounded(self) -> bool:
        return all(abs(b - round(b / self.granularity) * self.granularity) <= 1e-9 for b in self.bonuses.values())


@dataclass(frozen=True)
class SelectionResult:
    """Outcome of a top-k selection: ids in rank order, best first."""

    selected_ids: np.ndarray
    threshold_score: float
    k_count: int
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        ids = np.asarray(self.selected_ids, dtype=np.int64).copy()
        ids.setflags(write=False)
        object.__setattr__(self, "selected_ids", ids)
        if self.k_count != ids.size:
            raise ConfigError(f"k_count {self.k_count} does not match {ids.size} selected ids")


@dataclass(frozen=True)
class SampleSpec:
    """How to draw evaluation samples. The sampler is deterministic given
    (seed, draw index); 30 is the floor where sample means become reliable."""

    sample_size: int = 500
    seed: int = 0
    replacement: bool = False

    def __post_init__(self):
        if self.sample_size < 30:
            raise ConfigError(f"sample_size must be at least 30, got {self.sample_size}")


def score(table: RecordTable, spec: RankingSpec, bonus: BonusVector | None = None) -> np.ndarray:
    """Internal (higher-is-better) score of every record under the given
    ranking function and bonus points.

    Bonuses multiply the fairness attribute value, which for binary
    attributes means the bonus is added exactly when the attribute is 1.
    """
    missing = [a for a in spec.weights if a not in table.score_attrs]
    if missing:
        raise ConfigError(f"ranking weights reference unknown score attributes: {missing}")
    base = np.zeros(table.n_records, dtype=np.float64)
    for attr, w in spec.weights.items():
        base += w * table.score_attrs[attr]
    internal = spec.orientation.sign * spec.score_scale * base
    if bonus is not None:
        unknown = [a for a in bonus.bonuses if a not in table.fairness_attrs]
        if unknown:
            raise ConfigError(f"bonus references unknown fairness attributes: {unknown}")
        for attr, b in bonus.bonuses.items():
            if b != 0.0:
                internal = internal + b * table.fairness_attrs[attr]
    if not np.all(np.isfinite(internal)):
        raise DataError("scoring produced non-finite values")
    return internal


def rank_order(table: RecordTable, spec: RankingSpec, bonus: BonusVector | None = None) -> np.ndarray:
    """Row positions in rank order (best first), ties broken by ascending id."""
    return _order_by(score(table, spec, bonus), table.record_ids)


def _order_by(scores: np.ndarray, ids: np.ndarray) -> np.ndarray:
    # lexsort: last key is primary -> descending score, then ascending id
    return np.lexsort((ids, -scores))


def select_top_k(scores: np.ndarray, table: RecordTable, k: float) -> SelectionResult:
    """The floor(k*n) highest-scoring records (minimum 1), deterministically
    tie-broken by ascending record id."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (table.n_records,):
        raise ConfigError(f"scores have shape {scores.shape}, expected ({table.n_records},)")
    if not np.all(np.isfinite(scores)):
        raise DataError("scores contain non-finite values")
    kc = k_count_for(k, table.n_records)
    warns: tuple[str, ...] = ()
    if math.floor(k * table.n_records) == 0:
        warns = (f"floor(k*n) = 0 for k={k}, n={table.n_records}; selecting 1 record",)
    top = _order_by(scores, table.record_ids)[:kc]
    return SelectionResult(
        selected_ids=table.record_ids[top],
        threshold_score=float(scores[top[-1]]),
        k_count=kc,
        warnings=warns,
    )


def _uniform_indices(rng: np.random.Generator, n: int, size: int) -> np.ndarray:
    """Uniform without-replacement index sample in O(size) expected work."""
    if size * 4 >= n:
        return np.sort(rng.permutation(n)[:size])
    need = size + 16 + (size * size) // (n - size)
    while True:
        distinct = np.unique(rng.integers(0, n, size=need))
        if distinct.size >= size:
            keep = rng.permutation(distinct.size)[:size]
            return np.sort(distinct[keep])
        need *= 2


def draw_sample(table: RecordTable, spec: SampleSpec, draw_index: int = 0) -> RecordTable:
    """Uniform random sample of the table, reproducible given (seed, draw_index).

    Without replacement a sample_size >= n_records falls back to the whole
    table. With replacement, rows may repeat, so the sample gets fresh
    sequential record ids.
    """
    n = table.n_records
    rng = rng_for(spec.seed, draw_index)
    if spec.replacement:
        idx = np.sort(rng.integers(0, n, size=spec.sample_size))
        return table.subset(idx, record_ids=np.arange(spec.sample_size, dtype=np.int64))
    if spec.sample_size > n:
        warnings.warn(
            f"sample_size {spec.sample_size} exceeds table size {n}; using the full table",
            DataWarning,
            stacklevel=2,
        )
        return table
    if spec.sample_size == n:
        return table
    return table.subset(_uniform_indices(rng, n, spec.sample_size))

"""Dataset ingestion and generation: CSV loading with role-based validation
and normalization, a seeded synthetic generator, summaries, and a loader for
the ProPublica recidivism-scores file."""

from __future__ import annotations

import csv
import math
import re
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, DataError, DataWarning
from .model import Orientation, RankingSpec, RecordTable, recommended_sample_size, rng_for

__all__ = [
    "DatasetConfig",
    "ScoreDist",
    "GroupSpec",
    "SyntheticSpec",
    "DatasetSummary",
    "load_csv",
    "write_csv",
    "generate_synthetic",
    "summarize",
    "load_compas",
    "compas_ranking_spec",
]

_FAIRNESS_KINDS = ("binary", "continuous")


@dataclass(frozen=True)
class ScoreDist:
    """Base distribution of one generated score attribute."""

    kind: str = "normal"
    mean: float = 0.6
    stddev: float = 0.15
    low: float = 0.0
    high: float = 1.0

    def __post_init__(self):
        if self.kind not in ("normal", "uniform"):
            raise ConfigError(f"unknown distribution kind {self.kind!r}")
        if self.stddev < 0:
            raise ConfigError(f"stddev must be nonnegative, got {self.stddev!r}")
        if self.low > self.high:
            raise ConfigError(f"uniform low {self.low} exceeds high {self.high}")


@dataclass(frozen=True)
class GroupSpec:
    """Frequency of a binary group plus additive score shifts its members
    receive, per score attribute (on the normalized [0, 1] scale)."""

    frequency: float
    score_shift: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.frequency <= 1.0:
            raise ConfigError(f"group frequency must lie in (0, 1], got {self.frequency!r}")
        object.__setattr__(self, "score_shift", {str(a): float(s) for a, s in self.score_shift.items()})


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a seeded synthetic dataset with binary fairness groups.

    co_occurrence pins P(a and b) for a pair of groups; each group may appear
    in at most one pair, every other pair is independent.
    """

    n_records: int
    score_attrs: Mapping[str, ScoreDist]
    groups: Mapping[str, GroupSpec]
    co_occurrence: Mapping[tuple[str, str], float] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.n_records < 1:
            raise ConfigError("n_records must be at least 1")
        if not self.score_attrs:
            raise ConfigError("at least one score attribute is required")
        object.__setattr__(self, "score_attrs", dict(self.score_attrs))
        object.__setattr__(self, "groups", dict(self.groups))
        for gname, gspec in self.groups.items():
            unknown = set(gspec.score_shift) - set(self.score_attrs)
            if unknown:
                raise ConfigError(f"group {gname!r} shifts unknown score attributes: {sorted(unknown)}")
        seen: set[str] = set()
        pairs: dict[tuple[str, str], float] = {}
        for (a, b), p in self.co_occurrence.items():
            if a not in self.groups or b not in self.groups or a == b:
                raise ConfigError(f"co-occurrence pair ({a!r}, {b!r}) must name two distinct groups")
            if a in seen or b in seen:
                raise ConfigError(f"group {a if a in seen else b!r} appears in more than one co-occurrence pair")
            seen.update((a, b))
            pa, pb = self.groups[a].frequency, self.groups[b].frequency
            if not (max(0.0, pa + pb - 1.0) - 1e-12 <= p <= min(pa, pb) + 1e-12):
                raise ConfigError(
                    f"P({a!r} and {b!r}) = {p} is infeasible for marginals {pa} and {pb}"
                )
            pairs[(a, b)] = float(p)
        object.__setattr__(self, "co_occurrence", pairs)


def generate_synthetic(spec: SyntheticSpec) -> RecordTable:
    """Draw a table from the recipe; deterministic for a given seed.

    Scores are clipped into [0, 1] after shifts, so extreme shifts saturate
    at the scale edges.
    """
    rng = rng_for(spec.seed)
    n = spec.n_records

    membership: dict[str, np.ndarray] = {}
    for (a, b), p_ab in spec.co_occurrence.items():
        pa = spec.groups[a].frequency
        pb = spec.groups[b].frequency
        in_a = rng.random(n) < pa
        if pa >= 1.0:
            membership[a] = in_a
            membership[b] = rng.random(n) < pb
            continue
        p_b_given_a = p_ab / pa
        p_b_given_not_a = (pb - p_ab) / (1.0 - pa)
        u = rng.random(n)
        membership[a] = in_a
        membership[b] = np.where(in_a, u < p_b_given_a, u < p_b_given_not_a)
    for gname, gspec in spec.groups.items():
        if gname not in membership:
            membership[gname] = rng.random(n) < gspec.frequency

    score_attrs: dict[str, np.ndarray] = {}
    for attr, dist in spec.score_attrs.items():
        if dist.kind == "normal":
            base = rng.normal(dist.mean, dist.stddev, size=n)
        else:
            base = rng.uniform(dist.low, dist.high, size=n)
        for gname, gspec in spec.groups.items():
            shift = gspec.score_shift.get(attr, 0.0)
            if shift:
                base = base + shift * membership[gname]
        score_attrs[attr] = np.clip(base, 0.0, 1.0)

    return RecordTable(
        record_ids=np.arange(n, dtype=np.int64),
        score_attrs=score_attrs,
        fairness_attrs={g: m.astype(np.float64) for g, m in membership.items()},
        binary_attrs=frozenset(spec.groups),
    )


@dataclass(frozen=True)
class DatasetConfig:
    """Where a dataset comes from and what role each column plays.

    Continuous columns are min-max normalized to [0, 1] using the declared
    bounds, falling back to the observed range. For generated datasets the
    roles come from the recipe; score weights default to an equal split.
    """

    path: str | None = None
    generator: SyntheticSpec | None = None
    score_weights: Mapping[str, float] = field(default_factory=dict)
    fairness: Mapping[str, str] = field(default_factory=dict)
    outcome_attr: str | None = None
    id_attr: str | None = None
    orientation: Orientation = Orientation.HIGHER_BETTER
    score_scale: float = 100.0
    bounds: Mapping[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        if (self.path is None) == (self.generator is None):
            raise ConfigError("exactly one of path or generator must be set")
        object.__setattr__(self, "score_weights", {str(a): float(w) for a, w in self.score_weights.items()})
        fairness = {str(a): str(kind) for a, kind in self.fairness.items()}
        for attr, kind in fairness.items():
            if kind not in _FAIRNESS_KINDS:
                raise ConfigError(f"fairness attribute {attr!r} has unknown kind {kind!r}")
        object.__setattr__(self, "fairness", fairness)
        if not isinstance(self.orientation, Orientation):
            raise ConfigError(f"orientation must be an Orientation, got {self.orientation!r}")
        if self.score_scale <= 0:
            raise ConfigError(f"score_scale must be positive, got {self.score_scale!r}")
        bounds = {}
        for attr, pair in self.bounds.items():
            lo, hi = float(pair[0]), float(pair[1])
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ConfigError(f"bounds for {attr!r} must satisfy lo < hi, got ({lo}, {hi})")
            bounds[str(attr)] = (lo, hi)
        object.__setattr__(self, "bounds", bounds)

        if self.path is not None:
            if not self.score_weights:
                raise ConfigError("CSV datasets need score attributes with weights")
            roles: list[str] = list(self.score_weights) + list(fairness)
            if self.outcome_attr:
                roles.append(self.outcome_attr)
            if self.id_attr:
                roles.append(self.id_attr)
            dupes = {r for r in roles if roles.count(r) > 1}
            if dupes:
                raise ConfigError(f"columns assigned to more than one role: {sorted(dupes)}")

    def resolved_weights(self) -> dict[str, float]:
        if self.score_weights:
            return dict(self.score_weights)
        assert self.generator is not None
        names = list(self.generator.score_attrs)
        return {a: 1.0 / len(names) for a in names}

    def ranking_spec(self, k: float) -> RankingSpec:
        return RankingSpec(
            weights=self.resolved_weights(),
            orientation=self.orientation,
            k=k,
            score_scale=self.score_scale,
        )

    def load(self) -> RecordTable:
        if self.generator is not None:
            return generate_synthetic(self.generator)
        return load_csv(self)

    def to_dict(self) -> dict:
        out: dict = {
            "orientation": self.orientation.value,
            "score_scale": self.score_scale,
        }
        if self.path is not None:
            out["path"] = self.path
            out["score_weights"] = dict(self.score_weights)
            out["fairness"] = dict(self.fairness)
            if self.outcome_attr:
                out["outcome_attr"] = self.outcome_attr
            if self.id_attr:
                out["id_attr"] = self.id_attr
            if self.bounds:
                out["bounds"] = {a: list(b) for a, b in self.bounds.items()}
        else:
            out["generator"] = _synthetic_to_dict(self.generator)
            if self.score_weights:
                out["score_weights"] = dict(self.score_weights)
        return out

    @classmethod
    def from_dict(cls, raw: Mapping) -> "DatasetConfig":
        data = dict(raw)
        generator = data.get("generator")
        orientation = data.get("orientation", Orientation.HIGHER_BETTER.value)
        if isinstance(orientation, str):
            try:
                orientation = Orientation(orientation)
            except ValueError:
                raise ConfigError(f"unknown orientation {orientation!r}; use 'higher' or 'lower'") from None
        bounds = {a: (b[0], b[1]) for a, b in data.get("bounds", {}).items()}
        return cls(
            path=data.get("path"),
            generator=_synthetic_from_dict(generator) if generator is not None else None,
            score_weights=data.get("score_weights", {}),
            fairness=data.get("fairness", {}),
            outcome_attr=data.get("outcome_attr"),
            id_attr=data.get("id_attr"),
            orientation=orientation,
            score_scale=float(data.get("score_scale", 100.0)),
            bounds=bounds,
        )


def _synthetic_to_dict(spec: SyntheticSpec) -> dict:
    return {
        "n_records": spec.n_records,
        "seed": spec.seed,
        "score_attrs": {
            a: {"kind": d.kind, "mean": d.mean, "stddev": d.stddev, "low": d.low, "high": d.high}
            for a, d in spec.score_attrs.items()
        },
        "groups": {
            g: {"frequency": s.frequency, "score_shift": dict(s.score_shift)} for g, s in spec.groups.items()
        },
        "co_occurrence": [{"a": a, "b": b, "p": p} for (a, b), p in spec.co_occurrence.items()],
    }


def _synthetic_from_dict(raw: Mapping) -> SyntheticSpec:
    try:
        score_attrs = {a: ScoreDist(**d) for a, d in raw.get("score_attrs", {}).items()}
        groups = {g: GroupSpec(**s) for g, s in raw.get("groups", {}).items()}
        pairs = {(e["a"], e["b"]): e["p"] for e in raw.get("co_occurrence", [])}
        return SyntheticSpec(
            n_records=int(raw["n_records"]),
            score_attrs=score_attrs,
            groups=groups,
            co_occurrence=pairs,
            seed=int(raw.get("seed", 0)),
        )
    except KeyError as exc:
        raise ConfigError(f"generator spec is missing {exc}") from None
    except TypeError as exc:
        raise ConfigError(f"generator spec is malformed: {exc}") from None


def _normalize(name: str, values: np.ndarray, bounds: tuple[float, float] | None) -> np.ndarray:
    if bounds is not None:
        lo, hi = bounds
        outside = int(np.count_nonzero((values < lo) | (values > hi)))
        if outside:
            warnings.warn(
                f"column {name!r}: {outside} values outside declared bounds [{lo}, {hi}] were clipped",
                DataWarning,
                stacklevel=3,
            )
            values = np.clip(values, lo, hi)
    else:
        lo, hi = float(values.min()), float(values.max())
        if lo == hi:
            warnings.warn(f"column {name!r} is constant; normalized to all zeros", DataWarning, stacklevel=3)
            return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def load_csv(config: DatasetConfig) -> RecordTable:
    """Read and validate a CSV with a header row against the column roles.

    Rows with missing (empty) required cells are rejected with row-level
    diagnostics; malformed cells and binary-role violations abort the load.
    """
    if config.path is None:
        raise ConfigError("config has no path to load")
    needed = list(config.score_weights) + list(config.fairness)
    if config.outcome_attr:
        needed.append(config.outcome_attr)
    if config.id_attr:
        needed.append(config.id_attr)

    columns: dict[str, list[float]] = {name: [] for name in needed}
    rejected: list[str] = []
    with open(config.path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        missing = [name for name in needed if name not in header]
        if missing:
            raise ConfigError(f"CSV {config.path!r} is missing columns: {missing}")
        for row_num, row in enumerate(reader, start=1):
            parsed: dict[str, float] = {}
            empty_cell = None
            for name in needed:
                cell = (row.get(name) or "").strip()
                if not cell:
                    empty_cell = name
                    break
                try:
                    value = float(cell)
                except ValueError:
                    raise DataError(f"row {row_num}: column {name!r} has non-numeric value {cell!r}") from None
                if not math.isfinite(value):
                    raise DataError(f"row {row_num}: column {name!r} has non-finite value {cell!r}")
                if config.fairness.get(name) == "binary" and value not in (0.0, 1.0):
                    raise DataError(f"row {row_num}: column {name!r} is declared binary but has {cell!r}")
                if name == config.outcome_attr and value not in (0.0, 1.0):
                    raise DataError(f"row {row_num}: outcome column {name!r} has non-binary value {cell!r}")
                parsed[name] = value
            if empty_cell is not None:
                rejected.append(f"row {row_num}: missing value in column {empty_cell!r}")
                continue
            for name, value in parsed.items():
                columns[name].append(value)

    if rejected:
        shown = "; ".join(rejected[:5])
        more = f" (+{len(rejected) - 5} more)" if len(rejected) > 5 else ""
        warnings.warn(f"rejected {len(rejected)} rows: {shown}{more}", DataWarning, stacklevel=2)
    n = len(next(iter(columns.values()))) if columns else 0
    if n == 0:
        raise DataError(f"CSV {config.path!r} has no usable rows")

    arrays = {name: np.asarray(vals, dtype=np.float64) for name, vals in columns.items()}
    score_attrs = {
        name: _normalize(name, arrays[name], config.bounds.get(name)) for name in config.score_weights
    }
    fairness_attrs: dict[str, np.ndarray] = {}
    for name, kind in config.fairness.items():
        if kind == "binary":
            fairness_attrs[name] = arrays[name]
        else:
            fairness_attrs[name] = _normalize(name, arrays[name], config.bounds.get(name))

    if config.id_attr:
        ids = arrays[config.id_attr]
        if not np.all(ids == np.floor(ids)):
            raise DataError(f"id column {config.id_attr!r} contains non-integer values")
        record_ids = ids.astype(np.int64)
    else:
        record_ids = np.arange(n, dtype=np.int64)

    return RecordTable(
        record_ids=record_ids,
        score_attrs=score_attrs,
        fairness_attrs=fairness_attrs,
        binary_attrs=frozenset(a for a, kind in config.fairness.items() if kind == "binary"),
        outcome_name=config.outcome_attr,
        outcome=arrays[config.outcome_attr] if config.outcome_attr else None,
    )


def write_csv(table: RecordTable, path: str) -> None:
    """Export the normalized table for audit; floats keep full precision so a
    reload reproduces them bit-exactly."""
    header = ["record_id", *table.score_names, *table.fairness_names]
    if table.outcome_name:
        header.append(table.outcome_name)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for i in range(table.n_records):
            row: list[str] = [str(int(table.record_ids[i]))]
            row += [repr(float(table.score_attrs[a][i])) for a in table.score_names]
            row += [repr(float(table.fairness_attrs[a][i])) for a in table.fairness_names]
            if table.outcome is not None:
                row.append(repr(float(table.outcome[i])))
            writer.writerow(row)


@dataclass(frozen=True)
class DatasetSummary:
    n_records: int
    score_means: dict[str, float]
    fairness_means: dict[str, float]
    group_frequencies: dict[str, float]
    rarest_group: str | None
    rarest_frequency: float | None
    recommended_sample_size: int | None

    def to_dict(self) -> dict:
        return {
            "n_records": self.n_records,
            "score_means": self.score_means,
            "fairness_means": self.fairness_means,
            "group_frequencies": self.group_frequencies,
            "rarest_group": self.rarest_group,
            "rarest_frequency": self.rarest_frequency,
            "recommended_sample_size": self.recommended_sample_size,
        }


def summarize(table: RecordTable, k: float | None = None) -> DatasetSummary:
    """Per-attribute means, binary group frequencies, and the sample size
    needed for ~30 expected members of the selection and the rarest group."""
    frequencies: dict[str, float] = {}
    for attr in table.fairness_names:
        if attr in table.binary_attrs:
            freq = float(table.fairness_attrs[attr].mean())
            if freq == 0.0:
                warnings.warn(f"group {attr!r} has no members; ignored for sampling", DataWarning, stacklevel=2)
                continue
            frequencies[attr] = freq
    rarest_group = min(frequencies, key=frequencies.__getitem__) if frequencies else None
    rarest = frequencies.get(rarest_group) if rarest_group is not None else None
    return DatasetSummary(
        n_records=table.n_records,
        score_means={a: float(col.mean()) for a, col in table.score_attrs.items()},
        fairness_means={a: float(col.mean()) for a, col in table.fairness_attrs.items()},
        group_frequencies=frequencies,
        rarest_group=rarest_group,
        rarest_frequency=rarest,
        recommended_sample_size=recommended_sample_size(k, rarest) if k is not None else None,
    )


def _slug(value: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", value.strip().lower()).strip("_")


def load_compas(path: str, races: Sequence[str] | None = None) -> RecordTable:
    """Load the ProPublica two-year recidivism scores file.

    The decile score becomes the sole score attribute (normalized over the
    0-10 range), each race category becomes one binary fairness column named
    race_<category>, and the two-year recidivism flag is the outcome.
    """
    rows: list[tuple[int, float, str, float]] = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        for column in ("id", "decile_score", "race", "two_year_recid"):
            if column not in header:
                raise ConfigError(f"COMPAS file {path!r} is missing column {column!r}")
        for row_num, row in enumerate(reader, start=1):
            try:
                rid = int(row["id"])
                decile = float(row["decile_score"])
                recid = float(row["two_year_recid"])
            except (TypeError, ValueError):
                raise DataError(f"row {row_num}: malformed id/decile_score/two_year_recid") from None
            race = (row["race"] or "").strip()
            if not race:
                raise DataError(f"row {row_num}: empty race")
            if not 1 <= decile <= 10:
                raise DataError(f"row {row_num}: decile_score {decile} outside 1..10")
            if recid not in (0.0, 1.0):
                raise DataError(f"row {row_num}: two_year_recid must be 0 or 1")
            rows.append((rid, decile, race, recid))
    if not rows:
        raise DataError(f"COMPAS file {path!r} has no rows")

    race_values = [r[2] for r in rows]
    counts: dict[str, int] = {}
    for r in race_values:
        counts[r] = counts.get(r, 0) + 1
    categories = list(races) if races is not None else sorted(counts, key=lambda r: (-counts[r], r))
    missing = [r for r in categories if r not in counts]
    if missing:
        raise ConfigError(f"race categories not present in the file: {missing}")

    deciles = np.array([r[1] for r in rows])
    fairness = {
        f"race_{_slug(cat)}": np.array([1.0 if r == cat else 0.0 for r in race_values]) for cat in categories
    }
    return RecordTable(
        record_ids=np.array([r[0] for r in rows], dtype=np.int64),
        score_attrs={"decile_score": deciles / 10.0},
        fairness_attrs=fairness,
        binary_attrs=frozenset(fairness),
        outcome_name="two_year_recid",
        outcome=np.array([r[3] for r in rows]),
    )


def compas_ranking_spec(k: float = 0.2) -> RankingSpec:
    """Decile score as the ranking function, lower deciles preferable, so the
    top-k selection is the favorable low-risk set and bonuses stay positive."""
    return RankingSpec(
        weights={"decile_score": 1.0},
        orientation=Orientation.LOWER_BETTER,
        k=k,
        score_scale=10.0,
    )

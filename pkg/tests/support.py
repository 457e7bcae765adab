"""Shared test helpers: table builders and pure-python from-definition
metric oracles. The oracles deliberately avoid the library's numpy code
paths so they can certify the implementations independently."""

from __future__ import annotations

import math
from statistics import mean

import numpy as np

import fairbonus as fb


def make_table(
    score_attrs: dict[str, list[float]],
    fairness_attrs: dict[str, list[float]] | None = None,
    binary: set[str] | None = None,
    ids: list[int] | None = None,
    outcome: list[float] | None = None,
) -> fb.RecordTable:
    n = len(next(iter(score_attrs.values())))
    fairness_attrs = fairness_attrs or {}
    if binary is None:
        binary = {
            name
            for name, col in fairness_attrs.items()
            if all(v in (0.0, 1.0) for v in col)
        }
    return fb.RecordTable(
        record_ids=np.asarray(ids if ids is not None else range(n), dtype=np.int64),
        score_attrs={k: np.asarray(v, dtype=float) for k, v in score_attrs.items()},
        fairness_attrs={k: np.asarray(v, dtype=float) for k, v in fairness_attrs.items()},
        binary_attrs=frozenset(binary),
        outcome_name="outcome" if outcome is not None else None,
        outcome=np.asarray(outcome, dtype=float) if outcome is not None else None,
    )


def random_binary_table(rng: np.random.Generator, n: int, m: int, with_outcome: bool = False) -> fb.RecordTable:
    """Small random instance with one score column and m binary attributes,
    each guaranteed non-constant."""
    F = (rng.random((n, m)) < rng.uniform(0.25, 0.75, size=m)).astype(float)
    for j in range(m):
        if F[:, j].sum() == 0:
            F[int(rng.integers(0, n)), j] = 1.0
        if F[:, j].sum() == n:
            F[int(rng.integers(0, n)), j] = 0.0
    return make_table(
        {"s": list(rng.random(n))},
        {f"f{j}": list(F[:, j]) for j in range(m)},
        ids=list(range(n)),
        outcome=list((rng.random(n) < 0.5).astype(float)) if with_outcome else None,
    )


# ---------------------------------------------------------------------------
# From-definition oracles (pure python)
# ---------------------------------------------------------------------------


def oracle_disparity(values: list[float], selected: set[int]) -> float:
    """mean over selected minus mean over everyone."""
    sel = [values[i] for i in sorted(selected)]
    return mean(sel) - mean(values)


def oracle_di_scaled(flags: list[float], selected: set[int]) -> float:
    """Signed 1 - min(rate ratio), computed by explicit counting."""
    n = len(flags)
    n1 = sum(1 for v in flags if v == 1.0)
    n0 = n - n1
    sel1 = sum(1 for i in selected if flags[i] == 1.0)
    sel0 = len(selected) - sel1
    p1 = sel1 / n1
    p0 = sel0 / n0
    if p1 == p0:
        return 0.0
    if p1 == 0.0:
        return -1.0
    if p0 == 0.0:
        return 1.0
    ratio = min(p0 / p1, p1 / p0)
    return (1.0 - ratio) if p1 > p0 else -(1.0 - ratio)


def oracle_fpr_gap(flags: list[float], outcomes: list[float], selected: set[int]) -> float:
    """FPR(group) - FPR(all), selection treated as predicted positive."""
    negatives = [i for i, o in enumerate(outcomes) if o == 0.0]
    overall = sum(1 for i in negatives if i in selected) / len(negatives)
    group_neg = [i for i in negatives if flags[i] == 1.0]
    if not group_neg:
        return 0.0
    fpr_g = sum(1 for i in group_neg if i in selected) / len(group_neg)
    return max(-1.0, min(1.0, fpr_g - overall))


def oracle_ndcg(original: list[int], adjusted: list[int], k_count: int, weights: list[float]) -> float:
    def dcg(order: list[int]) -> float:
        return sum(weights[order[i]] / math.log2(i + 2) for i in range(k_count))

    return dcg(adjusted) / dcg(original)


def oracle_ddp(order: list[int], groups: dict[str, set[int]]) -> float:
    exposure_at = {rec: 1.0 / math.log2(rank + 2) for rank, rec in enumerate(order)}
    per_capita = [
        sum(exposure_at[i] for i in members) / len(members) for members in groups.values() if members
    ]
    if len(per_capita) < 2:
        return 0.0
    return max(per_capita) - min(per_capita)


def oracle_log_discounted(
    order: list[int], values: list[float], ranks: list[int]
) -> float:
    """Discounted disparity for one attribute, straight from the formula."""
    total = 0.0
    z = 0.0
    for r in ranks:
        prefix = [values[i] for i in order[:r]]
        comp = mean(prefix) - mean(values)
        w = 1.0 / math.log2(r + 1)
        total += w * comp
        z += w
    return total / z

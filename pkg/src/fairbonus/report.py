"""Run reports: full config echo, before/after metrics, and deterministic
text/JSON/CSV rendering.

A report embeds everything needed to reproduce its run; ``run_from_echo``
turns a report dict back into the identical optimizer run. Timing lives
under its own key so byte-level comparisons can drop it.
"""

from __future__ import annotations

import csv
import json
import warnings as _warnings
from dataclasses import dataclass, field
from typing import IO, Mapping, Sequence

import numpy as np

from .datasets import DatasetConfig
from .dca import DcaConfig, AdamParams, DcaResult, run_dca
from .errors import ConfigError
from .metrics import (
    DisparityVector,
    MetricFamily,
    MetricKind,
    binary_groups,
    evaluate_objective,
    exposure_ddp,
    ndcg_at_k,
    utility_weights,
)
from .model import BonusVector, RankingSpec, RecordTable, SampleSpec, SelectionResult, rank_order

SCHEMA_VERSION = 1

__all__ = [
    "SCHEMA_VERSION",
    "RunReport",
    "Assessment",
    "assess",
    "selection_order",
    "metric_kind_to_dict",
    "metric_kind_from_dict",
    "dca_config_to_dict",
    "dca_config_from_dict",
    "build_run_report",
    "run_from_echo",
    "write_sweep_csv",
    "write_compare_csv",
]


def metric_kind_to_dict(kind: MetricKind) -> dict:
    return {
        "family": kind.family.value,
        "log_discounted": kind.log_discounted,
        "k_max": kind.k_max,
        "checkpoint_step": kind.checkpoint_step,
    }


def metric_kind_from_dict(raw: Mapping) -> MetricKind:
    try:
        family = MetricFamily(raw.get("family", "disparity"))
    except ValueError:
        raise ConfigError(f"unknown objective family {raw.get('family')!r}") from None
    return MetricKind(
        family=family,
        log_discounted=bool(raw.get("log_discounted", False)),
        k_max=float(raw.get("k_max", 1.0)),
        checkpoint_step=int(raw.get("checkpoint_step", 10)),
    )


def dca_config_to_dict(config: DcaConfig) -> dict:
    return {
        "learning_rates": list(config.learning_rates),
        "iterations_per_rate": config.iterations_per_rate,
        "refine_iterations": config.refine_iterations,
        "rolling_average_window": config.rolling_average_window,
        "sample_size": config.sample.sample_size,
        "replacement": config.sample.replacement,
        "granularity": config.granularity,
        "bonus_min": config.bonus_min,
        "bonus_max": config.bonus_max,
        "objective": metric_kind_to_dict(config.objective),
        "master_seed": config.master_seed,
        "adam": {
            "alpha": config.adam.alpha,
            "beta1": config.adam.beta1,
            "beta2": config.adam.beta2,
            "epsilon": config.adam.epsilon,
        },
    }


def dca_config_from_dict(raw: Mapping) -> DcaConfig:
    adam = raw.get("adam", {})
    return DcaConfig(
        learning_rates=tuple(raw.get("learning_rates", (1.0, 0.1))),
        iterations_per_rate=int(raw.get("iterations_per_rate", 100)),
        refine_iterations=int(raw.get("refine_iterations", 100)),
        rolling_average_window=int(raw.get("rolling_average_window", 100)),
        sample=SampleSpec(
            sample_size=int(raw.get("sample_size", 500)),
            replacement=bool(raw.get("replacement", False)),
        ),
        granularity=float(raw.get("granularity", 0.5)),
        bonus_min=float(raw.get("bonus_min", 0.0)),
        bonus_max=None if raw.get("bonus_max") is None else float(raw["bonus_max"]),
        objective=metric_kind_from_dict(raw.get("objective", {})),
        master_seed=int(raw.get("master_seed", 0)),
        adam=AdamParams(
            alpha=float(adam.get("alpha", 0.1)),
            beta1=float(adam.get("beta1", 0.9)),
            beta2=float(adam.get("beta2", 0.999)),
            epsilon=float(adam.get("epsilon", 1e-8)),
        ),
    )


def _vector_entry(vec: DisparityVector) -> dict:
    return {"components": {a: float(v) for a, v in vec.components.items()}, "norm": float(vec.norm)}


@dataclass
class RunReport:
    """Everything one command run produced, reproducibly."""

    command: str
    dataset: dict
    k: float
    optimizer: dict
    bonus: dict[str, float] | None
    disparity_before: dict
    disparity_after: dict
    ndcg: float | None
    ddp_before: float | None
    ddp_after: float | None
    warnings: list[str] = field(default_factory=list)
    timing: dict = field(default_factory=dict)
    extra_metrics: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        out = {
            "schema_version": self.schema_version,
            "command": self.command,
            "dataset": self.dataset,
            "k": self.k,
            "optimizer": self.optimizer,
            "bonus": self.bonus,
            "disparity_before": self.disparity_before,
            "disparity_after": self.disparity_after,
            "ndcg": self.ndcg,
            "ddp_before": self.ddp_before,
            "ddp_after": self.ddp_after,
            "warnings": list(self.warnings),
            "timing": self.timing,
        }
        if self.extra_metrics:
            out["extra_metrics"] = self.extra_metrics
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_text(self) -> str:
        attrs = list(self.disparity_before["components"])
        width = max([len(a) for a in attrs] + [10]) + 2
        label_w = 20

        def fmt_row(label: str, values: list[str]) -> str:
            return label.ljust(label_w) + "".join(v.ljust(width) for v in values)

        lines = [fmt_row("Attribute", attrs + ["Norm"])]
        if self.bonus is not None:
            lines.append(fmt_row("Bonus points", [f"{self.bonus.get(a, 0.0):g}" for a in attrs] + ["-"]))
        before = self.disparity_before
        after = self.disparity_after
        lines.append(
            fmt_row("Disparity before", [f"{before['components'][a]:.3f}" for a in attrs] + [f"{before['norm']:.3f}"])
        )
        lines.append(
            fmt_row("Disparity after", [f"{after['components'][a]:.3f}" for a in attrs] + [f"{after['norm']:.3f}"])
        )
        footer: list[str] = []
        if self.ndcg is not None:
            footer.append(f"nDCG@{self.k:g} = {self.ndcg:.4f}")
        if self.ddp_before is not None:
            footer.append(f"DDP {self.ddp_before:.5f} -> {self.ddp_after:.5f}")
        if footer:
            lines.append("  |  ".join(footer))
        for w in self.warnings:
            lines.append(f"warning: {w}")
        return "\n".join(lines) + "\n"


@dataclass
class Assessment:
    """Full-table before/after metrics for a bonus vector."""

    before: DisparityVector
    after: DisparityVector
    ndcg: float
    ddp_before: float | None
    ddp_after: float | None
    warnings: list[str]


def assess(
    table: RecordTable,
    spec: RankingSpec,
    bonus: BonusVector | None,
    kind: MetricKind = MetricKind(),
) -> Assessment:
    """Evaluate the objective, nDCG, and exposure DDP with and without the
    bonus, collecting soft warnings instead of printing them."""
    with _warnings.catch_warnings(record=True) as caught:
        _warnings.simplefilter("always")
        before = evaluate_objective(table, spec, None, kind)
        after = evaluate_objective(table, spec, bonus, kind)
        original = rank_order(table, spec)
        adjusted = rank_order(table, spec, bonus)
        ndcg = ndcg_at_k(original, adjusted, spec.k, utility_weights(table, spec))
        groups = binary_groups(table)
        ddp_before = exposure_ddp(original, groups) if groups else None
        ddp_after = exposure_ddp(adjusted, groups) if groups else None
    notes = list(before.warnings) + list(after.warnings)
    notes += [str(w.message) for w in caught]
    return Assessment(before, after, ndcg, ddp_before, ddp_after, notes)


def selection_order(table: RecordTable, spec: RankingSpec, selection: SelectionResult) -> np.ndarray:
    """Full ranking induced by a selection method: the selected records in
    their rank order, then everyone else in score order."""
    base = rank_order(table, spec)
    sel_idx = table.indices_for(selection.selected_ids)
    mask = np.zeros(table.n_records, dtype=bool)
    mask[sel_idx] = True
    return np.concatenate([sel_idx, base[~mask[base]]])


def build_run_report(
    command: str,
    dataset_config: DatasetConfig,
    k: float,
    dca_config: DcaConfig,
    result: DcaResult,
    assessment: Assessment,
) -> RunReport:
    return RunReport(
        command=command,
        dataset=dataset_config.to_dict(),
        k=float(k),
        optimizer=dca_config_to_dict(dca_config),
        bonus={a: float(v) for a, v in result.bonus.bonuses.items()},
        disparity_before=_vector_entry(assessment.before),
        disparity_after=_vector_entry(assessment.after),
        ndcg=float(assessment.ndcg),
        ddp_before=assessment.ddp_before,
        ddp_after=assessment.ddp_after,
        warnings=list(assessment.warnings),
        timing={"loop_seconds": result.loop_seconds, "wall_seconds": result.wall_seconds},
    )


def run_from_echo(echo: Mapping) -> tuple[RecordTable, RankingSpec, DcaResult]:
    """Re-run the optimizer exactly as a report describes it."""
    dataset_config = DatasetConfig.from_dict(echo["dataset"])
    table = dataset_config.load()
    spec = dataset_config.ranking_spec(float(echo["k"]))
    config = dca_config_from_dict(echo["optimizer"])
    return table, spec, run_dca(table, spec, config)


def write_sweep_csv(rows: Sequence[dict], attrs: Sequence[str], stream: IO[str]) -> None:
    writer = csv.writer(stream)
    writer.writerow(["k", *[f"disparity_{a}" for a in attrs], "norm_before", "norm_after", "ndcg"])
    for row in rows:
        writer.writerow(
            [
                repr(float(row["k"])),
                *[repr(float(row["components"][a])) for a in attrs],
                repr(float(row["norm_before"])),
                repr(float(row["norm_after"])),
                repr(float(row["ndcg"])),
            ]
        )


def write_compare_csv(rows: Sequence[dict], stream: IO[str]) -> None:
    writer = csv.writer(stream)
    writer.writerow(["method", "parameter", "norm", "ndcg"])
    for row in rows:
        writer.writerow([row["method"], row["parameter"], repr(float(row["norm"])), repr(float(row["ndcg"]))])

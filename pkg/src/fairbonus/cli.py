"""Command-line surface: compute bonus points, evaluate given bonuses,
sweep selection fractions, and compare against baseline methods.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 infeasible.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time

from .baselines import ConstraintSet, QuotaSpec, greedy_reranker, grid_search_oracle, quota_select
from .datasets import DatasetConfig
from .dca import DcaConfig, run_dca
from .errors import ConfigError, DataError, InfeasibleError
from .metrics import MetricFamily, MetricKind, disparity, evaluate_objective, ndcg_at_k, utility_weights
from .model import BonusVector, Orientation, SampleSpec, rank_order, score, select_top_k
from .report import (
    Assessment,
    RunReport,
    assess,
    build_run_report,
    dca_config_to_dict,
    metric_kind_to_dict,
    selection_order,
    write_compare_csv,
    write_sweep_csv,
)

_FAMILIES = {
    "disparity": MetricFamily.DISPARITY,
    "di": MetricFamily.DISPARATE_IMPACT,
    "fpr": MetricFamily.FPR_GAP,
}


def _parse_kv_floats(items, flag: str) -> dict[str, float]:
    out: dict[str, float] = {}
    for item in items or []:
        name, sep, value = item.partition("=")
        if not sep or not name:
            raise ConfigError(f"{flag} expects NAME=VALUE, got {item!r}")
        try:
            out[name] = float(value)
        except ValueError:
            raise ConfigError(f"{flag} {name!r} has non-numeric value {value!r}") from None
    return out


def _parse_float_list(text: str, flag: str) -> list[float]:
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"{flag} expects comma-separated numbers, got {text!r}") from None
    if not values:
        raise ConfigError(f"{flag} is empty")
    return values


def _add_dataset_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("dataset")
    group.add_argument("--config", help="JSON dataset config (columns roles, bounds, or a generator)")
    group.add_argument("--data", help="CSV file; column roles come from the flags below")
    group.add_argument("--score-attr", action="append", metavar="NAME=WEIGHT", help="score column and weight")
    group.add_argument(
        "--fairness-attr", action="append", metavar="NAME[:binary|continuous]", help="fairness column (default binary)"
    )
    group.add_argument("--outcome-attr", metavar="NAME", help="binary observed-outcome column")
    group.add_argument("--id-attr", metavar="NAME", help="integer id column (synthesized when absent)")
    group.add_argument("--orientation", choices=["higher", "lower"], default="higher")
    group.add_argument("--score-scale", type=float, default=100.0)
    group.add_argument("--bound", action="append", metavar="COL=LO:HI", help="normalization bounds for a column")


def _add_objective_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("objective")
    group.add_argument("--k", type=float, default=0.05, help="selection fraction (default 0.05)")
    group.add_argument("--objective", choices=sorted(_FAMILIES), default="disparity")
    group.add_argument("--log-discount", action="store_true", help="optimize the whole ranking, log-discounted")
    group.add_argument("--k-max", type=float, default=0.5, help="deepest fraction for --log-discount")
    group.add_argument("--checkpoint-step", type=int, default=10)


def _add_optimizer_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("optimizer")
    group.add_argument("--seed", type=int, default=0)
    group.add_argument("--sample-size", type=int, default=500)
    group.add_argument("--granularity", type=float, default=0.5)
    group.add_argument("--bonus-min", type=float, default=0.0)
    group.add_argument("--bonus-max", type=float, default=None)
    group.add_argument("--learning-rates", default="1.0,0.1", metavar="R1,R2,...")
    group.add_argument("--iterations", type=int, default=100, help="iterations per learning rate")
    group.add_argument("--refine-iterations", type=int, default=100)
    group.add_argument("--window", type=int, default=100, help="rolling-average window")


def _resolve_dataset(args) -> DatasetConfig:
    if args.config and args.data:
        raise ConfigError("pass either --config or --data, not both")
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as handle:
                raw = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {args.config!r} is not valid JSON: {exc}") from None
        return DatasetConfig.from_dict(raw)
    if not args.data:
        raise ConfigError("a dataset is required: --config FILE or --data CSV")
    bounds: dict[str, tuple[float, float]] = {}
    for item in args.bound or []:
        name, sep, span = item.partition("=")
        lo, sep2, hi = span.partition(":")
        if not sep or not sep2:
            raise ConfigError(f"--bound expects COL=LO:HI, got {item!r}")
        try:
            bounds[name] = (float(lo), float(hi))
        except ValueError:
            raise ConfigError(f"--bound {item!r} has non-numeric limits") from None
    fairness: dict[str, str] = {}
    for item in args.fairness_attr or []:
        name, _, kind = item.partition(":")
        fairness[name] = kind or "binary"
    return DatasetConfig(
        path=args.data,
        score_weights=_parse_kv_floats(args.score_attr, "--score-attr"),
        fairness=fairness,
        outcome_attr=args.outcome_attr,
        id_attr=args.id_attr,
        orientation=Orientation(args.orientation),
        score_scale=args.score_scale,
        bounds=bounds,
    )


def _objective_from_args(args) -> MetricKind:
    return MetricKind(
        family=_FAMILIES[args.objective],
        log_discounted=args.log_discount,
        k_max=args.k_max,
        checkpoint_step=args.checkpoint_step,
    )


def _dca_config_from_args(args) -> DcaConfig:
    return DcaConfig(
        learning_rates=tuple(_parse_float_list(args.learning_rates, "--learning-rates")),
        iterations_per_rate=args.iterations,
        refine_iterations=args.refine_iterations,
        rolling_average_window=args.window,
        sample=SampleSpec(sample_size=args.sample_size),
        granularity=args.granularity,
        bonus_min=args.bonus_min,
        bonus_max=args.bonus_max,
        objective=_objective_from_args(args),
        master_seed=args.seed,
    )


def _emit(args, report: RunReport) -> None:
    sys.stdout.write(report.to_text())
    if args.json:
        with open(args.json, "w", encoding="utf-8") as handle:
            handle.write(report.to_json())


def cmd_compute_bonus(args) -> int:
    dataset_config = _resolve_dataset(args)
    table = dataset_config.load()
    spec = dataset_config.ranking_spec(args.k)
    config = _dca_config_from_args(args)
    result = run_dca(table, spec, config)
    assessment = assess(table, spec, result.bonus, config.objective)
    report = build_run_report("compute-bonus", dataset_config, args.k, config, result, assessment)
    _emit(args, report)
    return 0


def cmd_evaluate(args) -> int:
    dataset_config = _resolve_dataset(args)
    table = dataset_config.load()
    spec = dataset_config.ranking_spec(args.k)
    given = _parse_kv_floats(args.bonus, "--bonus")
    unknown = [a for a in given if a not in table.fairness_attrs]
    if unknown:
        raise ConfigError(f"bonus names unknown fairness attributes: {unknown}")
    bonus = BonusVector({a: given.get(a, 0.0) for a in table.fairness_names}, args.granularity)
    kind = _objective_from_args(args)
    start = time.perf_counter()
    assessment = assess(table, spec, bonus, kind)
    extra: dict = {}
    wanted = [m.strip() for m in (args.metrics or "").split(",") if m.strip()]
    for name in wanted:
        if name not in _FAMILIES:
            raise ConfigError(f"unknown metric {name!r}; choose from {sorted(_FAMILIES)}")
        if _FAMILIES[name] is kind.family:
            continue
        extra_kind = dataclasses.replace(kind, family=_FAMILIES[name])
        extra[f"{name}_before"] = _vector_dict(evaluate_objective(table, spec, None, extra_kind))
        extra[f"{name}_after"] = _vector_dict(evaluate_objective(table, spec, bonus, extra_kind))
    report = RunReport(
        command="evaluate",
        dataset=dataset_config.to_dict(),
        k=float(args.k),
        optimizer={"objective": metric_kind_to_dict(kind), "granularity": args.granularity},
        bonus={a: float(v) for a, v in bonus.bonuses.items()},
        disparity_before=_vector_dict(assessment.before),
        disparity_after=_vector_dict(assessment.after),
        ndcg=float(assessment.ndcg),
        ddp_before=assessment.ddp_before,
        ddp_after=assessment.ddp_after,
        warnings=list(assessment.warnings),
        timing={"wall_seconds": time.perf_counter() - start},
        extra_metrics=extra,
    )
    _emit(args, report)
    return 0


def _vector_dict(vec) -> dict:
    return {"components": {a: float(v) for a, v in vec.components.items()}, "norm": float(vec.norm)}


def _sweep_row(table, dataset_config, bonus, k: float, family: MetricFamily) -> dict:
    spec = dataset_config.ranking_spec(k)
    kind = MetricKind(family=family)
    assessment = assess(table, spec, bonus, kind)
    return {
        "k": k,
        "components": {a: float(v) for a, v in assessment.after.components.items()},
        "norm_before": assessment.before.norm,
        "norm_after": assessment.after.norm,
        "ndcg": assessment.ndcg,
    }


def cmd_sweep_k(args) -> int:
    ks = _parse_float_list(args.k_grid, "--k-grid")
    for k in ks:
        if not 0.0 < k < 1.0:
            raise ConfigError(f"k grid value {k} is outside (0, 1)")
    dataset_config = _resolve_dataset(args)
    table = dataset_config.load()
    family = _FAMILIES[args.objective]
    rows = []
    if args.mode == "per-k":
        for k in ks:
            spec = dataset_config.ranking_spec(k)
            config = _dca_config_from_args(args)
            result = run_dca(table, spec, config)
            rows.append(_sweep_row(table, dataset_config, result.bonus, k, family))
    elif args.mode == "fixed-bonus":
        given = _parse_kv_floats(args.bonus, "--bonus")
        if given:
            bonus = BonusVector(given, args.granularity)
        else:
            spec = dataset_config.ranking_spec(args.k)
            bonus = run_dca(table, spec, _dca_config_from_args(args)).bonus
        rows = [_sweep_row(table, dataset_config, bonus, k, family) for k in ks]
    else:  # log-discounted
        config = _dca_config_from_args(args)
        config = dataclasses.replace(config, objective=dataclasses.replace(config.objective, log_discounted=True))
        spec = dataset_config.ranking_spec(args.k)
        bonus = run_dca(table, spec, config).bonus
        rows = [_sweep_row(table, dataset_config, bonus, k, family) for k in ks]
    _write_rows(args, lambda stream: write_sweep_csv(rows, table.fairness_names, stream))
    return 0


def _write_rows(args, writer) -> None:
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as handle:
            writer(handle)
    else:
        writer(sys.stdout)


def cmd_compare(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if not methods:
        raise ConfigError("--methods is empty")
    unknown = [m for m in methods if m not in ("dca", "quota", "greedy", "oracle")]
    if unknown:
        raise ConfigError(f"unknown methods: {unknown}")
    dataset_config = _resolve_dataset(args)
    table = dataset_config.load()
    spec = dataset_config.ranking_spec(args.k)
    config = _dca_config_from_args(args)
    kind = config.objective

    result = None
    if "dca" in methods or "greedy" in methods or args.scale_sweep:
        result = run_dca(table, spec, config)

    original = rank_order(table, spec)
    weights = utility_weights(table, spec)

    def selection_row(method: str, parameter: str, selection) -> dict:
        order = selection_order(table, spec, selection)
        return {
            "method": method,
            "parameter": parameter,
            "norm": disparity(table, selection).norm,
            "ndcg": ndcg_at_k(original, order, spec.k, weights),
        }

    rows = []
    for method in methods:
        if method == "dca":
            assert result is not None
            assessment = assess(table, spec, result.bonus, kind)
            rows.append(
                {"method": "dca", "parameter": "scale=1", "norm": assessment.after.norm, "ndcg": assessment.ndcg}
            )
            if args.scale_sweep:
                step = args.scale_sweep
                if not 0.0 < step <= 1.0:
                    raise ConfigError(f"--scale-sweep must lie in (0, 1], got {step}")
                i = 0
                while (s := round(i * step, 10)) < 1.0:
                    scaled = result.bonus.scaled(s).rounded()
                    assessment = assess(table, spec, scaled, kind)
                    rows.append(
                        {
                            "method": "dca",
                            "parameter": f"scale={s:g}",
                            "norm": assessment.after.norm,
                            "ndcg": assessment.ndcg,
                        }
                    )
                    i += 1
        elif method == "quota":
            attrs = tuple(sorted(table.binary_attrs))
            if not attrs:
                raise ConfigError("quota needs at least one binary fairness attribute")
            selection = quota_select(table, spec, QuotaSpec(args.quota_fraction, attrs))
            rows.append(selection_row("quota", f"quota={args.quota_fraction:g}", selection))
        elif method == "greedy":
            assert result is not None
            achieved = select_top_k(score(table, spec, result.bonus), table, spec.k)
            constraints = ConstraintSet.from_selection(table, achieved)
            selection = greedy_reranker(table, spec, constraints)
            rows.append(selection_row("greedy", "minima=dca", selection))
        else:  # oracle
            bonus_max = args.bonus_max if args.bonus_max is not None else 20.0
            oracle_bonus = grid_search_oracle(table, spec, args.granularity, bonus_max, kind)
            assessment = assess(table, spec, oracle_bonus, kind)
            rows.append(
                {
                    "method": "oracle",
                    "parameter": f"grid<={bonus_max:g}",
                    "norm": assessment.after.norm,
                    "ndcg": assessment.ndcg,
                }
            )
    _write_rows(args, lambda stream: write_compare_csv(rows, stream))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairbonus",
        description="Data-driven bonus points that compensate group disparity in top-k rankings.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_compute = sub.add_parser("compute-bonus", help="optimize a bonus vector and report before/after metrics")
    _add_dataset_args(p_compute)
    _add_objective_args(p_compute)
    _add_optimizer_args(p_compute)
    p_compute.add_argument("--json", metavar="OUT", help="write the full report as JSON")
    p_compute.set_defaults(func=cmd_compute_bonus)

    p_eval = sub.add_parser("evaluate", help="evaluate externally chosen bonus points, no optimization")
    _add_dataset_args(p_eval)
    _add_objective_args(p_eval)
    p_eval.add_argument("--bonus", action="append", metavar="NAME=VALUE", help="bonus points per attribute")
    p_eval.add_argument("--granularity", type=float, default=0.5)
    p_eval.add_argument("--metrics", default="", help="extra metric vectors to include: di,fpr")
    p_eval.add_argument("--json", metavar="OUT")
    p_eval.set_defaults(func=cmd_evaluate)

    p_sweep = sub.add_parser("sweep-k", help="per-k disparity and utility, optionally re-optimized per k")
    _add_dataset_args(p_sweep)
    _add_objective_args(p_sweep)
    _add_optimizer_args(p_sweep)
    p_sweep.add_argument("--k-grid", required=True, metavar="K1,K2,...")
    p_sweep.add_argument("--mode", choices=["per-k", "fixed-bonus", "log-discounted"], default="per-k")
    p_sweep.add_argument("--bonus", action="append", metavar="NAME=VALUE", help="bonus for fixed-bonus mode")
    p_sweep.add_argument("--csv", metavar="OUT", help="write rows to a file instead of stdout")
    p_sweep.set_defaults(func=cmd_sweep_k)

    p_cmp = sub.add_parser("compare", help="compare dca, quota, greedy re-ranking, and the grid oracle")
    _add_dataset_args(p_cmp)
    _add_objective_args(p_cmp)
    _add_optimizer_args(p_cmp)
    p_cmp.add_argument("--methods", default="dca", metavar="dca,quota,greedy,oracle")
    p_cmp.add_argument("--quota-fraction", type=float, default=0.5)
    p_cmp.add_argument("--scale-sweep", type=float, default=None, metavar="STEP")
    p_cmp.add_argument("--csv", metavar="OUT")
    p_cmp.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail(2, "config", exc)
    except DataError as exc:
        return _fail(3, "data", exc)
    except InfeasibleError as exc:
        return _fail(4, "infeasible", exc)
    except OSError as exc:
        return _fail(3, "data", exc)


def _fail(code: int, kind: str, exc: Exception) -> int:
    print(f"error: {kind}: {exc}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())

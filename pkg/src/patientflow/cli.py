"""Batch command-line interface.

Subcommands: synth (generate an oracle log), fit (fit any model from a
log), forecast (expected counts from a fitted inflow model), simulate
(run the engine from a config), compare (the two-stack experiment) and
report (human-readable summary of produced artifacts).

stdout carries only machine-readable payloads; diagnostics go to
stderr. Exit codes: 0 success, 2 usage or config error, 3 data or
invariant error, 4 numeric failure in strict mode.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import dataclasses

from . import __version__, estimators, inflow, pathways
from .domain import DepartmentSpec, bucketize, extract_trajectories, parse_event_log
from .engine import (
    AttributeSampler,
    EmpiricalSampler,
    ForecastDriven,
    PoissonBaseline,
    SimConfig,
    replicate,
    write_census_csv,
    write_patients_csv,
    write_summary_json,
)
from .errors import ConfigError, DataError, NumericError, PatientFlowError
from .experiment import ScenarioConfig, run_experiment
from .synthehr import AgeMixture, GeneratorConfig, LinearRate, generate, write_outputs

INFLOW_KINDS = ("poisson", "seasonal_naive", "holt_winters", "lag_regression")
LOS_KINDS = ("lognormal_los", "gamma_los", "weibull_los", "mixture_los",
             "conditional_los", "tree_los")
COT_KINDS = ("lognormal_cot", "conditional_cot")
PATHWAY_KINDS = ("transition", "clusters")
FIT_KINDS = INFLOW_KINDS + LOS_KINDS + COT_KINDS + PATHWAY_KINDS


def _info(msg: str) -> None:
    print(msg, file=sys.stderr)


def _read_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None


def _write_json(obj: dict, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_log(path: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"file not found: {path}") from None
    return parse_event_log(text)


def _cmd_synth(args) -> int:
    config = GeneratorConfig.from_dict(_read_json(args.config))
    if args.seed is not None:
        config = GeneratorConfig.from_dict({**config.to_dict(), "seed": args.seed})
    result = generate(config)
    log_path, truth_path = write_outputs(result, args.out)
    _info(f"wrote {log_path} ({len(result.entries)} stays, "
          f"{len(result.profiles)} patients) and {truth_path}")
    return 0


def _parse_lags(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x)
    except ValueError:
        raise ConfigError(f"bad --lags {text!r}, expected e.g. 1,24,168") from None


def _auto_horizon(entries, width: float) -> float:
    latest = max(e.enter_time for e in entries)
    return (int(latest // width) + 1) * width


def _stay_targets(entries, profiles, department):
    by_id = {p.patient_id: p for p in profiles}
    profs, targets = [], []
    for e in entries:
        if department is not None and e.department != department:
            continue
        profs.append(by_id[e.patient_id])
        targets.append(e.los_hours)
    return profs, targets


def _admission_targets(entries, profiles):
    by_id = {p.patient_id: p for p in profiles}
    totals: dict[str, float] = {}
    for e in entries:
        totals[e.patient_id] = totals.get(e.patient_id, 0.0) + e.cost
    pids = sorted(totals)
    return [by_id[pid] for pid in pids], [totals[pid] for pid in pids]


def _cmd_fit(args) -> int:
    entries, profiles = _load_log(args.log)
    if not entries:
        raise DataError("event log is empty")
    kind = args.model

    if kind in INFLOW_KINDS:
        width = args.bucket_width
        horizon = args.horizon if args.horizon is not None else _auto_horizon(entries, width)
        series = bucketize(entries, width, args.start, horizon)
        if kind == "poisson":
            model = inflow.fit_poisson(series)
        elif kind == "seasonal_naive":
            if args.m is None:
                raise ConfigError("seasonal_naive requires --m")
            model = inflow.fit_seasonal_naive(series, args.m)
        elif kind == "holt_winters":
            if args.m is None:
                raise ConfigError("holt_winters requires --m")
            model = inflow.fit_holt_winters(series, args.m, args.alpha, args.beta, args.gamma)
        else:
            if args.lags is None:
                raise ConfigError("lag_regression requires --lags")
            calendar = () if args.calendar == "none" else inflow.default_calendar(width)
            model = inflow.fit_lag_regression(series, _parse_lags(args.lags), calendar)
        payload = inflow.to_jsonable(model)

    elif kind in LOS_KINDS or kind in COT_KINDS:
        if kind in COT_KINDS:
            profs, targets = _admission_targets(entries, profiles)
        else:
            profs, targets = _stay_targets(entries, profiles, args.department)
        if kind == "lognormal_los":
            model = estimators.fit_lognormal(targets)
        elif kind == "gamma_los":
            model = estimators.fit_gamma_mom(targets)
        elif kind == "weibull_los":
            model = estimators.fit_weibull(targets, strict=args.strict)
        elif kind == "mixture_los":
            if args.k is None or args.seed is None:
                raise ConfigError("mixture_los requires --k and --seed")
            model = estimators.fit_mixture_em(targets, args.k, args.seed)
        elif kind == "conditional_los":
            model = estimators.fit_conditional(profs, targets, estimators.TARGET_LOS)
        elif kind == "tree_los":
            model = estimators.fit_tree(profs, targets, args.max_depth, args.min_leaf)
        elif kind == "lognormal_cot":
            model = estimators.fit_lognormal([max(t, 0.01) for t in targets])
        else:  # conditional_cot
            model = estimators.fit_conditional(profs, targets, estimators.TARGET_COT)
        payload = estimators.to_jsonable(model)

    else:  # pathway kinds
        trajectories = extract_trajectories(entries)
        if kind == "transition":
            payload = pathways.matrix_to_jsonable(
                pathways.fit_transition_matrix(trajectories)
            )
        else:
            if args.k is None or args.seed is None:
                raise ConfigError("clusters requires --k and --seed")
            by_id = {p.patient_id: p for p in profiles}
            traj_profiles = [by_id[tr.patient_id] for tr in trajectories]
            payload = pathways.clusters_to_jsonable(
                pathways.cluster(trajectories, args.k, args.seed, traj_profiles)
            )

    _write_json(payload, Path(args.out))
    _info(f"fitted {kind}, wrote {args.out}")
    return 0


def _cmd_forecast(args) -> int:
    payload = _read_json(args.model)
    kind = payload.get("kind")
    if kind not in ("poisson", "seasonal_naive", "holt_winters", "lag_regression"):
        raise ConfigError(f"model kind {kind!r} cannot forecast")
    model = inflow.from_jsonable(payload)
    for value in inflow.forecast(model, args.h):
        sys.stdout.write(f"{value:.6f}\n")
    return 0


def _parse_estimator_model(d: dict):
    return estimators.from_jsonable(d)


def _parse_pathway_model(d: dict):
    if d.get("kind") == "transition_matrix":
        return pathways.matrix_from_jsonable(d)
    if d.get("kind") == "pathway_clusters":
        return pathways.clusters_from_jsonable(d)
    raise ConfigError(f"unknown pathway model kind {d.get('kind')!r}")


def _parse_sampler(d: dict, base: Path):
    kind = d.get("kind")
    if kind == "empirical":
        if "log" in d:
            _, profiles = _load_log(str((base / d["log"]).resolve()))
        else:
            raise ConfigError("empirical sampler requires a 'log' path")
        if not profiles:
            raise DataError("empirical sampler log has no profiles")
        return EmpiricalSampler(tuple(profiles))
    if kind == "attributes":
        return AttributeSampler(
            age_mix=AgeMixture(**d["age_mix"]),
            gender_p=float(d["gender_p"]),
            comorbidity=LinearRate(**d["comorbidity"]),
            drg_probs={str(k): float(v) for k, v in d["drg_probs"].items()},
        )
    raise ConfigError(f"unknown profile sampler kind {kind!r}")


def _parse_driver(d: dict):
    kind = d.get("kind")
    if kind == "poisson":
        return PoissonBaseline(lam=float(d["lam"]),
                               bucket_width=float(d.get("bucket_width", 24.0)))
    if kind == "forecast":
        return ForecastDriven(
            forecast=tuple(float(v) for v in d["forecast"]),
            bucket_width=float(d["bucket_width"]),
            deterministic=bool(d.get("deterministic", False)),
        )
    raise ConfigError(f"unknown arrival driver kind {kind!r}")


def _cmd_simulate(args) -> int:
    d = _read_json(args.config)
    base = Path(args.config).parent
    try:
        config = SimConfig(
            departments=tuple(
                DepartmentSpec(name=dep["name"], bed_capacity=dep.get("bed_capacity"))
                for dep in d["departments"]
            ),
            horizon=float(d["horizon"]),
            warm_up=float(d.get("warm_up", 0.0)),
            arrival_driver=_parse_driver(d["arrival_driver"]),
            los_models={
                name: _parse_estimator_model(m) for name, m in d["los_models"].items()
            },
            cot_model=_parse_estimator_model(d["cot_model"]),
            pathway=_parse_pathway_model(d["pathway"]),
            profile_sampler=_parse_sampler(d["profile_sampler"], base),
            seed=int(d["seed"]),
            replications=int(d.get("replications", 1)),
        )
    except KeyError as exc:
        raise ConfigError(f"simulation config missing key {exc}") from None
    results, summary = replicate(config, jobs=args.jobs,
                                 census_bucket=float(d.get("census_bucket", 24.0)))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_census_csv(results[0], out / "census.csv")
    write_patients_csv(results[0], out / "patients.csv")
    write_summary_json(results, summary, out / "summary.json")
    _info(f"simulated {config.replications} replication(s), wrote {out}/summary.json")
    return 0


def _cmd_compare(args) -> int:
    scenario = ScenarioConfig.from_dict(_read_json(args.scenario))
    if args.jobs is not None:
        scenario = dataclasses.replace(scenario, jobs=args.jobs)
    report = run_experiment(scenario, out_dir=args.out)
    _info(f"wrote {Path(args.out) / 'report.json'}")
    _info("verdicts: " + ", ".join(f"{k}={v}" for k, v in report.verdicts.items()))
    return 0


def _format_report(d: dict) -> str:
    lines = ["two-stack comparison"]
    lines.append(f"  split at t={d['split_time']:.1f}h of {d['horizon']:.1f}h; "
                 f"train patients={d['n_train_patients']}, "
                 f"test patients={d['n_test_patients']}")
    a, b = d["inflow_metrics"]["stack_a"], d["inflow_metrics"]["stack_b"]
    lines.append("  inflow (held-out buckets):")
    for name, m in (("stack A", a), ("stack B", b)):
        lines.append(
            f"    {name}: MAE={m['mae']:.3f} RMSE={m['rmse']:.3f} "
            f"MAPE={m['mape_percent']:.1f}% R={m['r']:.3f}"
        )
    lines.append("  census MAE (beds, daily buckets):")
    for stack in ("stack_a", "stack_b"):
        per = ", ".join(f"{k}={v:.2f}" for k, v in sorted(d["census_mae"][stack].items()))
        lines.append(f"    {stack}: mean={d['census_mae_mean'][stack]:.3f} ({per})")
    lines.append(
        f"  stay-duration KS: A={d['los_ks']['stack_a']:.4f} "
        f"B={d['los_ks']['stack_b']:.4f}"
    )
    lines.append(
        f"  cost rel. error: A={d['cot_rel_err']['stack_a']:.4f} "
        f"B={d['cot_rel_err']['stack_b']:.4f}"
    )
    lines.append(
        f"  pathway TV: A={d['pathway_tv']['stack_a']:.4f} "
        f"B={d['pathway_tv']['stack_b']:.4f}"
    )
    lines.append("  verdicts (B no worse than A): "
                 + ", ".join(f"{k}={v}" for k, v in sorted(d["verdicts"].items())))
    return "\n".join(lines)


def _format_summary(d: dict) -> str:
    lines = [f"simulation summary ({d['replications']} replication(s), "
             f"horizon {d['horizon']}h)"]
    for key in ("mean_avg_census", "mean_utilization"):
        per = ", ".join(
            f"{k}={'n/a' if v is None else f'{v:.3f}'}" for k, v in sorted(d[key].items())
        )
        lines.append(f"  {key}: {per}")
    for rep in d["per_replication"]:
        lines.append(
            f"  rep {rep['replication']}: admissions={rep['admissions']} "
            f"discharges={rep['discharges']} in_system={rep['in_system']} "
            f"truncated={rep['truncated_walks']}"
        )
    return "\n".join(lines)


def _cmd_report(args) -> int:
    folder = Path(args.indir)
    report = folder / "report.json"
    summary = folder / "summary.json"
    if report.exists():
        sys.stdout.write(_format_report(_read_json(str(report))) + "\n")
        return 0
    if summary.exists():
        sys.stdout.write(_format_summary(_read_json(str(summary))) + "\n")
        return 0
    raise ConfigError(f"{folder} contains neither report.json nor summary.json")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="patientflow",
        description="Hospital patient-flow simulation with learned sub-models",
    )
    parser.add_argument("--version", action="version", version=f"patientflow {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic event log")
    p.add_argument("--config", required=True, help="generator config JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("fit", help="fit a model from an event log")
    p.add_argument("--log", required=True, help="event log CSV")
    p.add_argument("--model", required=True, choices=FIT_KINDS)
    p.add_argument("--out", required=True, help="output model JSON")
    p.add_argument("--bucket-width", type=float, default=24.0)
    p.add_argument("--start", type=float, default=0.0)
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--m", type=int, default=None, help="seasonal period in buckets")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--lags", default=None, help="comma-separated lags, e.g. 1,24,168")
    p.add_argument("--calendar", choices=("default", "none"), default="default")
    p.add_argument("--department", default=None, help="restrict stay targets")
    p.add_argument("--k", type=int, default=None, help="components or clusters")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--max-depth", type=int, default=6)
    p.add_argument("--min-leaf", type=int, default=20)
    p.add_argument("--strict", action="store_true",
                   help="turn numeric warnings into failures (exit 4)")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("forecast", help="forecast from a fitted inflow model")
    p.add_argument("--model", required=True, help="model JSON from fit")
    p.add_argument("--h", type=int, required=True, help="buckets ahead")
    p.set_defaults(func=_cmd_forecast)

    p = sub.add_parser("simulate", help="run the simulation engine")
    p.add_argument("--config", required=True, help="simulation config JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("compare", help="fit both stacks and compare on held-out data")
    p.add_argument("--scenario", required=True, help="scenario JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("report", help="print a human-readable summary")
    p.add_argument("--in", dest="indir", required=True, help="directory with outputs")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage to stderr
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except ConfigError as exc:
        _info(f"error: {exc}")
        return 2
    except NumericError as exc:
        _info(f"numeric failure: {exc}")
        return 4
    except PatientFlowError as exc:
        _info(f"data error: {exc}")
        return 3


if __name__ == "__main__":
    raise SystemExit(main())

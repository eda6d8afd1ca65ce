"""Head-to-head comparison of two simulation stacks on oracle data.

Stack A is the classical composition: homogeneous Poisson inflow,
per-department lognormal stay durations, lognormal admission costs and
one global transition matrix. Stack B swaps in the learned pieces: a
time-series forecaster, attribute-conditioned duration and cost models
and clustered pathways with attribute-based assignment.

Both stacks are fitted on the training window of a generated log, drive
the same simulation engine over the held-out window (with common random
numbers, i.e. the same engine seed), and are scored against the held-out
ground truth: forecast metrics on admissions per bucket, mean absolute
error of the daily census curve per department, a two-sample KS distance
on stay durations, relative error of the mean cost per admission, and
the total-variation gap between the routing matrix a patient got and the
matrix of their latent class.

Patients straddling the split (admitted before it, discharged after)
belong to training and are excluded from the held-out comparison; there
is no censoring machinery. Both stacks share one empirical profile
resampler built from training patients, so differences come only from
the modeled components.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import estimators, inflow, pathways
from .domain import (
    DepartmentSpec,
    EventLogEntry,
    bucketize,
    extract_trajectories,
    first_stays,
)
from .engine import (
    EmpiricalSampler,
    ForecastDriven,
    PoissonBaseline,
    ReplicationSummary,
    SimConfig,
    SimResult,
    bucket_census,
    replicate,
)
from .errors import ConfigError, DataError, WindowMismatch
from .inflow import ForecasterSpec, MetricReport, default_calendar
from .synthehr import GeneratorConfig, GenerateResult, generate
from .pathways import TransitionMatrix

COST_FLOOR = 0.01  # lognormal cost fits need strictly positive totals

STACK_A = "stack_a"
STACK_B = "stack_b"


@dataclass(frozen=True)
class ScenarioConfig:
    """One end-to-end comparison experiment."""

    generator: GeneratorConfig
    split_fraction: float
    bucket_width: float
    forecaster: ForecasterSpec
    los_estimator: str = "conditional"  # or "tree"
    cot_estimator: str = "conditional"
    pathway_k: int | str = 2            # integer, or "sweep"
    capacities: dict | None = None      # department -> bed capacity override
    warm_up: float = 0.0
    replications: int = 20
    census_bucket: float = 24.0
    jobs: int = 1

    def __post_init__(self):
        if not (0.0 < self.split_fraction < 1.0):
            raise ConfigError("split_fraction must be in (0, 1)")
        if self.los_estimator not in ("conditional", "tree"):
            raise ConfigError(f"unknown los_estimator {self.los_estimator!r}")
        if self.cot_estimator != "conditional":
            raise ConfigError(f"unknown cot_estimator {self.cot_estimator!r}")
        if not (isinstance(self.pathway_k, int) or self.pathway_k == "sweep"):
            raise ConfigError("pathway_k must be an integer or 'sweep'")

    @property
    def split_time(self) -> float:
        raw = self.split_fraction * self.generator.horizon
        return math.floor(raw / self.bucket_width + 1e-9) * self.bucket_width

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        gen = GeneratorConfig.from_dict(d["generator"])
        bucket_width = float(d.get("bucket_width", 1.0))
        f = d.get("forecaster", {"kind": "holt_winters", "m": 168})
        calendar = f.get("calendar", "default")
        if calendar == "default":
            calendar = default_calendar(bucket_width)
        else:
            calendar = tuple(
                inflow.CalendarTerm(int(t["n_phases"]), int(t.get("phase_width", 1)))
                for t in calendar
            )
        spec = ForecasterSpec(
            kind=f["kind"],
            m=f.get("m"),
            alpha=f.get("alpha"),
            beta=f.get("beta"),
            gamma=f.get("gamma"),
            lags=tuple(int(l) for l in f.get("lags", ())),
            calendar=calendar,
        )
        pathway_k = d.get("pathway_k", 2)
        if pathway_k != "sweep":
            pathway_k = int(pathway_k)
        return cls(
            generator=gen,
            split_fraction=float(d["split_fraction"]),
            bucket_width=bucket_width,
            forecaster=spec,
            los_estimator=d.get("los_estimator", "conditional"),
            cot_estimator=d.get("cot_estimator", "conditional"),
            pathway_k=pathway_k,
            capacities=d.get("capacities"),
            warm_up=float(d.get("warm_up", 0.0)),
            replications=int(d.get("replications", 20)),
            census_bucket=float(d.get("census_bucket", 24.0)),
            jobs=int(d.get("jobs", 1)),
        )

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from None


@dataclass(frozen=True)
class ComparisonReport:
    split_time: float
    horizon: float
    n_train_patients: int
    n_test_patients: int
    inflow_metrics: dict       # stack -> MetricReport
    census_mae: dict           # stack -> {department: MAE}
    census_mae_mean: dict      # stack -> mean over departments
    los_ks: dict               # stack -> KS statistic
    cot_rel_err: dict          # stack -> |mean sim - mean truth| / mean truth
    pathway_tv: dict           # stack -> mean TV(used matrix, latent-class matrix)
    verdicts: dict             # metric -> True when stack B <= stack A
    fingerprints: dict         # stack -> {component: md5 of serialized model}

    def to_jsonable(self) -> dict:
        return {
            "split_time": self.split_time,
            "horizon": self.horizon,
            "n_train_patients": self.n_train_patients,
            "n_test_patients": self.n_test_patients,
            "inflow_metrics": {k: asdict(v) for k, v in self.inflow_metrics.items()},
            "census_mae": self.census_mae,
            "census_mae_mean": self.census_mae_mean,
            "los_ks": self.los_ks,
            "cot_rel_err": self.cot_rel_err,
            "pathway_tv": self.pathway_tv,
            "verdicts": self.verdicts,
            "fingerprints": self.fingerprints,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_jsonable(), indent=2, sort_keys=True)


def model_fingerprint(jsonable: dict) -> str:
    return hashlib.md5(
        json.dumps(jsonable, sort_keys=True).encode("utf-8")
    ).hexdigest()


# --- ground-truth census ------------------------------------------------------

def truth_census_steps(
    entries: Sequence[EventLogEntry],
    department: str,
    window_start: float,
    window_end: float,
) -> list[tuple[float, int]]:
    """Sweep-line census step series for one department.

    Times in the result are relative to ``window_start``; stays are
    clipped to the window. At every boundary the census equals entries
    so far minus exits so far.
    """
    if window_end <= window_start:
        raise WindowMismatch("empty census window")
    deltas: list[tuple[float, int]] = []
    for e in entries:
        if e.department != department:
            continue
        lo = max(e.enter_time, window_start)
        hi = min(e.exit_time, window_end)
        if hi > lo:
            deltas.append((lo - window_start, +1))
            deltas.append((hi - window_start, -1))
    deltas.sort()
    steps = [(0.0, 0)]
    occ = 0
    for t, d in deltas:
        occ += d
        steps.append((t, occ))
    steps.append((window_end - window_start, occ))
    return steps


def census_error(
    summary: ReplicationSummary,
    entries: Sequence[EventLogEntry],
    window_start: float,
    departments: Sequence[str],
    warm_up: float = 0.0,
) -> dict[str, float]:
    """Per-department MAE between replication-mean and true census curves.

    Both curves are bucketed at the summary's bucket width; buckets that
    start before ``warm_up`` (relative time) are excluded.
    """
    window_end = window_start + summary.horizon
    width = summary.bucket_width
    out = {}
    for dept in departments:
        sim = np.asarray(summary.mean_census[dept])
        steps = truth_census_steps(entries, dept, window_start, window_end)
        truth = np.asarray(bucket_census(steps, width, summary.horizon))
        if len(sim) != len(truth):
            raise WindowMismatch(
                f"{dept}: {len(sim)} sim buckets vs {len(truth)} truth buckets"
            )
        keep = np.arange(len(sim)) * width >= warm_up
        out[dept] = float(np.mean(np.abs(sim[keep] - truth[keep])))
    return out


# --- stack fitting ---------------------------------------------------------------

def _stay_rows(entries, pids, profile_by_id):
    """(profile, stay hours) pairs grouped per department."""
    rows: dict[str, tuple[list, list]] = {}
    for e in entries:
        if e.patient_id not in pids:
            continue
        profs, targets = rows.setdefault(e.department, ([], []))
        profs.append(profile_by_id[e.patient_id])
        targets.append(e.los_hours)
    return rows


def _admission_costs(entries, pids):
    totals: dict[str, float] = {}
    for e in entries:
        if e.patient_id in pids:
            totals[e.patient_id] = totals.get(e.patient_id, 0.0) + e.cost
    return totals


@dataclass(frozen=True)
class _Stack:
    name: str
    inflow_model: object
    los_models: dict
    cot_model: object
    pathway: object
    fingerprints: dict


def _fit_stack_a(train_series, stay_rows, cost_by_pid, trajectories, departments):
    inflow_model = inflow.fit_poisson(train_series)
    all_los = [t for _, targets in stay_rows.values() for t in targets]
    los_models = {}
    for dept in departments:
        targets = stay_rows.get(dept, (None, []))[1]
        los_models[dept] = estimators.fit_lognormal(targets if len(targets) >= 2 else all_los)
    costs = [max(c, COST_FLOOR) for c in cost_by_pid.values()]
    cot_model = estimators.fit_lognormal(costs)
    pathway = pathways.fit_transition_matrix(trajectories, departments)
    fingerprints = {
        "inflow": model_fingerprint(inflow.to_jsonable(inflow_model)),
        "cot": model_fingerprint(estimators.to_jsonable(cot_model)),
        "pathway": model_fingerprint(pathways.matrix_to_jsonable(pathway)),
    }
    for dept in departments:
        fingerprints[f"los:{dept}"] = model_fingerprint(
            estimators.to_jsonable(los_models[dept])
        )
    return _Stack(STACK_A, inflow_model, los_models, cot_model, pathway, fingerprints)


def _fit_stack_b(scenario, train_series, stay_rows, cost_by_pid, trajectories,
                 train_profiles, profile_by_id, departments):
    inflow_model = scenario.forecaster.fit(train_series)
    all_profiles = [p for profs, _ in stay_rows.values() for p in profs]
    all_targets = [t for _, targets in stay_rows.values() for t in targets]
    los_models = {}
    for dept in departments:
        profs, targets = stay_rows.get(dept, ([], []))
        # departments with too little data fall back to a pooled fit
        if scenario.los_estimator == "tree":
            try:
                los_models[dept] = estimators.fit_tree(profs, targets)
            except DataError:
                los_models[dept] = estimators.fit_tree(all_profiles, all_targets)
        else:
            try:
                los_models[dept] = estimators.fit_conditional(
                    profs, targets, estimators.TARGET_LOS
                )
            except DataError:
                los_models[dept] = estimators.fit_conditional(
                    all_profiles, all_targets, estimators.TARGET_LOS
                )
    cost_profiles = [profile_by_id[pid] for pid in cost_by_pid]
    cot_model = estimators.fit_conditional(
        cost_profiles, list(cost_by_pid.values()), estimators.TARGET_COT
    )
    traj_profiles = [profile_by_id[tr.patient_id] for tr in trajectories]
    if scenario.pathway_k == "sweep":
        pathway = pathways.sweep_k(
            trajectories, scenario.generator.seed, traj_profiles,
            departments=departments,
        )
    else:
        pathway = pathways.cluster(
            trajectories, scenario.pathway_k, scenario.generator.seed,
            traj_profiles, departments,
        )
    fingerprints = {
        "inflow": model_fingerprint(inflow.to_jsonable(inflow_model)),
        "cot": model_fingerprint(estimators.to_jsonable(cot_model)),
        "pathway": model_fingerprint(pathways.clusters_to_jsonable(pathway)),
    }
    for dept in departments:
        fingerprints[f"los:{dept}"] = model_fingerprint(
            estimators.to_jsonable(los_models[dept])
        )
    return _Stack(STACK_B, inflow_model, los_models, cot_model, pathway, fingerprints)


def generator_class_matrix(config: GeneratorConfig, severity: int) -> TransitionMatrix:
    """The generating chain of one severity class as a TransitionMatrix
    (ENTRY row one-hot on the entry department, alphabet sorted)."""
    departments = tuple(sorted(config.departments))
    src_order = list(config.departments)
    n = len(departments)
    probs = np.zeros((n + 1, n + 1))
    probs[0, departments.index(config.entry_department)] = 1.0
    raw = config.transition_matrices[severity]
    for i, dept in enumerate(departments):
        row = raw[src_order.index(dept)]
        for j, target in enumerate(departments):
            probs[1 + i, j] = row[src_order.index(target)]
        probs[1 + i, n] = row[-1]
    return TransitionMatrix(
        departments=departments,
        probs=tuple(tuple(float(p) for p in r) for r in probs),
        counts=tuple(tuple(0 for _ in r) for r in probs),
        row_observed=tuple(True for _ in range(n + 1)),
    )


# --- the experiment ----------------------------------------------------------------

def run_experiment(
    scenario: ScenarioConfig,
    out_dir: str | Path | None = None,
    oracle: GenerateResult | None = None,
) -> ComparisonReport:
    """Generate, split, fit both stacks, simulate the held-out window,
    and score both against ground truth. Deterministic given the
    scenario (byte-identical report JSON)."""
    gen_config = scenario.generator
    result = oracle if oracle is not None else generate(gen_config)
    entries, profiles, truth = result.entries, result.profiles, result.truth
    profile_by_id = {p.patient_id: p for p in profiles}

    t_split = scenario.split_time
    horizon = gen_config.horizon
    h_test = horizon - t_split
    if t_split <= 0 or h_test <= 0:
        raise ConfigError("split leaves an empty window")

    admissions = first_stays(entries)
    train_pids = {pid for pid, t in admissions.items() if t < t_split}
    test_pids = {pid for pid, t in admissions.items() if t >= t_split}
    train_entries = [e for e in entries if e.patient_id in train_pids]
    test_entries = [e for e in entries if e.patient_id in test_pids]
    departments = tuple(sorted(gen_config.departments))

    train_series = bucketize(train_entries, scenario.bucket_width, 0.0, t_split)
    stay_rows = _stay_rows(train_entries, train_pids, profile_by_id)
    cost_by_pid = _admission_costs(train_entries, train_pids)
    trajectories = extract_trajectories(train_entries)
    train_profiles = [profile_by_id[pid] for pid in sorted(train_pids)]

    stack_a = _fit_stack_a(train_series, stay_rows, cost_by_pid, trajectories,
                           departments)
    stack_b = _fit_stack_b(scenario, train_series, stay_rows, cost_by_pid,
                           trajectories, train_profiles, profile_by_id, departments)

    # held-out admissions per bucket
    n_test_buckets = int(round(h_test / scenario.bucket_width))
    test_series = bucketize(entries, scenario.bucket_width, t_split, h_test)
    forecasts = {
        STACK_A: inflow.forecast(stack_a.inflow_model, n_test_buckets),
        STACK_B: inflow.forecast(stack_b.inflow_model, n_test_buckets),
    }
    inflow_metrics = {
        name: inflow.evaluate(fc, test_series.counts) for name, fc in forecasts.items()
    }

    # simulate the held-out window with both stacks (common random numbers)
    capacities = scenario.capacities or {}
    dept_specs = tuple(
        DepartmentSpec(name=d, bed_capacity=capacities.get(d)) for d in departments
    )
    sampler = EmpiricalSampler(tuple(train_profiles))
    sims: dict[str, tuple[list[SimResult], ReplicationSummary]] = {}
    for stack, driver in (
        (stack_a, PoissonBaseline(lam=stack_a.inflow_model.lam,
                                  bucket_width=scenario.bucket_width)),
        (stack_b, ForecastDriven(forecast=tuple(forecasts[STACK_B]),
                                 bucket_width=scenario.bucket_width)),
    ):
        config = SimConfig(
            departments=dept_specs,
            horizon=h_test,
            warm_up=scenario.warm_up,
            arrival_driver=driver,
            los_models=stack.los_models,
            cot_model=stack.cot_model,
            pathway=stack.pathway,
            profile_sampler=sampler,
            seed=gen_config.seed,
            replications=scenario.replications,
        )
        sims[stack.name] = replicate(config, jobs=scenario.jobs,
                                     census_bucket=scenario.census_bucket)

    census_mae = {
        name: census_error(summary, test_entries, t_split, departments,
                           scenario.warm_up)
        for name, (_, summary) in sims.items()
    }
    census_mae_mean = {
        name: float(np.mean(list(per_dept.values())))
        for name, per_dept in census_mae.items()
    }

    # stay-duration fidelity: simulated stays vs held-out true stays.
    # KS is computed per department (so routing mix does not confound
    # distributional fit) and averaged weighted by true stay counts.
    truth_los = [e.los_hours for e in test_entries]
    truth_los_by_dept = {d: [] for d in departments}
    for e in test_entries:
        truth_los_by_dept[e.department].append(e.los_hours)
    los_ks = {}
    sim_los_by_stack = {}
    for name, (results, _) in sims.items():
        sim_by_dept = {d: [] for d in departments}
        for res in results:
            for p in res.patients:
                if p.admission_time < scenario.warm_up:
                    continue
                for s in p.stays:
                    sim_by_dept[s.department].append(s.los)
        sim_los_by_stack[name] = [v for d in departments for v in sim_by_dept[d]]
        acc = 0.0
        total = 0
        for d in departments:
            if sim_by_dept[d] and truth_los_by_dept[d]:
                n = len(truth_los_by_dept[d])
                acc += n * estimators.ks_statistic(sim_by_dept[d], truth_los_by_dept[d])
                total += n
        los_ks[name] = acc / total

    # cost per admission, both sides restricted to patients discharged
    # inside the window so horizon censoring hits them identically
    last_exit: dict[str, float] = {}
    for e in test_entries:
        last_exit[e.patient_id] = max(last_exit.get(e.patient_id, 0.0), e.exit_time)
    truth_costs = _admission_costs(test_entries, test_pids)
    discharged_costs = [
        c for pid, c in truth_costs.items() if last_exit[pid] <= horizon
    ]
    truth_mean_cost = float(np.mean(discharged_costs))
    cot_rel_err = {}
    for name, (results, _) in sims.items():
        sim_costs = [
            p.total_cost
            for res in results
            for p in res.patients
            if p.total_cost is not None and p.admission_time >= scenario.warm_up
        ]
        sim_mean = float(np.mean(sim_costs)) if sim_costs else math.nan
        cot_rel_err[name] = abs(sim_mean - truth_mean_cost) / truth_mean_cost

    # pathway matrices vs each held-out patient's latent class
    class_matrices = [
        generator_class_matrix(gen_config, c) for c in range(gen_config.n_classes)
    ]
    tv_a = []
    tv_b = []
    clusters_b = stack_b.pathway
    for pid in sorted(test_pids):
        cls = truth.latent_class[pid]
        truth_matrix = class_matrices[cls]
        tv_a.append(pathways.row_average_tv(stack_a.pathway, truth_matrix))
        idx = pathways.assign(profile_by_id[pid], clusters_b)
        tv_b.append(
            pathways.row_average_tv(clusters_b.routing_matrix(idx), truth_matrix)
        )
    pathway_tv = {STACK_A: float(np.mean(tv_a)), STACK_B: float(np.mean(tv_b))}

    verdicts = {
        "inflow_mape": inflow_metrics[STACK_B].mape_percent
        <= inflow_metrics[STACK_A].mape_percent,
        "census_mae": census_mae_mean[STACK_B] <= census_mae_mean[STACK_A],
        "los_ks": los_ks[STACK_B] <= los_ks[STACK_A],
        "cot_rel_err": cot_rel_err[STACK_B] <= cot_rel_err[STACK_A],
        "pathway_tv": pathway_tv[STACK_B] <= pathway_tv[STACK_A],
    }

    report = ComparisonReport(
        split_time=t_split,
        horizon=horizon,
        n_train_patients=len(train_pids),
        n_test_patients=len(test_pids),
        inflow_metrics=inflow_metrics,
        census_mae=census_mae,
        census_mae_mean=census_mae_mean,
        los_ks=los_ks,
        cot_rel_err=cot_rel_err,
        pathway_tv=pathway_tv,
        verdicts=verdicts,
        fingerprints={STACK_A: stack_a.fingerprints, STACK_B: stack_b.fingerprints},
    )

    if out_dir is not None:
        _write_outputs(
            Path(out_dir), report, scenario, test_series, forecasts, sims,
            test_entries, t_split, departments, truth_los, sim_los_by_stack,
        )
    return report


# --- plot-ready exports ---------------------------------------------------------

def _write_outputs(out, report, scenario, test_series, forecasts, sims,
                   test_entries, t_split, departments, truth_los, sim_los_by_stack):
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")

    w = scenario.bucket_width
    lines = ["bucket_start_hour,actual,stack_a,stack_b"]
    for i, actual in enumerate(test_series.counts):
        lines.append(
            f"{t_split + i * w:.6f},{actual},"
            f"{forecasts[STACK_A][i]:.6f},{forecasts[STACK_B][i]:.6f}"
        )
    (out / "inflow_forecasts.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    cw = scenario.census_bucket
    h_test = report.horizon - t_split
    lines = ["bucket_start_hour,department,truth,stack_a,stack_b"]
    for dept in departments:
        steps = truth_census_steps(test_entries, dept, t_split, report.horizon)
        truth_curve = bucket_census(steps, cw, h_test)
        a_curve = sims[STACK_A][1].mean_census[dept]
        b_curve = sims[STACK_B][1].mean_census[dept]
        for i, tv in enumerate(truth_curve):
            lines.append(
                f"{t_split + i * cw:.6f},{dept},{tv:.6f},"
                f"{a_curve[i]:.6f},{b_curve[i]:.6f}"
            )
    (out / "census_compare.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    cap = 20000  # keep plot files bounded
    lines = ["source,los_hours"]
    for source, values in (
        ("truth", truth_los),
        (STACK_A, sim_los_by_stack[STACK_A]),
        (STACK_B, sim_los_by_stack[STACK_B]),
    ):
        stride = max(1, len(values) // cap)
        for v in values[::stride]:
            lines.append(f"{source},{v:.6f}")
    (out / "los_hist.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

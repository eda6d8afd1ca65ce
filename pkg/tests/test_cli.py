import json
from pathlib import Path

import pytest

from patientflow.cli import main
from patientflow.domain import parse_event_log

from conftest import flat_generator_dict


def write_json(path: Path, obj) -> str:
    path.write_text(json.dumps(obj, indent=2))
    return str(path)


@pytest.fixture()
def gen_config_path(tmp_path):
    return write_json(tmp_path / "gen.json", flat_generator_dict(horizon=300.0))


def test_version(capsys):
    assert main(["--version"]) == 0
    assert "patientflow" in capsys.readouterr().out


@pytest.mark.parametrize(
    "command", ["synth", "fit", "forecast", "simulate", "compare", "report"]
)
def test_help_per_subcommand(command, capsys):
    assert main([command, "--help"]) == 0
    assert "usage" in capsys.readouterr().out.lower()


def test_missing_required_flag_is_usage_error(capsys):
    assert main(["synth"]) == 2
    err = capsys.readouterr().err
    assert "usage" in err.lower()


def test_unknown_flag_rejected(capsys):
    assert main(["synth", "--config", "x.json", "--out", "y", "--bogus"]) == 2


def test_missing_config_file_exit_2(tmp_path, capsys):
    assert main(["synth", "--config", str(tmp_path / "nope.json"), "--out",
                 str(tmp_path / "out")]) == 2
    assert capsys.readouterr().out == ""  # diagnostics only on stderr


def test_synth_writes_parseable_log(tmp_path, gen_config_path, capsys):
    out = tmp_path / "data"
    assert main(["synth", "--config", gen_config_path, "--out", str(out)]) == 0
    assert capsys.readouterr().out == ""
    log_text = (out / "log.csv").read_text()
    entries, profiles = parse_event_log(log_text)
    assert entries and profiles
    truth = json.loads((out / "ground_truth.json").read_text())
    assert truth["n_patients"] == len(profiles)


def test_synth_byte_reproducible(tmp_path, gen_config_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["synth", "--config", gen_config_path, "--out", str(out_a)]) == 0
    assert main(["synth", "--config", gen_config_path, "--out", str(out_b)]) == 0
    assert (out_a / "log.csv").read_bytes() == (out_b / "log.csv").read_bytes()
    assert (out_a / "ground_truth.json").read_bytes() == (
        out_b / "ground_truth.json"
    ).read_bytes()


def test_synth_seed_override_changes_output(tmp_path, gen_config_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    main(["synth", "--config", gen_config_path, "--out", str(out_a)])
    main(["synth", "--config", gen_config_path, "--out", str(out_b), "--seed", "9"])
    assert (out_a / "log.csv").read_text() != (out_b / "log.csv").read_text()


@pytest.fixture()
def log_path(tmp_path, gen_config_path):
    out = tmp_path / "data"
    main(["synth", "--config", gen_config_path, "--out", str(out)])
    return str(out / "log.csv")


def test_forecast_poisson_stdout_format(tmp_path, capsys):
    model = write_json(
        tmp_path / "model.json",
        {"kind": "poisson", "lam": 4.0, "degenerate": False},
    )
    assert main(["forecast", "--model", model, "--h", "2"]) == 0
    assert capsys.readouterr().out == "4.000000\n4.000000\n"


def test_fit_then_forecast_round_trip(tmp_path, log_path, capsys):
    model_path = tmp_path / "poisson.json"
    assert main(["fit", "--log", log_path, "--model", "poisson",
                 "--bucket-width", "24", "--out", str(model_path)]) == 0
    capsys.readouterr()
    assert main(["forecast", "--model", str(model_path), "--h", "3"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 3
    assert len({*lines}) == 1  # constant forecast
    float(lines[0])


def test_fit_estimator_kinds(tmp_path, log_path):
    for kind in ("lognormal_los", "gamma_los", "weibull_los", "conditional_los",
                 "lognormal_cot", "conditional_cot", "transition"):
        out = tmp_path / f"{kind}.json"
        assert main(["fit", "--log", log_path, "--model", kind,
                     "--out", str(out)]) == 0, kind
        assert json.loads(out.read_text())["kind"]


def test_fit_mixture_requires_seed(tmp_path, log_path):
    out = tmp_path / "m.json"
    assert main(["fit", "--log", log_path, "--model", "mixture_los", "--k", "2",
                 "--out", str(out)]) == 2
    assert main(["fit", "--log", log_path, "--model", "mixture_los", "--k", "2",
                 "--seed", "1", "--out", str(out)]) == 0


def test_fit_clusters(tmp_path, log_path):
    out = tmp_path / "clusters.json"
    assert main(["fit", "--log", log_path, "--model", "clusters", "--k", "2",
                 "--seed", "3", "--out", str(out)]) == 0
    payload = json.loads(out.read_text())
    assert payload["kind"] == "pathway_clusters"
    assert payload["k"] == 2


def test_fit_department_filter_failure_is_data_error(tmp_path, log_path):
    out = tmp_path / "m.json"
    code = main(["fit", "--log", log_path, "--model", "lognormal_los",
                 "--department", "NOWHERE", "--out", str(out)])
    assert code == 3


def test_forecast_rejects_non_inflow_model(tmp_path, log_path, capsys):
    model_path = tmp_path / "ln.json"
    main(["fit", "--log", log_path, "--model", "lognormal_los", "--out",
          str(model_path)])
    assert main(["forecast", "--model", str(model_path), "--h", "2"]) == 2


def test_simulate_writes_outputs(tmp_path, log_path):
    sim_config = {
        "seed": 5,
        "horizon": 480.0,
        "warm_up": 0.0,
        "replications": 2,
        "departments": [{"name": "ER", "bed_capacity": None},
                        {"name": "WARD", "bed_capacity": 20}],
        "arrival_driver": {"kind": "poisson", "lam": 24.0, "bucket_width": 24.0},
        "los_models": {
            "ER": {"kind": "lognormal", "mu": 3.0, "sigma": 0.3, "n": 10, "loglik": 0.0},
            "WARD": {"kind": "lognormal", "mu": 3.5, "sigma": 0.3, "n": 10, "loglik": 0.0},
        },
        "cot_model": {"kind": "lognormal", "mu": 6.0, "sigma": 0.5, "n": 10, "loglik": 0.0},
        "pathway": {
            "kind": "transition_matrix",
            "departments": ["ER", "WARD"],
            "probs": [[1.0, 0.0, 0.0], [0.0, 0.4, 0.6], [0.0, 0.0, 1.0]],
            "counts": [[1, 0, 0], [0, 2, 3], [0, 0, 1]],
            "row_observed": [True, True, True],
        },
        "profile_sampler": {"kind": "empirical", "log": Path(log_path).name},
    }
    config_path = write_json(Path(log_path).parent / "sim.json", sim_config)
    out = tmp_path / "sim_out"
    assert main(["simulate", "--config", config_path, "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["replications"] == 2
    for rep in summary["per_replication"]:
        assert rep["admissions"] == rep["discharges"] + rep["in_system"]
    census_lines = (out / "census.csv").read_text().splitlines()
    assert census_lines[0] == "time,department,occupied"
    patients_lines = (out / "patients.csv").read_text().splitlines()
    assert patients_lines[0] == "patient_id,admission,discharge,los,wait,cost,trajectory"
    assert len(patients_lines) > 100


def test_simulate_deterministic(tmp_path, log_path):
    sim_config = {
        "seed": 6,
        "horizon": 240.0,
        "departments": [{"name": "ER", "bed_capacity": None}],
        "arrival_driver": {"kind": "forecast", "forecast": [10.0] * 10,
                           "bucket_width": 24.0},
        "los_models": {"ER": {"kind": "lognormal", "mu": 3.0, "sigma": 0.3,
                              "n": 10, "loglik": 0.0}},
        "cot_model": {"kind": "lognormal", "mu": 6.0, "sigma": 0.5, "n": 10,
                      "loglik": 0.0},
        "pathway": {
            "kind": "transition_matrix",
            "departments": ["ER"],
            "probs": [[1.0, 0.0], [0.0, 1.0]],
            "counts": [[1, 0], [0, 1]],
            "row_observed": [True, True],
        },
        "profile_sampler": {"kind": "attributes",
                            "age_mix": {"weight": 1.0, "mean1": 50.0, "sd1": 10.0,
                                        "mean2": 50.0, "sd2": 10.0},
                            "gender_p": 0.5,
                            "comorbidity": {"c0": 1.0, "c1": 0.0},
                            "drg_probs": {"GEN": 1.0}},
    }
    config_path = write_json(tmp_path / "sim.json", sim_config)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", config_path, "--out", str(out_a)]) == 0
    assert main(["simulate", "--config", config_path, "--out", str(out_b)]) == 0
    for name in ("census.csv", "patients.csv", "summary.json"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


@pytest.fixture(scope="module")
def compare_out(tmp_path_factory, default_scenario_dict):
    scenario = json.loads(json.dumps(default_scenario_dict))
    scenario["generator"]["horizon"] = 1008.0
    scenario["generator"]["base_rate"] = 4.0
    scenario["generator"]["seed"] = 4321
    scenario["split_fraction"] = 2.0 / 3.0
    scenario["replications"] = 2
    tmp = tmp_path_factory.mktemp("compare")
    scenario_path = write_json(tmp / "scenario.json", scenario)
    out = tmp / "out"
    code = main(["compare", "--scenario", scenario_path, "--out", str(out)])
    assert code == 0
    return out


def test_compare_writes_report(compare_out):
    report = json.loads((compare_out / "report.json").read_text())
    assert set(report["verdicts"]) == {
        "inflow_mape", "census_mae", "los_ks", "cot_rel_err", "pathway_tv"
    }
    for name in ("inflow_forecasts.csv", "census_compare.csv", "los_hist.csv"):
        assert (compare_out / name).exists()


def test_report_command_renders_comparison(compare_out, capsys):
    assert main(["report", "--in", str(compare_out)]) == 0
    out = capsys.readouterr().out
    assert "census MAE" in out
    assert "verdicts" in out


def test_report_command_renders_simulation_summary(tmp_path, capsys):
    summary = {
        "replications": 1,
        "horizon": 240.0,
        "census_bucket_width": 24.0,
        "per_replication": [{"replication": 0, "admissions": 5, "discharges": 4,
                             "in_system": 1, "truncated_walks": 0,
                             "avg_census": {"ER": 1.2}, "utilization": {"ER": None}}],
        "mean_census_per_bucket": {"ER": [1.0]},
        "sd_census_per_bucket": {"ER": [0.0]},
        "mean_avg_census": {"ER": 1.2},
        "mean_utilization": {"ER": None},
    }
    write_json(tmp_path / "summary.json", summary)
    assert main(["report", "--in", str(tmp_path)]) == 0
    assert "admissions=5" in capsys.readouterr().out


def test_report_command_missing_artifacts(tmp_path):
    assert main(["report", "--in", str(tmp_path)]) == 2

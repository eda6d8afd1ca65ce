import json
from pathlib import Path

import pytest

from patientflow.synthehr import GeneratorConfig, generate

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.fixture(scope="session")
def default_scenario_dict():
    return json.loads((SCENARIOS / "default.json").read_text())


@pytest.fixture(scope="session")
def homogeneous_scenario_dict():
    return json.loads((SCENARIOS / "homogeneous.json").read_text())


@pytest.fixture(scope="session")
def default_generator(default_scenario_dict) -> GeneratorConfig:
    return GeneratorConfig.from_dict(default_scenario_dict["generator"])


@pytest.fixture(scope="session")
def default_oracle(default_generator):
    """The full default-scenario synthetic log (generated once per session)."""
    return generate(default_generator)


def flat_generator_dict(
    seed=4,
    horizon=1000.0,
    base_rate=10.0,
    sigma_ln=0.4,
    beta0=3.0,
    single_department=False,
):
    """A featureless generator: flat rate, no trend, one class, no attribute
    effects. Handy base for moment and conservation oracles."""
    if single_department:
        departments = ["ER"]
        matrices = [[[0.0, 1.0]]]
    else:
        departments = ["ER", "WARD"]
        matrices = [[[0.0, 0.3, 0.7], [0.0, 0.0, 1.0]]]
    return {
        "seed": seed,
        "horizon": horizon,
        "base_rate": base_rate,
        "trend_slope": 0.0,
        "hourly_profile": [1.0] * 24,
        "weekly_profile": [1.0] * 7,
        "monthly_profile": [1.0] * 12,
        "age_mix": {"weight": 0.5, "mean1": 42.0, "sd1": 12.0, "mean2": 72.0, "sd2": 9.0},
        "gender_p": 0.5,
        "comorbidity_rate_by_age": [{"c0": 1.0, "c1": 0.0}],
        "drg_probs": {"GEN": 1.0},
        "los_coeffs": {
            "beta0": beta0,
            "beta_age": 0.0,
            "beta_com": 0.0,
            "drg_offsets": {"GEN": 0.0},
            "sigma_ln": sigma_ln,
        },
        "cot_coeffs": {
            "gamma0": 800.0,
            "gamma1": 45.0,
            "drg_offsets": {"GEN": 0.0},
            "sigma": 250.0,
        },
        "severity_split": 0.0,
        "departments": departments,
        "entry_department": "ER",
        "transition_matrices": matrices,
    }

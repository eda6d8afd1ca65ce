"""Seeded synthetic EHR generator used as the ground-truth oracle.

The generator combines a nonhomogeneous Poisson arrival process (linear
trend times hourly/weekly/monthly multiplier profiles, sampled exactly
by thinning), patient attribute samplers, a per-severity-class Markov
walk over departments, a log-linear stay-duration model and a linear
cost model:

    rate(t)  = base_rate * (1 + trend_slope * t / horizon)
               * hourly[floor(t) mod 24] * weekly[floor(t/24) mod 7]
               * monthly[floor(t/720) mod 12]
    ln LoS   ~ Normal(beta0 + beta_age * age/100 + beta_com * com
               + drg_offset, sigma_ln)          (per stay, hours)
    cost     = max(0, gamma0 + gamma1 * LoS + drg_offset + Normal(0, sigma))

All draws come from named PCG64 streams derived from the config seed
(see ``seeding``), so ``generate`` is bit-identical across runs and
platforms. Default configs shipped in ``scenarios/`` are calibrated only
to reproduce qualitative shapes (trend, seasonality, skew, multi-modal
stay mixes), not any real hospital's numbers.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

from numpy.random import Generator

from .domain import EventLogEntry, PatientProfile, serialize_event_log
from .errors import ConfigError, OutOfHorizon
from .seeding import stream

WALK_CAP = 50       # max stays per patient before forced discharge
LOS_FLOOR = 0.01    # hours; keeps stays positive after 6-decimal rounding

_STREAM_ARRIVALS = 0
_STREAM_PATIENTS = 1


@dataclass(frozen=True)
class AgeMixture:
    """Two-component normal mixture truncated to [0, 120] years."""

    weight: float   # probability of component 1
    mean1: float
    sd1: float
    mean2: float
    sd2: float

    def __post_init__(self):
        if not (0.0 <= self.weight <= 1.0):
            raise ConfigError(f"age_mix.weight {self.weight} outside [0, 1]")
        if self.sd1 < 0 or self.sd2 < 0:
            raise ConfigError("age_mix sd must be >= 0")


@dataclass(frozen=True)
class LinearRate:
    """Poisson comorbidity-count rate c0 + c1 * age, clipped at 0."""

    c0: float
    c1: float

    def at(self, age: int) -> float:
        return max(0.0, self.c0 + self.c1 * age)


@dataclass(frozen=True)
class LosCoeffs:
    beta0: float
    beta_age: float
    beta_com: float
    drg_offsets: dict[str, float]
    sigma_ln: float

    def __post_init__(self):
        if self.sigma_ln < 0:
            raise ConfigError("los_coeffs.sigma_ln must be >= 0")


@dataclass(frozen=True)
class CotCoeffs:
    gamma0: float
    gamma1: float
    drg_offsets: dict[str, float]
    sigma: float

    def __post_init__(self):
        if self.sigma < 0:
            raise ConfigError("cot_coeffs.sigma must be >= 0")


def _check_profile(name: str, values: tuple[float, ...], length: int) -> None:
    if len(values) != length:
        raise ConfigError(f"{name} must have {length} entries, got {len(values)}")
    if any(v <= 0 for v in values):
        raise ConfigError(f"{name} entries must be strictly positive")


@dataclass(frozen=True)
class GeneratorConfig:
    """Every data-generating mechanism, in one seedable document."""

    seed: int
    horizon: float
    base_rate: float
    trend_slope: float
    hourly_profile: tuple[float, ...]
    weekly_profile: tuple[float, ...]
    monthly_profile: tuple[float, ...]
    age_mix: AgeMixture
    gender_p: float
    comorbidity_rate_by_age: tuple[LinearRate, ...]
    drg_probs: dict[str, float]
    los_coeffs: LosCoeffs
    cot_coeffs: CotCoeffs
    severity_split: float
    departments: tuple[str, ...]
    entry_department: str
    transition_matrices: tuple[tuple[tuple[float, ...], ...], ...]

    def __post_init__(self):
        if self.horizon <= 0:
            raise ConfigError("horizon must be positive")
        if self.base_rate <= 0:
            raise ConfigError("base_rate must be positive")
        _check_profile("hourly_profile", self.hourly_profile, 24)
        _check_profile("weekly_profile", self.weekly_profile, 7)
        _check_profile("monthly_profile", self.monthly_profile, 12)
        if not (0.0 <= self.gender_p <= 1.0):
            raise ConfigError("gender_p outside [0, 1]")
        if not (0.0 <= self.severity_split <= 1.0):
            raise ConfigError("severity_split outside [0, 1]")
        if abs(sum(self.drg_probs.values()) - 1.0) > 1e-9:
            raise ConfigError("drg_probs must sum to 1")
        for drg in self.drg_probs:
            if drg not in self.los_coeffs.drg_offsets:
                raise ConfigError(f"los_coeffs.drg_offsets missing {drg!r}")
            if drg not in self.cot_coeffs.drg_offsets:
                raise ConfigError(f"cot_coeffs.drg_offsets missing {drg!r}")
        if self.entry_department not in self.departments:
            raise ConfigError(f"entry_department {self.entry_department!r} unknown")
        if len(set(self.departments)) != len(self.departments):
            raise ConfigError("duplicate department names")
        n_classes = len(self.transition_matrices)
        if n_classes not in (1, 2):
            raise ConfigError("need one transition matrix per severity class (1 or 2)")
        if len(self.comorbidity_rate_by_age) not in (1, n_classes):
            raise ConfigError("comorbidity_rate_by_age must be shared or per class")
        n = len(self.departments)
        for ci, matrix in enumerate(self.transition_matrices):
            if len(matrix) != n:
                raise ConfigError(f"class {ci}: need one row per department")
            for row in matrix:
                if len(row) != n + 1:
                    raise ConfigError(
                        f"class {ci}: rows need {n + 1} entries "
                        "(departments then DISCHARGE)"
                    )
                if any(p < 0 for p in row):
                    raise ConfigError(f"class {ci}: negative transition probability")
                if abs(sum(row) - 1.0) > 1e-9:
                    raise ConfigError(f"class {ci}: row not stochastic")

    @property
    def n_classes(self) -> int:
        return len(self.transition_matrices)

    def comorbidity_rate(self, severity: int) -> LinearRate:
        rates = self.comorbidity_rate_by_age
        return rates[min(severity, len(rates) - 1)]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hourly_profile"] = list(self.hourly_profile)
        d["weekly_profile"] = list(self.weekly_profile)
        d["monthly_profile"] = list(self.monthly_profile)
        d["comorbidity_rate_by_age"] = [asdict(r) for r in self.comorbidity_rate_by_age]
        d["departments"] = list(self.departments)
        d["transition_matrices"] = [
            [list(row) for row in m] for m in self.transition_matrices
        ]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        try:
            return cls(
                seed=int(d["seed"]),
                horizon=float(d["horizon"]),
                base_rate=float(d["base_rate"]),
                trend_slope=float(d["trend_slope"]),
                hourly_profile=tuple(float(v) for v in d["hourly_profile"]),
                weekly_profile=tuple(float(v) for v in d["weekly_profile"]),
                monthly_profile=tuple(float(v) for v in d["monthly_profile"]),
                age_mix=AgeMixture(**d["age_mix"]),
                gender_p=float(d["gender_p"]),
                comorbidity_rate_by_age=tuple(
                    LinearRate(**r) for r in d["comorbidity_rate_by_age"]
                ),
                drg_probs={str(k): float(v) for k, v in d["drg_probs"].items()},
                los_coeffs=LosCoeffs(
                    beta0=float(d["los_coeffs"]["beta0"]),
                    beta_age=float(d["los_coeffs"]["beta_age"]),
                    beta_com=float(d["los_coeffs"]["beta_com"]),
                    drg_offsets=dict(d["los_coeffs"]["drg_offsets"]),
                    sigma_ln=float(d["los_coeffs"]["sigma_ln"]),
                ),
                cot_coeffs=CotCoeffs(
                    gamma0=float(d["cot_coeffs"]["gamma0"]),
                    gamma1=float(d["cot_coeffs"]["gamma1"]),
                    drg_offsets=dict(d["cot_coeffs"]["drg_offsets"]),
                    sigma=float(d["cot_coeffs"]["sigma"]),
                ),
                severity_split=float(d["severity_split"]),
                departments=tuple(str(x) for x in d["departments"]),
                entry_department=str(d["entry_department"]),
                transition_matrices=tuple(
                    tuple(tuple(float(p) for p in row) for row in m)
                    for m in d["transition_matrices"]
                ),
            )
        except KeyError as exc:
            raise ConfigError(f"generator config missing key {exc}") from None

    @classmethod
    def from_json(cls, text: str) -> "GeneratorConfig":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from None


@dataclass(frozen=True)
class GroundTruth:
    """Latent state the simulator never sees but tests may consult."""

    latent_class: dict[str, int]
    truncated_walks: int
    n_patients: int
    config: dict

    def to_json(self) -> str:
        return json.dumps(
            {
                "latent_class": self.latent_class,
                "truncated_walks": self.truncated_walks,
                "n_patients": self.n_patients,
                "config": self.config,
            },
            indent=2,
            sort_keys=True,
        )


@dataclass(frozen=True)
class GenerateResult:
    entries: tuple[EventLogEntry, ...]
    profiles: tuple[PatientProfile, ...]
    truth: GroundTruth


def rate_at(t: float, config: GeneratorConfig) -> float:
    """Instantaneous admission rate (per hour) at time t."""
    if not (0.0 <= t < config.horizon):
        raise OutOfHorizon(f"t={t} outside [0, {config.horizon})")
    hour = int(math.floor(t)) % 24
    day = int(math.floor(t / 24.0)) % 7
    month = int(math.floor(t / 720.0)) % 12
    return (
        config.base_rate
        * (1.0 + config.trend_slope * t / config.horizon)
        * config.hourly_profile[hour]
        * config.weekly_profile[day]
        * config.monthly_profile[month]
    )


def rate_max(config: GeneratorConfig) -> float:
    """Dominating constant rate used by the thinning sampler."""
    return (
        config.base_rate
        * (1.0 + max(0.0, config.trend_slope))
        * max(config.hourly_profile)
        * max(config.weekly_profile)
        * max(config.monthly_profile)
    )


def sample_arrivals(config: GeneratorConfig, rng: Generator) -> list[float]:
    """Sample admission times by thinning a dominating Poisson process.

    Candidate points arrive at constant rate ``rate_max`` and are kept
    with probability rate(t) / rate_max, which yields an exact draw of
    the nonhomogeneous process. Times are strictly increasing.
    """
    rmax = rate_max(config)
    times: list[float] = []
    t = 0.0
    while True:
        t += rng.exponential(1.0 / rmax)
        if t >= config.horizon:
            break
        if rng.random() * rmax < rate_at(t, config):
            times.append(t)
    return times


def sample_profile(
    config: GeneratorConfig,
    rng: Generator,
    severity: int | None = None,
    patient_id: str = "P000000",
) -> PatientProfile:
    """Draw one patient's attributes.

    ``severity`` selects the comorbidity link for that class; when None
    and two classes are configured, the class is drawn internally from
    ``severity_split`` (and discarded), so the marginal law matches
    ``generate``.
    """
    if severity is None:
        severity = _draw_severity(config, rng)
    mix = config.age_mix
    while True:
        if rng.random() < mix.weight:
            x = rng.normal(mix.mean1, mix.sd1)
        else:
            x = rng.normal(mix.mean2, mix.sd2)
        if 0.0 <= x <= 120.0:
            break
    age = int(round(x))
    gender = "F" if rng.random() < config.gender_p else "M"
    com = int(rng.poisson(config.comorbidity_rate(severity).at(age)))
    com = min(com, 30)
    drg = _draw_categorical(config.drg_probs, rng)
    return PatientProfile(patient_id, age, gender, com, drg)


def _draw_severity(config: GeneratorConfig, rng: Generator) -> int:
    if config.n_classes == 1:
        return 0
    return 1 if rng.random() < config.severity_split else 0


def _draw_categorical(probs: dict[str, float], rng: Generator) -> str:
    u = rng.random()
    acc = 0.0
    last = None
    for label, p in probs.items():
        acc += p
        last = label
        if u < acc:
            return label
    return last  # guard against accumulated rounding


def generate(config: GeneratorConfig) -> GenerateResult:
    """Produce a full synthetic event log with its hidden ground truth."""
    arrivals = sample_arrivals(config, stream(config.seed, _STREAM_ARRIVALS))
    rng = stream(config.seed, _STREAM_PATIENTS)
    los = config.los_coeffs
    cot = config.cot_coeffs
    entry_idx = config.departments.index(config.entry_department)
    n_dep = len(config.departments)

    entries: list[EventLogEntry] = []
    profiles: list[PatientProfile] = []
    latent: dict[str, int] = {}
    truncated = 0

    for i, t0 in enumerate(arrivals):
        pid = f"P{i + 1:06d}"
        severity = _draw_severity(config, rng)
        profile = sample_profile(config, rng, severity=severity, patient_id=pid)
        matrix = config.transition_matrices[severity]
        mu_fixed = (
            los.beta0
            + los.beta_age * profile.age / 100.0
            + los.beta_com * profile.comorbidity_count
            + los.drg_offsets[profile.drg]
        )
        cost_fixed = cot.gamma0 + cot.drg_offsets[profile.drg]

        state = entry_idx
        t = t0
        n_stays = 0
        while n_stays < WALK_CAP:
            stay_los = max(math.exp(rng.normal(mu_fixed, los.sigma_ln)), LOS_FLOOR)
            cost = max(0.0, cost_fixed + cot.gamma1 * stay_los + rng.normal(0.0, cot.sigma))
            entries.append(
                EventLogEntry(pid, config.departments[state], t, t + stay_los, cost)
            )
            t += stay_los
            n_stays += 1
            u = rng.random()
            acc = 0.0
            nxt = n_dep  # DISCHARGE column
            for j, p in enumerate(matrix[state]):
                acc += p
                if u < acc:
                    nxt = j
                    break
            if nxt == n_dep:
                break
            state = nxt
        else:
            truncated += 1

        profiles.append(profile)
        latent[pid] = severity

    truth = GroundTruth(
        latent_class=latent,
        truncated_walks=truncated,
        n_patients=len(arrivals),
        config=config.to_dict(),
    )
    return GenerateResult(tuple(entries), tuple(profiles), truth)


def write_outputs(result: GenerateResult, out_dir: str | Path) -> tuple[Path, Path]:
    """Write log.csv and ground_truth.json into out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "log.csv"
    truth_path = out / "ground_truth.json"
    log_path.write_text(serialize_event_log(result.entries, result.profiles), encoding="utf-8")
    truth_path.write_text(result.truth.to_json() + "\n", encoding="utf-8")
    return log_path, truth_path

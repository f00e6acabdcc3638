"""Seeded generator of synthetic longitudinal EHR cohorts.

Each patient carries a constant per-day event hazard p = sigmoid(eta),
where eta is a planted predictor over age, a blood-pressure channel, two
comorbidity flags, and one declared pure-noise channel. A constant daily
hazard makes the event time geometric, so the true risk of an event
within h days has the closed form 1 - (1 - p)^h and the ceiling AUC of
any model on the generated data is computable exactly.

Sampling is independent per patient given a derived per-patient seed
(SeedSequence([seed, patient_index])), so regeneration of any one
patient, or of the whole cohort in parallel, is stable under the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .cohort import DEFAULT_HORIZONS, HorizonSet
from .errors import ConfigError, DataError
from .features import read_json_doc, write_json_doc
from .metrics import roc_auc
from .numerics import seeded_rng, sigmoid
from .records import (
    EVENT_DEFINITIONS,
    DAYS_PER_YEAR,
    PatientRecord,
    RawEvent,
    demographic_events,
)

ENCOUNTER_TYPES = ("GP", "OUTPATIENT", "INPATIENT")
ENCOUNTER_PROBS = (0.6, 0.3, 0.1)

# Filler code menus. None of these may share a prefix with a predicted
# event family; the config validator enforces that against the full
# event-definition registry.
FILLER_DIAGNOSES = (
    "J06.9", "M54.5", "K21.0", "R51", "F41.1", "I10",
    "J45.9", "E78.0", "M16.9", "G43.9", "L20.9", "H52.1",
)
FILLER_PROCEDURES = ("G45.1", "W37.1", "K63.2", "H22.9", "E85.1", "M47.8")
FILLER_MEDICATIONS = ("0205051", "0212000", "0209000", "0601022", "0103050", "0407010")


@dataclass(frozen=True)
class ChannelSpec:
    """A continuous lab or vital channel.

    Per-patient baselines are normal(center, between_sd); per-reading
    values add normal(0, within_sd) and are clipped into [low, high]
    unless the reading is drawn as a deliberate out-of-range abnormal.
    """

    name: str
    modality: str
    low: float
    high: float
    center: float
    between_sd: float
    within_sd: float

    def __post_init__(self) -> None:
        if self.modality not in ("lab", "vital"):
            raise ConfigError(f"channel {self.name!r}: modality must be lab or vital")
        if not (self.low < self.high):
            raise ConfigError(f"channel {self.name!r}: low must be below high")
        if self.between_sd < 0 or self.within_sd < 0:
            raise ConfigError(f"channel {self.name!r}: negative spread")


@dataclass(frozen=True)
class PlantedHazard:
    """Coefficients of the daily-hazard predictor.

    eta = intercept
        + age * (age0 - 62) / 12
        + bp_level * z_bp
        + bp_high_step * [z_bp > bp_high_threshold]
        + bp_low_step * [z_bp < bp_low_threshold]
        + bp_rising_step * [bp slope > 0.6 * bp_slope_sd]
        + diabetes * diab + renal * renal
        + diabetes_bp_synergy * diab * max(z_bp, 0)
        + lability_step * labile
        + noise * z_noise

    with z_bp the standardized per-patient blood-pressure baseline and
    labile the blood-pressure lability trait: labile patients show
    intermittent large excursions on the blood-pressure channel whose
    direction (a hypertensive surge or a hypotensive dip) is drawn
    fresh on every excursion day, so the excursions cancel in the
    patient's mean level and carry no directional information.

    Two planted structures are invisible to any model that is linear in
    the per-day feature rows, because such a model must commit to one
    direction per feature. Risk is U-shaped in the blood-pressure level
    (hypertension and the hypotension-frailty tail raise it by nearly
    equal steps), and the lability step rewards detecting that extreme
    readings occur at all, regardless of their sign. Sequence models can
    learn per-day excursion detectors and accumulate them; that, plus
    the non-monotone level steps and the product term, is what separates
    them from the linear baselines here.
    """

    intercept: float = -8.9
    age: float = 0.55
    bp_level: float = 0.1
    bp_high_step: float = 1.2
    bp_low_step: float = 1.3
    bp_rising_step: float = 1.0
    diabetes: float = 1.0
    renal: float = 0.8
    diabetes_bp_synergy: float = 1.1
    lability_step: float = 2.0
    noise: float = 0.0
    bp_high_threshold: float = 1.0
    bp_low_threshold: float = -1.0

    def coefficients(self) -> dict[str, float]:
        return {
            "intercept": self.intercept,
            "age": self.age,
            "bp_level": self.bp_level,
            "bp_high_step": self.bp_high_step,
            "bp_low_step": self.bp_low_step,
            "bp_rising_step": self.bp_rising_step,
            "diabetes": self.diabetes,
            "renal": self.renal,
            "diabetes_bp_synergy": self.diabetes_bp_synergy,
            "lability_step": self.lability_step,
            "noise": self.noise,
        }

    def __post_init__(self) -> None:
        for name, value in self.coefficients().items():
            if not math.isfinite(value):
                raise ConfigError(f"hazard coefficient {name!r} is not finite")
        if not (math.isfinite(self.bp_high_threshold) and math.isfinite(self.bp_low_threshold)):
            raise ConfigError("blood-pressure step thresholds must be finite")
        if self.bp_low_threshold >= self.bp_high_threshold:
            raise ConfigError("bp_low_threshold must sit below bp_high_threshold")


DEFAULT_VITALS = (
    ChannelSpec("systolic_bp", "vital", 85.0, 180.0, 132.0, 14.0, 5.0),
    ChannelSpec("heart_rate", "vital", 40.0, 180.0, 74.0, 9.0, 6.0),
)
DEFAULT_LABS = (
    ChannelSpec("hdl_cholesterol", "lab", 0.5, 3.5, 1.4, 0.25, 0.15),
    ChannelSpec("noise_marker", "lab", 0.0, 1.0, 0.5, 0.18, 0.12),
)


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs of the synthetic cohort. Validated before any sampling."""

    n_patients: int = 2000
    n_days: int = 1825
    obs_rate: float = 0.03
    activity_start_max: int = 365
    min_activity_days: int = 540
    vitals: tuple[ChannelSpec, ...] = DEFAULT_VITALS
    labs: tuple[ChannelSpec, ...] = DEFAULT_LABS
    bp_channel: str = "systolic_bp"
    bp_slope_sd: float = 9.0
    noise_channel: str = "noise_marker"
    n_filler_diagnoses: int = 10
    n_procedures: int = 6
    n_medications: int = 6
    diabetes_code: str = "E11.9"
    renal_code: str = "N18.4"
    diabetes_prevalence: float = 0.14
    renal_prevalence: float = 0.09
    event_code: str = "I63.9"
    horizons: HorizonSet = DEFAULT_HORIZONS
    hazard: PlantedHazard = PlantedHazard()
    abnormal_fraction: float = 0.05
    disengage_prob: float = 0.35
    lability_prevalence: float = 0.25
    excursion_rate: float = 0.35
    excursion_min: float = 22.0
    excursion_max: float = 34.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_patients <= 0:
            raise ConfigError("n_patients must be positive")
        if self.n_days <= 0:
            raise ConfigError("n_days must be positive")
        if not (0.0 < self.obs_rate < 1.0):
            raise ConfigError("obs_rate must lie in (0, 1)")
        if not (0.0 <= self.abnormal_fraction <= 0.5):
            raise ConfigError("abnormal_fraction must lie in [0, 0.5]")
        if not (0.0 <= self.disengage_prob < 1.0):
            raise ConfigError("disengage_prob must lie in [0, 1)")
        if not (0.0 <= self.lability_prevalence <= 1.0):
            raise ConfigError("lability_prevalence must lie in [0, 1]")
        if not (0.0 <= self.excursion_rate <= 1.0):
            raise ConfigError("excursion_rate must lie in [0, 1]")
        if not (0.0 < self.excursion_min <= self.excursion_max):
            raise ConfigError("excursion bounds must satisfy 0 < min <= max")
        if self.activity_start_max < 0 or self.min_activity_days <= 0:
            raise ConfigError("activity window bounds must be positive")
        if self.activity_start_max + self.min_activity_days > self.n_days:
            raise ConfigError("activity window does not fit inside n_days")
        names = [c.name for c in self.channels()]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate channel names")
        if self.bp_channel not in names:
            raise ConfigError(f"bp_channel {self.bp_channel!r} is not a configured channel")
        if self.noise_channel not in names:
            raise ConfigError(f"noise_channel {self.noise_channel!r} is not a configured channel")
        if self.noise_channel == self.bp_channel:
            raise ConfigError("the noise channel cannot also be the blood-pressure channel")
        if self.hazard.noise != 0.0:
            raise ConfigError("the declared noise channel must have a zero hazard coefficient")
        if self.bp_slope_sd < 0:
            raise ConfigError("bp_slope_sd must be non-negative")
        if not (0 <= self.n_filler_diagnoses <= len(FILLER_DIAGNOSES)):
            raise ConfigError(f"n_filler_diagnoses must lie in [0, {len(FILLER_DIAGNOSES)}]")
        if not (0 <= self.n_procedures <= len(FILLER_PROCEDURES)):
            raise ConfigError(f"n_procedures must lie in [0, {len(FILLER_PROCEDURES)}]")
        if not (0 <= self.n_medications <= len(FILLER_MEDICATIONS)):
            raise ConfigError(f"n_medications must lie in [0, {len(FILLER_MEDICATIONS)}]")
        for prev in (self.diabetes_prevalence, self.renal_prevalence):
            if not (0.0 <= prev < 1.0):
                raise ConfigError("comorbidity prevalences must lie in [0, 1)")
        reserved = [p for d in EVENT_DEFINITIONS.values() for p in d.code_prefixes]
        for code in (*FILLER_DIAGNOSES[: self.n_filler_diagnoses],
                     self.diabetes_code, self.renal_code):
            for prefix in reserved:
                if code.upper().startswith(prefix.upper()):
                    raise ConfigError(
                        f"filler code {code!r} collides with event prefix {prefix!r}"
                    )

    def channels(self) -> tuple[ChannelSpec, ...]:
        return self.vitals + self.labs

    def effective_horizon_days(self) -> np.ndarray:
        """Finite horizon lengths used for the closed-form risks.

        The unbounded horizon is evaluated at the dataset span; any
        finite stand-in yields the same risk ranking because
        1 - (1 - p)^h is increasing in p for every fixed h > 0.
        """
        days = np.array(self.horizons.days, dtype=float)
        days[~np.isfinite(days)] = float(self.n_days)
        return days


@dataclass(frozen=True)
class GroundTruth:
    """Per-patient generative truth, aligned with the record list."""

    patient_ids: tuple[str, ...]
    eta: np.ndarray
    daily_hazard: np.ndarray
    risks: np.ndarray
    latent_labels: np.ndarray
    event_day: tuple[int | None, ...]
    horizons: HorizonSet
    noise_feature: str
    signal_features: tuple[str, ...]

    def __post_init__(self) -> None:
        n = len(self.patient_ids)
        n_t = self.horizons.n_t
        if self.risks.shape != (n, n_t) or self.latent_labels.shape != (n, n_t):
            raise DataError("truth arrays do not match the patient count")
        if self.eta.shape != (n,) or self.daily_hazard.shape != (n,):
            raise DataError("truth arrays do not match the patient count")
        if len(self.event_day) != n:
            raise DataError("truth arrays do not match the patient count")
        if np.any(self.risks < 0.0) or np.any(self.risks > 1.0):
            raise DataError("risks must lie in [0, 1]")
        if np.any(np.diff(self.risks, axis=1) < -1e-12):
            raise DataError("risks must be monotone across cumulative horizons")

    def rows_for(self, patient_ids) -> np.ndarray:
        index = {pid: i for i, pid in enumerate(self.patient_ids)}
        try:
            return np.array([index[pid] for pid in patient_ids], dtype=int)
        except KeyError as exc:
            raise DataError(f"unknown patient id {exc.args[0]!r} in truth lookup") from None


def _draw_value(rng: np.random.Generator, channel: ChannelSpec, center: float,
                abnormal_fraction: float) -> float:
    """One reading: usually near center and in range, sometimes abnormal."""
    width = channel.high - channel.low
    if rng.random() < abnormal_fraction:
        offset = rng.uniform(0.02, 0.3) * width
        if rng.random() < 0.5:
            return channel.low - offset
        return channel.high + offset
    value = rng.normal(center, channel.within_sd)
    return float(np.clip(value, channel.low, channel.high))


def _sample_patient(config: GeneratorConfig, seed: int, index: int):
    """Sample one patient. The draw order below is part of the seed
    contract: sex, age, activity window, disengagement, comorbidity
    flags, channel baselines (vitals then labs, menu order),
    blood-pressure slope, noise z-score, lability trait, geometric
    event time, observation thinning, then per-day content in day
    order.
    """
    rng = seeded_rng(seed, index)
    pid = f"p{index:05d}"

    sex = "F" if rng.random() < 0.5 else "M"
    age0 = rng.uniform(45.0, 84.0)
    birth_day = -int(round(age0 * DAYS_PER_YEAR))

    a_start = int(rng.integers(0, config.activity_start_max + 1))
    a_end = int(rng.integers(a_start + config.min_activity_days, config.n_days + 1))
    # Some patients stop attending long before the administrative end of
    # their window; an event still gets recorded (acute presentation),
    # which spreads the gap between last regular contact and event day.
    # The stopping day is log-uniform so short histories exist at every
    # scale and the matcher can pair them with cases whose window an
    # early event cut short.
    obs_end = a_end
    if rng.random() < config.disengage_prob:
        dur = a_end - a_start
        obs_dur = int(round(90.0 * (dur / 90.0) ** rng.random()))
        obs_end = a_start + min(obs_dur, dur)

    diab = bool(rng.random() < config.diabetes_prevalence)
    renal = bool(rng.random() < config.renal_prevalence)

    channels = config.channels()
    baselines = {c.name: float(rng.normal(c.center, c.between_sd)) for c in channels}
    bp_spec = next(c for c in channels if c.name == config.bp_channel)
    bp_slope = float(rng.normal(0.0, config.bp_slope_sd))
    z_noise = float(rng.standard_normal())
    labile = bool(rng.random() < config.lability_prevalence)

    z_age = (age0 - 62.0) / 12.0
    z_bp = (baselines[config.bp_channel] - bp_spec.center) / max(bp_spec.between_sd, 1e-12)
    hz = config.hazard
    eta = (
        hz.intercept
        + hz.age * z_age
        + hz.bp_level * z_bp
        + hz.bp_high_step * (z_bp > hz.bp_high_threshold)
        + hz.bp_low_step * (z_bp < hz.bp_low_threshold)
        + hz.bp_rising_step * (bp_slope > 0.6 * config.bp_slope_sd)
        + hz.diabetes * diab
        + hz.renal * renal
        + hz.diabetes_bp_synergy * diab * max(z_bp, 0.0)
        + hz.lability_step * labile
        + hz.noise * z_noise
    )
    p = float(sigmoid(np.array(eta)))
    gap = int(rng.geometric(p))
    event_day = a_start + gap
    recorded_event = event_day <= a_end

    span = obs_end - a_start + 1
    hits = rng.random(span) < config.obs_rate
    obs_days = a_start + np.flatnonzero(hits)
    obs_days = np.union1d(obs_days, [a_start])
    if recorded_event:
        obs_days = np.union1d(obs_days[obs_days < event_day], [event_day])

    diag_menu = FILLER_DIAGNOSES[: config.n_filler_diagnoses]
    proc_menu = FILLER_PROCEDURES[: config.n_procedures]
    med_menu = FILLER_MEDICATIONS[: config.n_medications]
    n_menu = len(diag_menu)
    diag_has = [
        rng.random() < 0.04 + 0.14 * (j / max(n_menu - 1, 1)) for j in range(n_menu)
    ]
    diag_day = {
        code: int(obs_days[int(rng.integers(len(obs_days)))])
        for code, has in zip(diag_menu, diag_has) if has
    }
    proc_day = {
        code: int(obs_days[int(rng.integers(len(obs_days)))])
        for code in proc_menu if rng.random() < 0.08
    }
    meds_held = tuple(code for code in med_menu if rng.random() < 0.25)

    events: list[RawEvent] = []
    first_day = int(obs_days[0])
    # Demographics ride as reserved events so that the JSONL wire stream
    # alone reconstructs the record exactly.
    events.extend(demographic_events(pid, sex, birth_day, first_day))
    for day_ in obs_days:
        day = int(day_)
        years = (day - a_start) / DAYS_PER_YEAR
        for c in channels:
            center = baselines[c.name]
            if c.name == config.bp_channel:
                center = center + bp_slope * years
                if labile and rng.random() < config.excursion_rate:
                    # The sign is drawn per day, so excursions cancel in
                    # the patient's mean level and only their presence
                    # carries information.
                    sign = 1.0 if rng.random() < 0.5 else -1.0
                    center = center + sign * rng.uniform(
                        config.excursion_min, config.excursion_max
                    )
            value = _draw_value(rng, c, center, config.abnormal_fraction)
            events.append(RawEvent(pid, day, c.modality, c.name, value))
        enc = ENCOUNTER_TYPES[int(rng.choice(len(ENCOUNTER_TYPES), p=ENCOUNTER_PROBS))]
        events.append(RawEvent(pid, day, "encounter", enc))
        if diab and (day == first_day or rng.random() < 0.10):
            events.append(RawEvent(pid, day, "diagnosis", config.diabetes_code))
        if renal and (day == first_day or rng.random() < 0.10):
            events.append(RawEvent(pid, day, "diagnosis", config.renal_code))
        for code, coded_day in diag_day.items():
            if day == coded_day or (day > coded_day and rng.random() < 0.03):
                events.append(RawEvent(pid, day, "diagnosis", code))
        for code, coded_day in proc_day.items():
            if day == coded_day:
                events.append(RawEvent(pid, day, "procedure", code))
        for code in meds_held:
            if rng.random() < 0.25:
                events.append(RawEvent(pid, day, "medication", code))
        if recorded_event and day == event_day:
            events.append(RawEvent(pid, day, "diagnosis", config.event_code))

    record = PatientRecord(pid, sex, birth_day, tuple(events))
    return record, eta, p, gap, (event_day if recorded_event else None)


def generate(config: GeneratorConfig, seed: int | None = None) -> tuple[list[PatientRecord], GroundTruth]:
    """Sample the cohort. Deterministic under (config, seed); the seed
    argument overrides config.seed when given.
    """
    if seed is None:
        seed = config.seed
    records: list[PatientRecord] = []
    etas = np.empty(config.n_patients)
    hazards = np.empty(config.n_patients)
    gaps = np.empty(config.n_patients)
    event_days: list[int | None] = []
    for i in range(config.n_patients):
        record, eta, p, gap, event_day = _sample_patient(config, seed, i)
        records.append(record)
        etas[i] = eta
        hazards[i] = p
        gaps[i] = gap
        event_days.append(event_day)

    h_eff = config.effective_horizon_days()
    risks = 1.0 - (1.0 - hazards[:, None]) ** h_eff[None, :]
    latent_labels = (gaps[:, None] <= h_eff[None, :]).astype(np.int8)
    truth = GroundTruth(
        patient_ids=tuple(r.patient_id for r in records),
        eta=etas,
        daily_hazard=hazards,
        risks=risks,
        latent_labels=latent_labels,
        event_day=tuple(event_days),
        horizons=config.horizons,
        noise_feature=f"{config.noise_channel}:median",
        signal_features=(
            f"{config.bp_channel}:median",
            "charlson:diabetes_without_complication",
        ),
    )
    return records, truth


def bayes_auc(truth: GroundTruth, horizon: int, patient_ids=None, labels=None) -> float:
    """AUC of the true per-horizon risk against realized labels.

    By default the labels are the generator's own latent event
    indicators, which are Bernoulli draws with success probability
    exactly equal to the risk column. Passing patient_ids and labels
    restricts the ceiling to a study cohort (for instance a matched
    case-control subset, whose selection removes part of the signal).
    """
    if not (0 <= horizon < truth.horizons.n_t):
        raise DataError(f"truth has no horizon index {horizon}")
    if patient_ids is None:
        rows = np.arange(len(truth.patient_ids))
    else:
        rows = truth.rows_for(patient_ids)
    scores = truth.risks[rows, horizon]
    if labels is None:
        realized = truth.latent_labels[rows, horizon]
    else:
        realized = np.asarray(labels)
        if realized.shape != (len(rows),):
            raise DataError("labels do not match the requested patients")
    return roc_auc(scores, realized)


def truth_to_json_obj(truth: GroundTruth) -> dict:
    return {
        "schema_version": 1,
        "patient_ids": list(truth.patient_ids),
        "eta": truth.eta.tolist(),
        "daily_hazard": truth.daily_hazard.tolist(),
        "risks": truth.risks.tolist(),
        "latent_labels": truth.latent_labels.tolist(),
        "event_day": list(truth.event_day),
        "horizon_days": [d if math.isfinite(d) else "inf" for d in truth.horizons.days],
        "noise_feature": truth.noise_feature,
        "signal_features": list(truth.signal_features),
    }


def truth_from_json_obj(obj: dict) -> GroundTruth:
    return GroundTruth(
        patient_ids=tuple(obj["patient_ids"]),
        eta=np.array(obj["eta"], dtype=float),
        daily_hazard=np.array(obj["daily_hazard"], dtype=float),
        risks=np.array(obj["risks"], dtype=float),
        latent_labels=np.array(obj["latent_labels"], dtype=np.int8),
        event_day=tuple(obj["event_day"]),
        horizons=HorizonSet(tuple(float(d) for d in obj["horizon_days"])),
        noise_feature=obj["noise_feature"],
        signal_features=tuple(obj["signal_features"]),
    )


def write_truth_json(path, truth: GroundTruth) -> None:
    write_json_doc(path, truth_to_json_obj(truth))


def read_truth_json(path) -> GroundTruth:
    return truth_from_json_obj(read_json_doc(path))


def scaled_config(config: GeneratorConfig, n_patients: int) -> GeneratorConfig:
    """Convenience for small smoke cohorts with the same structure."""
    if n_patients <= 0:
        raise ConfigError("n_patients must be positive")
    return replace(config, n_patients=n_patients)


_CHANNEL_FIELDS = ("name", "modality", "low", "high", "center", "between_sd", "within_sd")
_SCALAR_CONFIG_FIELDS = (
    "n_patients", "n_days", "obs_rate", "activity_start_max", "min_activity_days",
    "bp_channel", "bp_slope_sd", "noise_channel", "n_filler_diagnoses",
    "n_procedures", "n_medications", "diabetes_code", "renal_code",
    "diabetes_prevalence", "renal_prevalence", "event_code",
    "abnormal_fraction", "disengage_prob", "lability_prevalence",
    "excursion_rate", "excursion_min", "excursion_max", "seed",
)


def _channel_to_obj(channel: ChannelSpec) -> dict:
    return {f: getattr(channel, f) for f in _CHANNEL_FIELDS}


def _channel_from_obj(obj: dict) -> ChannelSpec:
    try:
        return ChannelSpec(**{f: obj[f] for f in _CHANNEL_FIELDS})
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad channel entry: {exc}") from exc


def config_to_json_obj(config: GeneratorConfig) -> dict:
    doc = {"schema_version": 1}
    for f in _SCALAR_CONFIG_FIELDS:
        doc[f] = getattr(config, f)
    doc["vitals"] = [_channel_to_obj(c) for c in config.vitals]
    doc["labs"] = [_channel_to_obj(c) for c in config.labs]
    doc["horizons"] = [d if math.isfinite(d) else "inf" for d in config.horizons.days]
    doc["hazard"] = config.hazard.coefficients()
    doc["hazard"]["bp_high_threshold"] = config.hazard.bp_high_threshold
    doc["hazard"]["bp_low_threshold"] = config.hazard.bp_low_threshold
    return doc


def config_from_json_obj(obj: dict) -> GeneratorConfig:
    """Build a generator config from a JSON document.

    Keys not present fall back to the defaults, so a sparse document like
    {"n_patients": 200, "seed": 17} is a complete configuration. Unknown
    keys are rejected rather than silently ignored.
    """
    known = set(_SCALAR_CONFIG_FIELDS) | {
        "schema_version", "vitals", "labs", "horizons", "hazard",
    }
    unknown = set(obj) - known
    if unknown:
        raise ConfigError(f"unknown generator config keys: {sorted(unknown)}")
    kwargs = {f: obj[f] for f in _SCALAR_CONFIG_FIELDS if f in obj}
    if "vitals" in obj:
        kwargs["vitals"] = tuple(_channel_from_obj(c) for c in obj["vitals"])
    if "labs" in obj:
        kwargs["labs"] = tuple(_channel_from_obj(c) for c in obj["labs"])
    if "horizons" in obj:
        kwargs["horizons"] = HorizonSet(tuple(float(d) for d in obj["horizons"]))
    if "hazard" in obj:
        try:
            kwargs["hazard"] = PlantedHazard(**obj["hazard"])
        except TypeError as exc:
            raise ConfigError(f"bad hazard entry: {exc}") from exc
    try:
        return GeneratorConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad generator config: {exc}") from exc


def write_config_json(path, config: GeneratorConfig) -> None:
    write_json_doc(path, config_to_json_obj(config))


def read_config_json(path) -> GeneratorConfig:
    return config_from_json_obj(read_json_doc(path))

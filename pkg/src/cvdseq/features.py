"""Daily feature aggregation: vocabulary, encoding, scaling, imputation.

Each observation day becomes one feature vector: derived demographics
(age, sex), a (median, MAD, count, abnormal) block per continuous variable,
same-day prescription counts per medication code, same-day 0/1 indicators
per diagnosis/procedure code, and cumulative comorbidity flags.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, DataError
from .records import (
    BIRTH_DAY_CODE,
    CONTINUOUS_MODALITIES,
    SEX_CODE,
    PatientRecord,
    PatientSequence,
    normalize_code,
    sex_to_value,
)

#: Demographic channels derived from PatientRecord fields rather than
#: aggregated from raw events; always present, one column each.
DERIVED_SLOTS = ("age", "sex")

_CONTINUOUS_STATS = ("median", "mad", "count", "abnormal")

#: Reserved demographic codes never become continuous feature variables.
_RESERVED_CODES = frozenset({SEX_CODE, BIRTH_DAY_CODE})

#: Modalities eligible for the sparse/count code slots.
_CODE_SLOT_MODALITIES = frozenset({"diagnosis", "procedure", "medication"})


def _load_packaged_json(name: str) -> dict:
    with resources.files("cvdseq.data").joinpath(name).open("r", encoding="utf-8") as fh:
        return json.load(fh)


@dataclass(frozen=True)
class PhysiologicalRanges:
    """Plausible (low, high) bounds per continuous variable name."""

    bounds: dict[str, tuple[float, float]]

    def __post_init__(self):
        for name, (low, high) in self.bounds.items():
            if not low < high:
                raise ConfigError(f"range for {name!r}: low must be < high, got ({low}, {high})")

    def bounds_for(self, name: str) -> tuple[float, float]:
        return self.bounds.get(name, (-math.inf, math.inf))

    @classmethod
    def default(cls) -> "PhysiologicalRanges":
        doc = _load_packaged_json("physiological_ranges.json")
        return cls.from_json_obj(doc)

    @classmethod
    def from_json_obj(cls, doc: dict) -> "PhysiologicalRanges":
        try:
            ranges = {str(k): (float(v[0]), float(v[1])) for k, v in doc["ranges"].items()}
        except (KeyError, TypeError, IndexError, ValueError) as exc:
            raise ConfigError(f"bad physiological ranges document: {exc}") from exc
        return cls(ranges)

    def to_json_obj(self) -> dict:
        return {
            "schema_version": 1,
            "ranges": {k: [lo, hi] for k, (lo, hi) in sorted(self.bounds.items())},
        }


@dataclass(frozen=True)
class CharlsonMap:
    """The comorbidity flag families: condition name -> ICD-10 code prefixes."""

    conditions: dict[str, tuple[str, ...]]

    @classmethod
    def default(cls) -> "CharlsonMap":
        doc = _load_packaged_json("charlson_icd10.json")
        return cls({k: tuple(v) for k, v in doc["conditions"].items()})

    def names(self) -> tuple[str, ...]:
        return tuple(self.conditions.keys())


@dataclass(frozen=True)
class Vocabulary:
    """Retained feature slots and the flat column order they induce.

    code_slots are (modality, code) pairs covering diagnosis/procedure sparse
    indicators and medication counts; continuous_slots expand into four
    columns each; charlson_slots are the comorbidity flag columns.
    """

    code_slots: tuple[tuple[str, str], ...]
    continuous_slots: tuple[str, ...]
    charlson_slots: tuple[str, ...]
    feature_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        names = list(DERIVED_SLOTS)
        for name in self.continuous_slots:
            names.extend(f"{name}:{stat}" for stat in _CONTINUOUS_STATS)
        names.extend(f"{modality}:{code}" for modality, code in self.code_slots)
        names.extend(f"charlson:{name}" for name in self.charlson_slots)
        if len(set(names)) != len(names):
            raise DataError("duplicate feature names in vocabulary")
        object.__setattr__(self, "feature_names", tuple(names))

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def to_json_obj(self) -> dict:
        return {
            "schema_version": 1,
            "code_slots": [[m, c] for m, c in self.code_slots],
            "continuous_slots": list(self.continuous_slots),
            "charlson_slots": list(self.charlson_slots),
        }

    @classmethod
    def from_json_obj(cls, doc: dict) -> "Vocabulary":
        try:
            return cls(
                code_slots=tuple((str(m), str(c)) for m, c in doc["code_slots"]),
                continuous_slots=tuple(doc["continuous_slots"]),
                charlson_slots=tuple(doc["charlson_slots"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad vocabulary document: {exc}") from exc


def aggregate_continuous(
    values: Sequence[float], value_range: tuple[float, float]
) -> tuple[float, float, float, float]:
    """Summarize one variable's same-day readings.

    Returns (median, median absolute deviation, count, abnormal flag); the
    flag is 1 when any reading falls outside the plausible range. The result
    does not depend on the order of ``values``.
    """
    if len(values) == 0:
        raise DataError("no observations to aggregate")
    arr = np.asarray(values, dtype=float)
    med = float(np.median(arr))
    mad = float(np.median(np.abs(arr - med)))
    low, high = value_range
    abnormal = 1.0 if bool(np.any((arr < low) | (arr > high))) else 0.0
    return med, mad, float(arr.size), abnormal


def build_vocabulary(
    records: Sequence[PatientRecord],
    top_k: int = 300,
    min_prevalence: float = 0.01,
    charlson: CharlsonMap | None = None,
) -> Vocabulary:
    """Select feature slots from a fitting corpus.

    Diagnosis and procedure codes: top_k most frequent by patient-level
    prevalence (ties broken lexicographically by code), then the prevalence
    filter. Medication codes and continuous variables: prevalence filter
    only. Prevalence is the fraction of patients with at least one
    occurrence; the min_prevalence boundary is inclusive.
    """
    if not records:
        raise DataError("cannot build a vocabulary from zero records")
    charlson = charlson or CharlsonMap.default()

    diag_proc: dict[tuple[str, str], set[str]] = {}
    meds: dict[str, set[str]] = {}
    continuous: dict[str, set[str]] = {}
    for r in records:
        for e in r.events:
            if e.modality in ("diagnosis", "procedure"):
                key = (e.modality, normalize_code(e.code))
                diag_proc.setdefault(key, set()).add(r.patient_id)
            elif e.modality == "medication":
                meds.setdefault(normalize_code(e.code), set()).add(r.patient_id)
            elif e.modality in CONTINUOUS_MODALITIES and e.code not in _RESERVED_CODES:
                continuous.setdefault(e.code, set()).add(r.patient_id)

    n = len(records)
    # Exact-boundary prevalence: keep count/n >= min_prevalence (tiny slop
    # guards the float division at the boundary itself).
    keep = lambda count: count / n >= min_prevalence - 1e-12

    ranked = sorted(diag_proc.items(), key=lambda kv: (-len(kv[1]), kv[0][1], kv[0][0]))
    top = ranked[:top_k]
    code_slots = [key for key, pats in top if keep(len(pats))]
    code_slots.extend(("medication", c) for c, pats in meds.items() if keep(len(pats)))
    code_slots.sort()

    continuous_slots = tuple(sorted(c for c, pats in continuous.items() if keep(len(pats))))
    return Vocabulary(
        code_slots=tuple(code_slots),
        continuous_slots=continuous_slots,
        charlson_slots=charlson.names(),
    )


def _charlson_flags(
    record: PatientRecord, day: int, charlson: CharlsonMap
) -> dict[str, float]:
    flags = dict.fromkeys(charlson.conditions, 0.0)
    for e in record.events:
        if e.day > day:
            break
        if e.modality != "diagnosis":
            continue
        code = normalize_code(e.code)
        for name, prefixes in charlson.conditions.items():
            if flags[name] == 0.0 and any(code.startswith(p) for p in prefixes):
                flags[name] = 1.0
    return flags


def encode_day(
    record: PatientRecord,
    day: int,
    vocab: Vocabulary,
    ranges: PhysiologicalRanges,
    charlson: CharlsonMap | None = None,
) -> np.ndarray:
    """Aggregate one observation day into a feature vector.

    Continuous variables unobserved that day are marked NaN for later
    population-mean imputation. Comorbidity flags are cumulative: once a
    condition's code family has appeared, its flag stays 1.
    """
    events = [e for e in record.events if e.day == day]
    if not events:
        raise DataError(f"patient {record.patient_id}: day {day} is not an observation day")
    charlson = charlson or CharlsonMap.default()

    cont_values: dict[str, list[float]] = {}
    med_counts: dict[str, float] = {}
    coded_present: set[tuple[str, str]] = set()
    for e in events:
        if e.modality in CONTINUOUS_MODALITIES and e.code not in _RESERVED_CODES:
            if e.value is not None:
                cont_values.setdefault(e.code, []).append(e.value)
        elif e.modality == "medication":
            code = normalize_code(e.code)
            med_counts[code] = med_counts.get(code, 0.0) + 1.0
        elif e.modality in ("diagnosis", "procedure"):
            coded_present.add((e.modality, normalize_code(e.code)))

    out = np.empty(vocab.n_features)
    out[0] = record.age_on(day)
    out[1] = sex_to_value(record.sex)
    i = len(DERIVED_SLOTS)
    for name in vocab.continuous_slots:
        if name in cont_values:
            out[i : i + 4] = aggregate_continuous(cont_values[name], ranges.bounds_for(name))
        else:
            out[i : i + 4] = np.nan
        i += 4
    for modality, code in vocab.code_slots:
        if modality == "medication":
            out[i] = med_counts.get(code, 0.0)
        else:
            out[i] = 1.0 if (modality, code) in coded_present else 0.0
        i += 1
    flags = _charlson_flags(record, day, charlson)
    for name in vocab.charlson_slots:
        out[i] = flags[name]
        i += 1
    return out


def encode_record(
    record: PatientRecord,
    vocab: Vocabulary,
    ranges: PhysiologicalRanges,
    charlson: CharlsonMap | None = None,
) -> PatientSequence:
    """Encode every observation day; rows are oldest to newest, mask all 1."""
    charlson = charlson or CharlsonMap.default()
    days = record.observation_days()
    if not days:
        raise DataError(f"patient {record.patient_id}: no observation days")

    # Single pass over events grouped by day; cumulative Charlson state is
    # carried forward instead of rescanning history per day.
    by_day: dict[int, list] = {d: [] for d in days}
    for e in record.events:
        by_day[e.day].append(e)

    flags = dict.fromkeys(charlson.conditions, 0.0)
    rows = []
    for day in days:
        cont_values: dict[str, list[float]] = {}
        med_counts: dict[str, float] = {}
        coded_present: set[tuple[str, str]] = set()
        for e in by_day[day]:
            if e.modality in CONTINUOUS_MODALITIES and e.code not in _RESERVED_CODES:
                if e.value is not None:
                    cont_values.setdefault(e.code, []).append(e.value)
            elif e.modality == "medication":
                code = normalize_code(e.code)
                med_counts[code] = med_counts.get(code, 0.0) + 1.0
            elif e.modality == "diagnosis":
                code = normalize_code(e.code)
                coded_present.add((e.modality, code))
                for name, prefixes in charlson.conditions.items():
                    if flags[name] == 0.0 and any(code.startswith(p) for p in prefixes):
                        flags[name] = 1.0
            elif e.modality == "procedure":
                coded_present.add((e.modality, normalize_code(e.code)))

        row = np.empty(vocab.n_features)
        row[0] = record.age_on(day)
        row[1] = sex_to_value(record.sex)
        i = len(DERIVED_SLOTS)
        for name in vocab.continuous_slots:
            if name in cont_values:
                row[i : i + 4] = aggregate_continuous(cont_values[name], ranges.bounds_for(name))
            else:
                row[i : i + 4] = np.nan
            i += 4
        for modality, code in vocab.code_slots:
            if modality == "medication":
                row[i] = med_counts.get(code, 0.0)
            else:
                row[i] = 1.0 if (modality, code) in coded_present else 0.0
            i += 1
        for name in vocab.charlson_slots:
            row[i] = flags[name]
            i += 1
        rows.append(row)

    matrix = np.vstack(rows)
    return PatientSequence(record.patient_id, days, matrix, np.ones(len(days)))


@dataclass
class ScalerImputer:
    """Per-feature min/max scaling and population-mean imputation.

    Fitted on training data only. Missing entries are imputed with the
    pre-scaling population mean, then everything is min-max scaled to [0,1];
    out-of-range test-time values are clipped.
    """

    feature_names: tuple[str, ...]
    min_: np.ndarray
    max_: np.ndarray
    mean_: np.ndarray
    fitted: bool = False

    def to_json_obj(self) -> dict:
        return {
            "schema_version": 1,
            "feature_names": list(self.feature_names),
            "min": self.min_.tolist(),
            "max": self.max_.tolist(),
            "mean": self.mean_.tolist(),
        }

    @classmethod
    def from_json_obj(cls, doc: dict) -> "ScalerImputer":
        try:
            return cls(
                feature_names=tuple(doc["feature_names"]),
                min_=np.asarray(doc["min"], dtype=float),
                max_=np.asarray(doc["max"], dtype=float),
                mean_=np.asarray(doc["mean"], dtype=float),
                fitted=True,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad scaler document: {exc}") from exc


def fit_scaler_imputer(
    train_sequences: Sequence[PatientSequence], feature_names: Sequence[str] = ()
) -> ScalerImputer:
    """Fit per-feature min, max, and mean over all observed (non-NaN) entries."""
    if not train_sequences:
        raise DataError("cannot fit scaler on zero sequences")
    stacked = np.vstack([s.matrix for s in train_sequences])
    any_obs = (~np.isnan(stacked)).any(axis=0)

    # Sentinel fill keeps the nan-reductions defined on all-NaN columns; the
    # result there is discarded below.
    filled = np.where(np.broadcast_to(any_obs, stacked.shape), stacked, 0.0)
    min_ = np.nanmin(filled, axis=0)
    max_ = np.nanmax(filled, axis=0)
    mean_ = np.nanmean(filled, axis=0)
    # Never-observed features degrade to a constant zero channel.
    min_ = np.where(any_obs, min_, 0.0)
    max_ = np.where(any_obs, max_, 1.0)
    mean_ = np.where(any_obs, mean_, 0.0)
    return ScalerImputer(tuple(feature_names), min_, max_, mean_, fitted=True)


def scale_impute(sequence: PatientSequence, si: ScalerImputer) -> PatientSequence:
    """Impute NaNs with the fitted means, min-max scale to [0,1], clip."""
    if not si.fitted:
        raise DataError("scaler/imputer used before fitting")
    m = sequence.matrix.copy()
    nan_mask = np.isnan(m)
    if nan_mask.any():
        m[nan_mask] = np.broadcast_to(si.mean_, m.shape)[nan_mask]
    span = si.max_ - si.min_
    safe_span = np.where(span > 0, span, 1.0)
    scaled = (m - si.min_) / safe_span
    scaled = np.where(span > 0, scaled, 0.0)
    np.clip(scaled, 0.0, 1.0, out=scaled)
    return PatientSequence(sequence.patient_id, sequence.days, scaled, sequence.mask.copy())


def pad_sequence(sequence: PatientSequence, n_days_pad: int) -> PatientSequence:
    """Front-pad with all-zero masked rows, or keep the most recent rows."""
    n = sequence.matrix.shape[0]
    if n >= n_days_pad:
        n_real_dropped = int(sequence.mask[: n - n_days_pad].sum())
        return PatientSequence(
            sequence.patient_id,
            sequence.days[n_real_dropped:],
            sequence.matrix[n - n_days_pad :].copy(),
            sequence.mask[n - n_days_pad :].copy(),
        )
    pad = n_days_pad - n
    matrix = np.vstack([np.zeros((pad, sequence.matrix.shape[1])), sequence.matrix])
    mask = np.concatenate([np.zeros(pad), sequence.mask])
    return PatientSequence(sequence.patient_id, sequence.days, matrix, mask)


def transform(sequence: PatientSequence, si: ScalerImputer, n_days_pad: int) -> PatientSequence:
    """Impute, scale to [0,1], and pad/truncate to exactly n_days_pad rows."""
    return pad_sequence(scale_impute(sequence, si), n_days_pad)


def write_json_doc(path, doc: Mapping) -> None:
    """Persist a versioned config document with stable key order."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json_doc(path, expected_version: int = 1) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    version = doc.get("schema_version")
    if version != expected_version:
        raise ConfigError(
            f"config {path}: schema_version {version!r}, expected {expected_version}"
        )
    return doc

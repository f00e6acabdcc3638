"""Case-control cohort assembly: inclusion, horizon labels, matching, folds.

A case must have at least one observation day two weeks or more before the
first target-disease code; prediction happens at the latest such day. A
control never carries the target code; its prediction point is the last
observation day, and per-horizon labels are masked out when follow-up is
too short to certify event-free status.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DataError
from .records import EventDefinition, PatientRecord

#: Minimum gap between the prediction point and a case's event, in days.
MIN_EVENT_GAP_DAYS = 14


@dataclass(frozen=True)
class HorizonSet:
    """Ordered prediction horizons in days; the last one is unbounded.

    A case is positive at a horizon when its event falls within that many
    days of the prediction point, so labels accumulate across horizons.
    """

    days: tuple[float, ...] = (30.0, 91.0, 365.0, math.inf)

    def __post_init__(self):
        if len(self.days) < 2:
            raise ConfigError("need at least one finite horizon plus the unbounded one")
        if any(b <= a for a, b in zip(self.days, self.days[1:])):
            raise ConfigError(f"horizons must be strictly increasing, got {self.days}")
        if not math.isinf(self.days[-1]):
            raise ConfigError("last horizon must be unbounded")
        if math.isinf(self.days[-2]):
            raise ConfigError("only the last horizon may be unbounded")

    @property
    def n_t(self) -> int:
        return len(self.days)

    @property
    def max_finite(self) -> float:
        return self.days[-2]

    def mask_requirement(self, i: int) -> float:
        """Follow-up needed to certify a control event-free at horizon i.

        The unbounded horizon cannot demand infinite follow-up (no control
        would ever qualify), so it inherits the largest finite requirement:
        a control certified through the longest finite window counts as
        event-free beyond it as well.
        """
        h = self.days[i]
        return self.max_finite if math.isinf(h) else h

    def names(self) -> tuple[str, ...]:
        out = [f"{int(h)}d" for h in self.days[:-1]]
        out.append(f"over{int(self.max_finite)}d")
        return tuple(out)


DEFAULT_HORIZONS = HorizonSet()


@dataclass(frozen=True)
class IncludedPatient:
    """A patient who passed inclusion, before labeling and matching."""

    patient_id: str
    sex: str
    index_day: int
    event_day: int | None
    age_at_index: float
    n_obs_days: int
    follow_up_days: int

    @property
    def is_case(self) -> bool:
        return self.event_day is not None


@dataclass(frozen=True)
class LabeledPatient:
    patient_id: str
    index_day: int
    labels: tuple[float, ...]
    label_mask: tuple[float, ...]
    is_case: bool
    age_at_index: float
    sex: str
    n_obs_days: int

    def __post_init__(self):
        lab = self.labels
        if any(b < a for a, b in zip(lab, lab[1:])):
            raise DataError(f"patient {self.patient_id}: labels not cumulative: {lab}")
        if not self.is_case and any(lab):
            raise DataError(f"control {self.patient_id} has a positive label")


@dataclass(frozen=True)
class MatchedPair:
    case_id: str
    control_id: str
    distance: float


@dataclass(frozen=True)
class Cohort:
    event_def: EventDefinition
    patients: tuple[LabeledPatient, ...]
    matching_report: tuple[MatchedPair, ...]

    def __post_init__(self):
        ids = [p.patient_id for p in self.patients]
        if len(set(ids)) != len(ids):
            raise DataError("cohort contains a duplicate patient")
        n_cases = sum(p.is_case for p in self.patients)
        if 2 * n_cases != len(self.patients):
            raise DataError(
                f"cohort is not 1:1 matched: {n_cases} cases, {len(self.patients) - n_cases} controls"
            )

    def by_id(self) -> dict[str, LabeledPatient]:
        return {p.patient_id: p for p in self.patients}

    @property
    def n_pairs(self) -> int:
        return len(self.matching_report)


@dataclass(frozen=True)
class InclusionResult:
    cases: tuple[IncludedPatient, ...]
    control_pool: tuple[IncludedPatient, ...]
    exclusions: tuple[tuple[str, str], ...]
    dataset_end: int

    def to_json_obj(self) -> dict:
        return {
            "schema_version": 1,
            "dataset_end": self.dataset_end,
            "n_cases": len(self.cases),
            "n_control_pool": len(self.control_pool),
            "excluded": [{"patient_id": pid, "reason": why} for pid, why in self.exclusions],
        }


def first_event_day(record: PatientRecord, event_def: EventDefinition) -> int | None:
    """Day of the first diagnosis matching the target disease, if any."""
    days = [e.day for e in record.events if e.modality == "diagnosis" and event_def.matches(e.code)]
    return min(days) if days else None


def apply_inclusion(
    records: Sequence[PatientRecord],
    event_def: EventDefinition,
    dataset_end: int | None = None,
) -> InclusionResult:
    """Split records into cases and the control pool, with an exclusion report.

    Cases get index_day = the latest observation day at least
    MIN_EVENT_GAP_DAYS before their first event; patients with an event but
    no such day are excluded. Controls (no event code anywhere) get
    index_day = last observation day. dataset_end defaults to the latest
    event day across all records and bounds control follow-up.
    """
    if dataset_end is None:
        all_days = [e.day for r in records for e in r.events]
        if not all_days:
            raise DataError("no events in any record")
        dataset_end = max(all_days)

    cases: list[IncludedPatient] = []
    pool: list[IncludedPatient] = []
    excluded: list[tuple[str, str]] = []
    for record in records:
        obs_days = record.observation_days()
        if not obs_days:
            excluded.append((record.patient_id, "no observation days"))
            continue
        event_day = first_event_day(record, event_def)
        if event_day is not None:
            eligible = [d for d in obs_days if d <= event_day - MIN_EVENT_GAP_DAYS]
            if not eligible:
                excluded.append((record.patient_id, "no observation >=2 weeks before event"))
                continue
            index_day = max(eligible)
            cases.append(
                IncludedPatient(
                    patient_id=record.patient_id,
                    sex=record.sex,
                    index_day=index_day,
                    event_day=event_day,
                    age_at_index=record.age_on(index_day),
                    n_obs_days=len([d for d in obs_days if d <= index_day]),
                    follow_up_days=event_day - index_day,
                )
            )
        else:
            index_day = obs_days[-1]
            pool.append(
                IncludedPatient(
                    patient_id=record.patient_id,
                    sex=record.sex,
                    index_day=index_day,
                    event_day=None,
                    age_at_index=record.age_on(index_day),
                    n_obs_days=len(obs_days),
                    follow_up_days=max(0, dataset_end - index_day),
                )
            )
    return InclusionResult(tuple(cases), tuple(pool), tuple(excluded), dataset_end)


def label_horizons(
    patient: IncludedPatient, horizons: HorizonSet = DEFAULT_HORIZONS
) -> tuple[np.ndarray, np.ndarray]:
    """Per-horizon binary labels and their defined-mask for one patient."""
    n_t = horizons.n_t
    labels = np.zeros(n_t)
    mask = np.ones(n_t)
    if patient.is_case:
        delta = patient.event_day - patient.index_day
        if delta < MIN_EVENT_GAP_DAYS:
            raise DataError(
                f"case {patient.patient_id}: event only {delta} days after index, "
                "inclusion violated upstream"
            )
        for i, h in enumerate(horizons.days):
            labels[i] = 1.0 if delta <= h else 0.0
    else:
        for i in range(n_t):
            if patient.follow_up_days < horizons.mask_requirement(i):
                mask[i] = 0.0
    return labels, mask


def _zscore_covariates(patients: Sequence[IncludedPatient]) -> dict[str, np.ndarray]:
    """Map patient_id -> z-scored (age_at_index, n_obs_days)."""
    age = np.array([p.age_at_index for p in patients], dtype=float)
    nod = np.array([p.n_obs_days for p in patients], dtype=float)
    out = {}
    cols = []
    for col in (age, nod):
        sd = col.std()
        cols.append((col - col.mean()) / (sd if sd > 0 else 1.0))
    z = np.column_stack(cols)
    for p, row in zip(patients, z):
        out[p.patient_id] = row
    return out


def match_controls(
    cases: Sequence[IncludedPatient],
    control_pool: Sequence[IncludedPatient],
    event_def: EventDefinition,
    horizons: HorizonSet = DEFAULT_HORIZONS,
) -> Cohort:
    """Greedy 1:1 nearest-neighbour matching, exact on sex.

    Distance is Euclidean over z-scored (age_at_index, n_obs_days), with the
    z-scores fitted on cases and pool together. Cases are processed in
    descending age order; distance ties go to the smaller control id.
    """
    if not cases:
        raise DataError("no cases to match")
    for sex in sorted({c.sex for c in cases}):
        need = sum(c.sex == sex for c in cases)
        have = sum(p.sex == sex for p in control_pool)
        if have < need:
            raise DataError(
                f"insufficient same-sex controls: need {need} with sex={sex}, have {have}"
            )

    z = _zscore_covariates(list(cases) + list(control_pool))
    remaining: dict[str, list[IncludedPatient]] = {}
    for p in control_pool:
        remaining.setdefault(p.sex, []).append(p)

    ordered = sorted(cases, key=lambda c: (-c.age_at_index, c.patient_id))
    patients: list[LabeledPatient] = []
    pairs: list[MatchedPair] = []
    for case in ordered:
        candidates = remaining[case.sex]
        zc = z[case.patient_id]
        best = min(
            candidates,
            key=lambda p: (float(np.linalg.norm(z[p.patient_id] - zc)), p.patient_id),
        )
        candidates.remove(best)
        dist = float(np.linalg.norm(z[best.patient_id] - zc))
        pairs.append(MatchedPair(case.patient_id, best.patient_id, dist))
        for member in (case, best):
            labels, mask = label_horizons(member, horizons)
            patients.append(
                LabeledPatient(
                    patient_id=member.patient_id,
                    index_day=member.index_day,
                    labels=tuple(labels.tolist()),
                    label_mask=tuple(mask.tolist()),
                    is_case=member.is_case,
                    age_at_index=member.age_at_index,
                    sex=member.sex,
                    n_obs_days=member.n_obs_days,
                )
            )
    return Cohort(event_def, tuple(patients), tuple(pairs))


def build_cohort(
    records: Sequence[PatientRecord],
    event_def: EventDefinition,
    horizons: HorizonSet = DEFAULT_HORIZONS,
    dataset_end: int | None = None,
) -> tuple[Cohort, InclusionResult]:
    inclusion = apply_inclusion(records, event_def, dataset_end)
    cohort = match_controls(inclusion.cases, inclusion.control_pool, event_def, horizons)
    return cohort, inclusion


def split_folds(cohort: Cohort, k: int = 5, seed: int = 0) -> list[set[str]]:
    """k disjoint patient-id sets; matched pairs stay together.

    Each fold holds a near-equal number of whole pairs, so the per-fold case
    fraction is exactly one half. Deterministic under the seed.
    """
    if k < 2:
        raise ConfigError(f"need at least 2 folds, got {k}")
    if k > cohort.n_pairs:
        raise ConfigError(f"{k} folds but only {cohort.n_pairs} matched pairs")
    rng = np.random.default_rng(seed)
    order = rng.permutation(cohort.n_pairs)
    folds: list[set[str]] = [set() for _ in range(k)]
    for pos, pair_idx in enumerate(order):
        pair = cohort.matching_report[pair_idx]
        folds[pos % k].update((pair.case_id, pair.control_id))
    return folds


# ---------------------------------------------------------------------------
# Serialization

def cohort_to_json_obj(cohort: Cohort) -> dict:
    return {
        "schema_version": 1,
        "disease": cohort.event_def.disease,
        "code_prefixes": list(cohort.event_def.code_prefixes),
        "patients": [
            {
                "patient_id": p.patient_id,
                "index_day": p.index_day,
                "labels": list(p.labels),
                "label_mask": list(p.label_mask),
                "is_case": p.is_case,
                "age_at_index": p.age_at_index,
                "sex": p.sex,
                "n_obs_days": p.n_obs_days,
            }
            for p in cohort.patients
        ],
        "pairs": [
            {"case_id": m.case_id, "control_id": m.control_id, "distance": m.distance}
            for m in cohort.matching_report
        ],
    }


def cohort_from_json_obj(doc: Mapping) -> Cohort:
    try:
        event_def = EventDefinition(doc["disease"], tuple(doc["code_prefixes"]))
        patients = tuple(
            LabeledPatient(
                patient_id=p["patient_id"],
                index_day=int(p["index_day"]),
                labels=tuple(float(x) for x in p["labels"]),
                label_mask=tuple(float(x) for x in p["label_mask"]),
                is_case=bool(p["is_case"]),
                age_at_index=float(p["age_at_index"]),
                sex=p["sex"],
                n_obs_days=int(p["n_obs_days"]),
            )
            for p in doc["patients"]
        )
        pairs = tuple(
            MatchedPair(m["case_id"], m["control_id"], float(m["distance"]))
            for m in doc["pairs"]
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad cohort document: {exc}") from exc
    return Cohort(event_def, patients, pairs)


def write_folds_csv(path, folds: Sequence[Iterable[str]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["patient_id", "fold"])
        for i, fold in enumerate(folds):
            for pid in sorted(fold):
                writer.writerow([pid, i])


def read_folds_csv(path) -> list[set[str]]:
    assignments: dict[int, set[str]] = {}
    try:
        with open(path, "r", newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                assignments.setdefault(int(row["fold"]), set()).add(row["patient_id"])
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise DataError(f"bad folds file {path}: {exc}") from exc
    if not assignments or set(assignments) != set(range(len(assignments))):
        raise DataError(f"bad folds file {path}: fold ids must be 0..k-1")
    return [assignments[i] for i in range(len(assignments))]

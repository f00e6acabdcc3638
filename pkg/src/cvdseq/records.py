"""Domain records for the raw EHR data layer.

Days are integer indices relative to a dataset epoch (day 0), never calendar
dates. Codes are matched by normalized uppercase prefix with dots preserved,
so "I63" covers the whole I63.X family.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .errors import DataError

MODALITIES = ("diagnosis", "procedure", "medication", "lab", "vital", "demographic", "encounter")

#: Modalities whose events carry a numeric value.
CONTINUOUS_MODALITIES = frozenset({"lab", "vital", "demographic"})

#: Modalities whose events are identified by code alone.
CODED_MODALITIES = frozenset({"diagnosis", "procedure", "medication", "encounter"})

DAYS_PER_YEAR = 365.25

#: Reserved demographic codes lifted onto PatientRecord fields. They travel
#: in the event stream like any other event but are not feature channels.
SEX_CODE = "sex"
BIRTH_DAY_CODE = "birth_day"

_SEX_FROM_VALUE = {0.0: "F", 1.0: "M"}
_SEX_TO_VALUE = {"F": 0.0, "M": 1.0}


def normalize_code(code: str) -> str:
    """Uppercase, whitespace-stripped form used for all prefix matching."""
    return code.strip().upper()


def code_matches(code: str, prefixes: Iterable[str]) -> bool:
    norm = normalize_code(code)
    return any(norm.startswith(normalize_code(p)) for p in prefixes)


@dataclass(frozen=True)
class RawEvent:
    """One timestamped clinical observation of any modality for one patient."""

    patient_id: str
    day: int
    modality: str
    code: str
    value: float | None = None


@dataclass(frozen=True)
class PatientRecord:
    """A patient's demographics plus their day-ordered event stream."""

    patient_id: str
    sex: str
    birth_day: int
    events: tuple[RawEvent, ...]

    def observation_days(self) -> tuple[int, ...]:
        """Distinct event days in ascending order."""
        return tuple(sorted({e.day for e in self.events}))

    def age_on(self, day: int) -> float:
        return (day - self.birth_day) / DAYS_PER_YEAR

    def truncated(self, last_day: int) -> "PatientRecord":
        """Copy containing only events on or before ``last_day``."""
        kept = tuple(e for e in self.events if e.day <= last_day)
        return PatientRecord(self.patient_id, self.sex, self.birth_day, kept)


@dataclass(frozen=True)
class PatientSequence:
    """Per-day feature matrix for one patient.

    ``matrix`` has one row per entry of ``mask``; rows with mask 1 align,
    oldest to newest, with ``days``. Padding rows (mask 0) sit at the front
    so the most recent days always occupy the tail of the matrix.
    """

    patient_id: str
    days: tuple[int, ...]
    matrix: np.ndarray
    mask: np.ndarray

    def n_real_days(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True)
class EventDefinition:
    """Diagnosis-code prefixes that define a target cardiovascular event."""

    disease: str
    code_prefixes: tuple[str, ...]

    def __post_init__(self):
        if not self.code_prefixes:
            raise DataError("event definition needs at least one code prefix")

    def matches(self, code: str) -> bool:
        return code_matches(code, self.code_prefixes)


STROKE = EventDefinition("stroke", ("I63", "I69.3"))
MI = EventDefinition("mi", ("I21", "I25.2"))

EVENT_DEFINITIONS = {"stroke": STROKE, "mi": MI}


def validate_record(record: PatientRecord) -> list[str]:
    """Check every type invariant; return one message per violation.

    Violations are data, not failures: the list is empty iff the record is
    well formed, and repeated calls return identical lists.
    """
    violations: list[str] = []
    prev_day = None
    for i, e in enumerate(record.events):
        if e.day < 0:
            violations.append(f"event {i}: day >= 0 violated (day={e.day})")
        if e.patient_id != record.patient_id:
            violations.append(
                f"event {i}: patient_id mismatch ({e.patient_id!r} != {record.patient_id!r})"
            )
        if e.modality not in MODALITIES:
            violations.append(f"event {i}: unknown modality {e.modality!r}")
        elif e.modality in CONTINUOUS_MODALITIES and e.value is None:
            violations.append(f"event {i}: continuous modality missing value")
        elif e.modality in CODED_MODALITIES and not e.code.strip():
            violations.append(f"event {i}: coded modality with empty code")
        if prev_day is not None and e.day < prev_day:
            violations.append(f"event {i}: events not sorted by day")
        prev_day = e.day
    return violations


# ---------------------------------------------------------------------------
# JSON Lines wire format: one event per line with fields exactly
# (patient_id, day, modality, code, value). Serialization is canonical
# (fixed key order, repr-roundtrip floats) so identical events always
# produce identical bytes.
# ---------------------------------------------------------------------------

def event_to_json(event: RawEvent) -> str:
    return json.dumps(
        {
            "patient_id": event.patient_id,
            "day": event.day,
            "modality": event.modality,
            "code": event.code,
            "value": event.value,
        },
        separators=(",", ":"),
    )


def event_from_json(line: str) -> RawEvent:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed event line: {exc}") from exc
    try:
        value = obj["value"]
        return RawEvent(
            patient_id=str(obj["patient_id"]),
            day=int(obj["day"]),
            modality=str(obj["modality"]),
            code=str(obj["code"]),
            value=None if value is None else float(value),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"event line missing or invalid field: {exc}") from exc


def write_events_jsonl(path, events: Iterable[RawEvent]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in events:
            fh.write(event_to_json(e))
            fh.write("\n")


def read_events_jsonl(path) -> Iterator[RawEvent]:
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield event_from_json(line)


def sex_to_value(sex: str) -> float:
    try:
        return _SEX_TO_VALUE[sex]
    except KeyError:
        raise DataError(f"unknown sex category {sex!r}; expected one of {sorted(_SEX_TO_VALUE)}")


def records_to_events(records: Iterable[PatientRecord]) -> Iterator[RawEvent]:
    """Flatten records to the wire stream. Demographics already ride as events."""
    for r in records:
        yield from r.events


def group_events(events: Iterable[RawEvent]) -> list[PatientRecord]:
    """Assemble PatientRecords from a wire stream.

    Sex and birth day are lifted from the reserved demographic events, which
    stay in the event list so that serialization round-trips bit-identically.
    Event order within a patient is preserved as read; run validate_record
    to detect out-of-order streams.
    """
    by_patient: dict[str, list[RawEvent]] = {}
    for e in events:
        by_patient.setdefault(e.patient_id, []).append(e)

    records = []
    for pid, evs in by_patient.items():
        sex = None
        birth_day = None
        for e in evs:
            if e.modality == "demographic" and e.code == SEX_CODE and e.value is not None:
                sex = _SEX_FROM_VALUE.get(e.value)
            elif e.modality == "demographic" and e.code == BIRTH_DAY_CODE and e.value is not None:
                birth_day = int(e.value)
        if sex is None:
            raise DataError(f"patient {pid}: no '{SEX_CODE}' demographic event")
        if birth_day is None:
            raise DataError(f"patient {pid}: no '{BIRTH_DAY_CODE}' demographic event")
        records.append(PatientRecord(pid, sex, birth_day, tuple(evs)))
    return records


def demographic_events(patient_id: str, sex: str, birth_day: int, day: int) -> list[RawEvent]:
    """The two reserved events that encode PatientRecord demographics."""
    return [
        RawEvent(patient_id, day, "demographic", SEX_CODE, sex_to_value(sex)),
        RawEvent(patient_id, day, "demographic", BIRTH_DAY_CODE, float(birth_day)),
    ]

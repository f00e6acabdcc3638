"""Inclusion rules, horizon labels, matching, and fold splits.

The label test uses an explicit day-by-day timeline oracle; the matching
test compares greedy totals against brute-force minimum-weight assignment.
"""

import itertools
import math

import numpy as np
import pytest

from cvdseq.cohort import (
    DEFAULT_HORIZONS,
    HorizonSet,
    IncludedPatient,
    apply_inclusion,
    build_cohort,
    cohort_from_json_obj,
    cohort_to_json_obj,
    label_horizons,
    match_controls,
    read_folds_csv,
    split_folds,
    write_folds_csv,
)
from cvdseq.errors import ConfigError, DataError
from cvdseq.records import STROKE, PatientRecord, RawEvent


def _record(patient_id, days, sex="F", birth_day=-20000, event_day=None, event_code="I63.0"):
    events = [RawEvent(patient_id, d, "vital", "systolic_bp", 120.0) for d in days]
    if event_day is not None:
        events.append(RawEvent(patient_id, event_day, "diagnosis", event_code))
    events.sort(key=lambda e: e.day)
    return PatientRecord(patient_id, sex, birth_day, tuple(events))


def _included(pid, sex="F", age=60.0, n_obs=10, index_day=100, event_day=None, follow_up=500):
    if event_day is not None:
        follow_up = event_day - index_day
    return IncludedPatient(
        patient_id=pid,
        sex=sex,
        index_day=index_day,
        event_day=event_day,
        age_at_index=age,
        n_obs_days=n_obs,
        follow_up_days=follow_up,
    )


class TestHorizonSet:
    def test_default_shape(self):
        assert DEFAULT_HORIZONS.days == (30.0, 91.0, 365.0, math.inf)
        assert DEFAULT_HORIZONS.n_t == 4
        assert DEFAULT_HORIZONS.names() == ("30d", "91d", "365d", "over365d")

    def test_not_increasing_rejected(self):
        with pytest.raises(ConfigError):
            HorizonSet((91.0, 30.0, math.inf))

    def test_finite_last_rejected(self):
        with pytest.raises(ConfigError):
            HorizonSet((30.0, 91.0, 365.0))

    def test_unbounded_mask_requirement_is_largest_finite(self):
        assert DEFAULT_HORIZONS.mask_requirement(3) == 365.0
        assert DEFAULT_HORIZONS.mask_requirement(0) == 30.0


class TestApplyInclusion:
    def test_fourteen_day_rule_picks_latest_eligible_day(self):
        # Event at day 100; observations at 50 and 90. Day 90 is only 10
        # days ahead of the event, so the index falls back to day 50.
        rec = _record("p1", [50, 90], event_day=100)
        result = apply_inclusion([rec], STROKE)
        assert len(result.cases) == 1
        assert result.cases[0].index_day == 50
        assert result.cases[0].event_day == 100

    def test_boundary_exactly_fourteen_days(self):
        rec = _record("p1", [86, 90], event_day=100)
        result = apply_inclusion([rec], STROKE)
        assert result.cases[0].index_day == 86

    def test_only_close_observation_excluded(self):
        rec = _record("p1", [95], event_day=100)
        result = apply_inclusion([rec], STROKE)
        assert not result.cases
        assert not result.control_pool
        assert result.exclusions[0][0] == "p1"
        assert "2 weeks" in result.exclusions[0][1]

    def test_event_code_never_in_control_pool(self):
        rec = _record("p1", [95], event_day=100, event_code="I63.4")
        result = apply_inclusion([rec], STROKE)
        assert not result.control_pool

    def test_control_index_is_last_observation(self):
        rec = _record("p1", [10, 200, 60])
        result = apply_inclusion([rec], STROKE, dataset_end=1000)
        ctl = result.control_pool[0]
        assert ctl.index_day == 200
        assert ctl.follow_up_days == 800
        assert ctl.n_obs_days == 3

    def test_case_obs_days_counted_up_to_index(self):
        rec = _record("p1", [10, 20, 95], event_day=100)
        result = apply_inclusion([rec], STROKE)
        case = result.cases[0]
        assert case.index_day == 20
        assert case.n_obs_days == 2

    def test_dataset_end_defaults_to_latest_event(self):
        recs = [_record("p1", [10, 50]), _record("p2", [30, 400])]
        result = apply_inclusion(recs, STROKE)
        assert result.dataset_end == 400
        assert result.control_pool[0].follow_up_days == 350


def oracle_labels(event_offset, follow_up, horizons):
    """Day-by-day timeline walk, independent of the vectorized rule.

    event_offset is None for controls. Certification for the unbounded
    horizon uses the largest finite window.
    """
    labels, mask = [], []
    for h in horizons.days:
        window = min(h, horizons.max_finite if math.isinf(h) else h)
        if event_offset is not None:
            hit = False
            day = 1
            while day <= min(event_offset, 10**6):
                if day == event_offset and day <= h:
                    hit = True
                day += 1
            labels.append(1.0 if hit else 0.0)
            mask.append(1.0)
        else:
            labels.append(0.0)
            observed_through = 0
            day = 1
            while day <= follow_up and day <= window:
                observed_through = day
                day += 1
            mask.append(1.0 if observed_through >= window else 0.0)
    return labels, mask


class TestLabelHorizons:
    def test_case_within_all_horizons(self):
        labels, mask = label_horizons(_included("c", event_day=120, index_day=100))
        assert labels.tolist() == [1, 1, 1, 1]
        assert mask.tolist() == [1, 1, 1, 1]

    def test_case_beyond_a_year(self):
        labels, mask = label_horizons(_included("c", event_day=500, index_day=100))
        assert labels.tolist() == [0, 0, 0, 1]
        assert mask.tolist() == [1, 1, 1, 1]

    def test_control_with_short_follow_up(self):
        labels, mask = label_horizons(_included("k", follow_up=100))
        assert labels.tolist() == [0, 0, 0, 0]
        assert mask.tolist() == [1, 1, 0, 0]

    def test_control_with_full_follow_up(self):
        _, mask = label_horizons(_included("k", follow_up=365))
        assert mask.tolist() == [1, 1, 1, 1]

    def test_case_too_close_to_event_rejected(self):
        with pytest.raises(DataError):
            label_horizons(_included("c", event_day=105, index_day=100))

    def test_matches_timeline_oracle(self):
        rng = np.random.default_rng(19)
        for _ in range(200):
            if rng.random() < 0.5:
                offset = int(rng.integers(14, 900))
                p = _included("c", event_day=100 + offset, index_day=100)
                expected = oracle_labels(offset, None, DEFAULT_HORIZONS)
            else:
                fu = int(rng.integers(0, 900))
                p = _included("k", follow_up=fu)
                expected = oracle_labels(None, fu, DEFAULT_HORIZONS)
            labels, mask = label_horizons(p)
            assert (labels.tolist(), mask.tolist()) == expected

    def test_labels_cumulative_for_random_cases(self):
        rng = np.random.default_rng(29)
        for _ in range(100):
            offset = int(rng.integers(14, 2000))
            labels, _ = label_horizons(_included("c", event_day=offset, index_day=0))
            assert (np.diff(labels) >= 0).all()


def brute_force_min_matching(cases, controls, z):
    best = math.inf
    for perm in itertools.permutations(range(len(controls)), len(cases)):
        total = sum(
            float(np.linalg.norm(z[c.patient_id] - z[controls[j].patient_id]))
            for c, j in zip(cases, perm)
            if c.sex == controls[j].sex
        )
        if all(c.sex == controls[j].sex for c, j in zip(cases, perm)):
            best = min(best, total)
    return best


class TestMatchControls:
    def test_identical_candidate_selected_at_distance_zero(self):
        case = _included("c1", age=60, n_obs=10, event_day=200, index_day=100)
        twin = _included("k1", age=60, n_obs=10)
        other = _included("k2", age=40, n_obs=3)
        cohort = match_controls([case], [twin, other], STROKE)
        assert cohort.matching_report[0].control_id == "k1"
        assert cohort.matching_report[0].distance == 0.0

    def test_never_pairs_across_sex(self):
        case = _included("c1", sex="M", event_day=200, index_day=100)
        with pytest.raises(DataError, match="same-sex"):
            match_controls([case], [_included("k1", sex="F")], STROKE)

    def test_deficit_named(self):
        cases = [
            _included("c1", sex="M", event_day=200, index_day=100),
            _included("c2", sex="M", event_day=300, index_day=100),
        ]
        with pytest.raises(DataError, match="need 2.*have 1"):
            match_controls(cases, [_included("k1", sex="M")], STROKE)

    def test_descending_age_order_drives_greedy(self):
        # The older case takes the shared nearest control first.
        old = _included("c_old", age=80, n_obs=10, event_day=200, index_day=100)
        young = _included("c_young", age=50, n_obs=10, event_day=200, index_day=100)
        near_old = _included("k1", age=79, n_obs=10)
        far = _included("k2", age=20, n_obs=10)
        cohort = match_controls([young, old], [near_old, far], STROKE)
        by_case = {m.case_id: m.control_id for m in cohort.matching_report}
        assert by_case["c_old"] == "k1"
        assert by_case["c_young"] == "k2"

    def test_greedy_equals_brute_force_when_uncontested(self):
        # Well-separated case/control clusters: greedy must hit the optimum.
        rng = np.random.default_rng(37)
        for _ in range(20):
            cases, controls = [], []
            for i in range(3):
                center = 40 + 15 * i
                cases.append(
                    _included(f"c{i}", age=center + rng.normal(0, 0.1), n_obs=10, event_day=200, index_day=100)
                )
                controls.append(
                    _included(f"k{i}", age=center + rng.normal(0, 0.1), n_obs=10)
                )
            cohort = match_controls(cases, controls, STROKE)
            from cvdseq.cohort import _zscore_covariates

            z = _zscore_covariates(cases + controls)
            greedy_total = sum(m.distance for m in cohort.matching_report)
            assert greedy_total == pytest.approx(
                brute_force_min_matching(cases, controls, z), abs=1e-9
            )

    def test_cohort_invariants(self):
        rng = np.random.default_rng(41)
        cases = [
            _included(f"c{i}", sex="M" if i % 2 else "F", age=float(rng.uniform(40, 90)),
                      n_obs=int(rng.integers(1, 40)), event_day=500, index_day=100)
            for i in range(12)
        ]
        pool = [
            _included(f"k{i}", sex="M" if i % 2 else "F", age=float(rng.uniform(40, 90)),
                      n_obs=int(rng.integers(1, 40)), follow_up=int(rng.integers(0, 800)))
            for i in range(30)
        ]
        cohort = match_controls(cases, pool, STROKE)
        assert cohort.n_pairs == 12
        assert len(cohort.patients) == 24
        by_id = cohort.by_id()
        for m in cohort.matching_report:
            assert by_id[m.case_id].sex == by_id[m.control_id].sex
        controls_used = [m.control_id for m in cohort.matching_report]
        assert len(set(controls_used)) == len(controls_used)
        # Positive counts never decrease with horizon length.
        counts = np.array([p.labels for p in cohort.patients]).sum(axis=0)
        assert (np.diff(counts) >= 0).all()

    def test_round_trip_json(self):
        case = _included("c1", event_day=200, index_day=100)
        ctl = _included("k1")
        cohort = match_controls([case], [ctl], STROKE)
        assert cohort_from_json_obj(cohort_to_json_obj(cohort)) == cohort


def _toy_cohort(n_pairs, seed=0):
    rng = np.random.default_rng(seed)
    cases, pool = [], []
    for i in range(n_pairs):
        sex = "M" if rng.random() < 0.5 else "F"
        cases.append(
            _included(f"c{i:04d}", sex=sex, age=float(rng.uniform(40, 90)),
                      n_obs=int(rng.integers(1, 40)), event_day=500, index_day=100)
        )
        pool.append(
            _included(f"k{i:04d}", sex=sex, age=float(rng.uniform(40, 90)),
                      n_obs=int(rng.integers(1, 40)), follow_up=int(rng.integers(0, 800)))
        )
    return match_controls(cases, pool, STROKE)


class TestSplitFolds:
    def test_ten_pairs_five_folds(self):
        cohort = _toy_cohort(10)
        folds = split_folds(cohort, k=5, seed=1)
        assert len(folds) == 5
        assert all(len(f) == 4 for f in folds)
        assert set().union(*folds) == {p.patient_id for p in cohort.patients}

    def test_same_seed_identical(self):
        cohort = _toy_cohort(17)
        assert split_folds(cohort, 5, seed=9) == split_folds(cohort, 5, seed=9)

    def test_pairs_colocated_exhaustive(self):
        cohort = _toy_cohort(500, seed=3)
        folds = split_folds(cohort, 5, seed=7)
        where = {}
        for i, fold in enumerate(folds):
            for pid in fold:
                where[pid] = i
        for m in cohort.matching_report:
            assert where[m.case_id] == where[m.control_id]

    def test_case_fraction_balanced(self):
        cohort = _toy_cohort(23)
        by_id = cohort.by_id()
        for fold in split_folds(cohort, 5, seed=2):
            n_cases = sum(by_id[p].is_case for p in fold)
            assert 2 * n_cases == len(fold)

    def test_too_many_folds_rejected(self):
        with pytest.raises(ConfigError):
            split_folds(_toy_cohort(3), k=5)

    def test_folds_csv_round_trip(self, tmp_path):
        folds = split_folds(_toy_cohort(10), 5, seed=4)
        path = tmp_path / "folds.csv"
        write_folds_csv(path, folds)
        assert read_folds_csv(path) == folds


class TestBuildCohort:
    def test_end_to_end_from_records(self):
        rng = np.random.default_rng(53)
        records = []
        for i in range(8):
            days = sorted(rng.choice(600, size=10, replace=False).tolist())
            records.append(
                _record(f"c{i}", days, sex="F", birth_day=int(-rng.integers(15000, 30000)),
                        event_day=700 + int(rng.integers(0, 100)))
            )
        for i in range(20):
            days = sorted(rng.choice(600, size=10, replace=False).tolist())
            records.append(
                _record(f"k{i}", days, sex="F", birth_day=int(-rng.integers(15000, 30000)))
            )
        cohort, inclusion = build_cohort(records, STROKE, dataset_end=1500)
        assert cohort.n_pairs == 8
        assert not inclusion.exclusions
        for p in cohort.patients:
            labs = np.asarray(p.labels)
            assert (np.diff(labs) >= 0).all()

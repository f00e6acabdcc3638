"""Vocabulary selection, per-day aggregation, scaling, and padding."""

import numpy as np
import pytest

from cvdseq.errors import ConfigError, DataError
from cvdseq.features import (
    CharlsonMap,
    PhysiologicalRanges,
    ScalerImputer,
    Vocabulary,
    aggregate_continuous,
    build_vocabulary,
    encode_day,
    encode_record,
    fit_scaler_imputer,
    pad_sequence,
    scale_impute,
    transform,
)
from cvdseq.records import PatientRecord, PatientSequence, RawEvent

RANGES = PhysiologicalRanges({"systolic_bp": (85.0, 180.0), "glucose": (3.5, 8.5)})
CHARLSON = CharlsonMap.default()


def _record(events, patient_id="p1", sex="F", birth_day=0):
    return PatientRecord(patient_id, sex, birth_day, tuple(events))


class TestAggregateContinuous:
    def test_three_values(self):
        assert aggregate_continuous([1, 2, 3], (0, 10)) == (2, 1, 3, 0)

    def test_singleton(self):
        assert aggregate_continuous([5], (0, 10)) == (5, 0, 1, 0)

    def test_out_of_range_sets_flag(self):
        assert aggregate_continuous([5, 200], (0, 10)) == (102.5, 97.5, 2, 1)

    def test_empty_raises(self):
        with pytest.raises(DataError):
            aggregate_continuous([], (0, 10))

    def test_permutation_invariant(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            vals = rng.normal(50, 30, size=rng.integers(1, 9)).tolist()
            base = aggregate_continuous(vals, (0, 100))
            rng.shuffle(vals)
            assert aggregate_continuous(vals, (0, 100)) == base

    def test_mad_matches_definition(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            vals = rng.normal(0, 5, size=rng.integers(1, 12))
            med, mad, count, _ = aggregate_continuous(vals.tolist(), (-100, 100))
            assert med == pytest.approx(np.median(vals))
            assert mad == pytest.approx(np.median(np.abs(vals - np.median(vals))))
            assert count == len(vals)


class TestBuildVocabulary:
    def test_zero_prevalence_code_absent(self):
        records = [
            _record([RawEvent(f"p{i}", 0, "diagnosis", "I10")], patient_id=f"p{i}")
            for i in range(100)
        ]
        vocab = build_vocabulary(records, charlson=CHARLSON)
        assert ("diagnosis", "I10") in vocab.code_slots
        assert ("diagnosis", "Z99") not in vocab.code_slots

    def test_exactly_one_percent_is_kept(self):
        records = []
        for i in range(100):
            events = [RawEvent(f"p{i}", 0, "diagnosis", "I10")]
            if i == 0:
                events.append(RawEvent("p0", 0, "diagnosis", "E11.9"))
            records.append(_record(events, patient_id=f"p{i}"))
        vocab = build_vocabulary(records, min_prevalence=0.01, charlson=CHARLSON)
        assert ("diagnosis", "E11.9") in vocab.code_slots

    def test_below_boundary_is_dropped(self):
        records = []
        for i in range(200):
            events = [RawEvent(f"p{i}", 0, "diagnosis", "I10")]
            if i == 0:
                events.append(RawEvent("p0", 0, "diagnosis", "E11.9"))
            records.append(_record(events, patient_id=f"p{i}"))
        vocab = build_vocabulary(records, min_prevalence=0.01, charlson=CHARLSON)
        assert ("diagnosis", "E11.9") not in vocab.code_slots

    def test_top_k_caps_diagnosis_procedure_codes(self):
        # 400 distinct codes, every patient has all of them; cap keeps 300.
        codes = [f"Q{i:03d}" for i in range(400)]
        records = []
        for p in range(4):
            events = [RawEvent(f"p{p}", 0, "diagnosis", c) for c in codes]
            records.append(_record(events, patient_id=f"p{p}"))
        vocab = build_vocabulary(records, top_k=300, charlson=CHARLSON)
        diag_proc = [s for s in vocab.code_slots if s[0] in ("diagnosis", "procedure")]
        assert len(diag_proc) == 300
        # Equal prevalence everywhere, so the lexicographically first 300 stay.
        assert [c for _, c in sorted(diag_proc)] == sorted(codes)[:300]

    def test_medication_not_subject_to_top_k(self):
        records = []
        codes = [f"Q{i:03d}" for i in range(400)]
        for p in range(4):
            events = [RawEvent(f"p{p}", 0, "diagnosis", c) for c in codes]
            events.append(RawEvent(f"p{p}", 0, "medication", "C07AB02"))
            records.append(_record(events, patient_id=f"p{p}"))
        vocab = build_vocabulary(records, top_k=300, charlson=CHARLSON)
        assert ("medication", "C07AB02") in vocab.code_slots
        diag_proc = [s for s in vocab.code_slots if s[0] != "medication"]
        assert len(diag_proc) == 300

    def test_continuous_prevalence_filter(self):
        records = []
        for i in range(100):
            events = [RawEvent(f"p{i}", 0, "vital", "systolic_bp", 120.0)]
            if i < 5:
                events.append(RawEvent(f"p{i}", 0, "lab", "rare_assay", 1.0))
            records.append(_record(events, patient_id=f"p{i}"))
        vocab = build_vocabulary(records, min_prevalence=0.10, charlson=CHARLSON)
        assert "systolic_bp" in vocab.continuous_slots
        assert "rare_assay" not in vocab.continuous_slots

    def test_feature_names_layout(self):
        vocab = Vocabulary(
            code_slots=(("diagnosis", "I10"), ("medication", "C07AB02")),
            continuous_slots=("systolic_bp",),
            charlson_slots=CHARLSON.names(),
        )
        names = vocab.feature_names
        assert names[:2] == ("age", "sex")
        assert names[2:6] == (
            "systolic_bp:median",
            "systolic_bp:mad",
            "systolic_bp:count",
            "systolic_bp:abnormal",
        )
        assert "diagnosis:I10" in names
        assert "charlson:renal_disease" in names
        assert len(set(names)) == len(names)
        assert vocab.n_features == 2 + 4 + 2 + 17

    def test_round_trip_json(self):
        vocab = Vocabulary(
            code_slots=(("diagnosis", "I10"),),
            continuous_slots=("glucose",),
            charlson_slots=CHARLSON.names(),
        )
        assert Vocabulary.from_json_obj(vocab.to_json_obj()) == vocab


VOCAB = Vocabulary(
    code_slots=(("diagnosis", "I10"), ("diagnosis", "I21.0"), ("medication", "C07AB02")),
    continuous_slots=("glucose", "systolic_bp"),
    charlson_slots=CHARLSON.names(),
)


def _col(name):
    return VOCAB.feature_names.index(name)


class TestEncodeDay:
    def test_in_range_bp_reading(self):
        rec = _record([RawEvent("p1", 3, "vital", "systolic_bp", 120.0)])
        vec = encode_day(rec, 3, VOCAB, RANGES, CHARLSON)
        i = _col("systolic_bp:median")
        assert vec[i : i + 4].tolist() == [120.0, 0.0, 1.0, 0.0]

    def test_missing_variable_marked_nan(self):
        rec = _record([RawEvent("p1", 3, "vital", "systolic_bp", 120.0)])
        vec = encode_day(rec, 3, VOCAB, RANGES, CHARLSON)
        i = _col("glucose:median")
        assert np.isnan(vec[i : i + 4]).all()

    def test_same_day_prescriptions_counted(self):
        rec = _record(
            [
                RawEvent("p1", 0, "medication", "C07AB02"),
                RawEvent("p1", 0, "medication", "C07AB02"),
            ]
        )
        vec = encode_day(rec, 0, VOCAB, RANGES, CHARLSON)
        assert vec[_col("medication:C07AB02")] == 2.0

    def test_diagnosis_indicator_is_binary(self):
        rec = _record(
            [
                RawEvent("p1", 0, "diagnosis", "I10"),
                RawEvent("p1", 0, "diagnosis", "I10"),
            ]
        )
        vec = encode_day(rec, 0, VOCAB, RANGES, CHARLSON)
        assert vec[_col("diagnosis:I10")] == 1.0

    def test_charlson_flag_cumulative(self):
        rec = _record(
            [
                RawEvent("p1", 0, "diagnosis", "I21.0"),
                RawEvent("p1", 30, "vital", "systolic_bp", 118.0),
            ]
        )
        j = _col("charlson:myocardial_infarction")
        assert encode_day(rec, 0, VOCAB, RANGES, CHARLSON)[j] == 1.0
        # Still set on a later day with no new diagnosis events.
        assert encode_day(rec, 30, VOCAB, RANGES, CHARLSON)[j] == 1.0

    def test_age_and_sex_slots(self):
        rec = _record([RawEvent("p1", 3, "diagnosis", "I10")], sex="M", birth_day=-7305)
        vec = encode_day(rec, 3, VOCAB, RANGES, CHARLSON)
        assert vec[_col("sex")] == 1.0
        assert vec[_col("age")] == pytest.approx((3 + 7305) / 365.25)

    def test_non_observation_day_raises(self):
        rec = _record([RawEvent("p1", 3, "diagnosis", "I10")])
        with pytest.raises(DataError, match="not an observation day"):
            encode_day(rec, 4, VOCAB, RANGES, CHARLSON)

    def test_length_always_matches_vocab(self):
        rng = np.random.default_rng(5)
        for trial in range(20):
            events = []
            for _ in range(rng.integers(1, 15)):
                day = int(rng.integers(0, 5))
                kind = rng.integers(0, 3)
                if kind == 0:
                    events.append(RawEvent("p1", day, "diagnosis", "I10"))
                elif kind == 1:
                    events.append(RawEvent("p1", day, "vital", "systolic_bp", float(rng.normal(120, 30))))
                else:
                    events.append(RawEvent("p1", day, "medication", "C07AB02"))
            events.sort(key=lambda e: e.day)
            rec = _record(events)
            for day in rec.observation_days():
                assert encode_day(rec, day, VOCAB, RANGES, CHARLSON).shape == (VOCAB.n_features,)


class TestEncodeRecord:
    def test_matches_per_day_encoding(self):
        rng = np.random.default_rng(17)
        for _ in range(10):
            events = []
            for _ in range(rng.integers(2, 20)):
                day = int(rng.integers(0, 8))
                kind = rng.integers(0, 4)
                if kind == 0:
                    events.append(RawEvent("p1", day, "diagnosis", rng.choice(["I10", "I21.0", "N18.4"])))
                elif kind == 1:
                    events.append(RawEvent("p1", day, "vital", "systolic_bp", float(rng.normal(120, 40))))
                elif kind == 2:
                    events.append(RawEvent("p1", day, "lab", "glucose", float(rng.normal(5, 2))))
                else:
                    events.append(RawEvent("p1", day, "medication", "C07AB02"))
            events.sort(key=lambda e: e.day)
            rec = _record(events)
            seq = encode_record(rec, VOCAB, RANGES, CHARLSON)
            assert seq.days == rec.observation_days()
            assert seq.mask.tolist() == [1.0] * len(seq.days)
            for row, day in zip(seq.matrix, seq.days):
                expected = encode_day(rec, day, VOCAB, RANGES, CHARLSON)
                np.testing.assert_array_equal(
                    np.nan_to_num(row, nan=-1), np.nan_to_num(expected, nan=-1)
                )

    def test_charlson_monotone_along_days(self):
        events = [
            RawEvent("p1", 0, "vital", "systolic_bp", 120.0),
            RawEvent("p1", 5, "diagnosis", "N18.4"),
            RawEvent("p1", 9, "vital", "systolic_bp", 125.0),
        ]
        seq = encode_record(_record(events), VOCAB, RANGES, CHARLSON)
        j = _col("charlson:renal_disease")
        col = seq.matrix[:, j]
        assert col.tolist() == [0.0, 1.0, 1.0]
        assert (np.diff(col) >= 0).all()

    def test_no_observation_days_raises(self):
        with pytest.raises(DataError):
            encode_record(_record([]), VOCAB, RANGES, CHARLSON)


def _seq(matrix, patient_id="p1"):
    m = np.asarray(matrix, dtype=float)
    return PatientSequence(patient_id, tuple(range(m.shape[0])), m, np.ones(m.shape[0]))


class TestScalerImputer:
    def test_fit_min_max_mean(self):
        si = fit_scaler_imputer([_seq([[2.0], [4.0]])])
        assert si.min_[0] == 2 and si.max_[0] == 4 and si.mean_[0] == 3

    def test_value_at_max_scales_to_one(self):
        si = fit_scaler_imputer([_seq([[2.0], [4.0]])])
        out = scale_impute(_seq([[4.0]]), si)
        assert out.matrix[0, 0] == 1.0

    def test_test_value_above_max_clipped(self):
        si = fit_scaler_imputer([_seq([[2.0], [4.0]])])
        out = scale_impute(_seq([[5.0]]), si)
        assert out.matrix[0, 0] == 1.0

    def test_constant_feature_maps_to_zero(self):
        si = fit_scaler_imputer([_seq([[7.0], [7.0]])])
        out = scale_impute(_seq([[7.0]]), si)
        assert out.matrix[0, 0] == 0.0

    def test_never_observed_feature_degenerates(self):
        si = fit_scaler_imputer([_seq([[np.nan], [np.nan]])])
        assert (si.min_[0], si.max_[0], si.mean_[0]) == (0.0, 1.0, 0.0)
        out = scale_impute(_seq([[np.nan]]), si)
        assert out.matrix[0, 0] == 0.0

    def test_nan_imputed_with_prescaling_mean(self):
        si = fit_scaler_imputer([_seq([[2.0], [4.0]])])
        out = scale_impute(_seq([[np.nan]]), si)
        # mean 3 scaled by (3-2)/(4-2)
        assert out.matrix[0, 0] == 0.5

    def test_unfitted_scaler_rejected(self):
        si = ScalerImputer((), np.zeros(1), np.ones(1), np.zeros(1), fitted=False)
        with pytest.raises(DataError):
            scale_impute(_seq([[1.0]]), si)

    def test_self_transform_never_clips(self):
        rng = np.random.default_rng(23)
        for _ in range(20):
            seqs = [
                _seq(rng.normal(0, 10, size=(rng.integers(1, 6), 4)), patient_id=f"p{i}")
                for i in range(3)
            ]
            si = fit_scaler_imputer(seqs)
            for s in seqs:
                unclipped = (s.matrix - si.min_) / np.where(
                    si.max_ > si.min_, si.max_ - si.min_, 1.0
                )
                out = scale_impute(s, si)
                inside = (unclipped >= 0) & (unclipped <= 1)
                assert inside.all()
                assert (out.matrix >= 0).all() and (out.matrix <= 1).all()

    def test_round_trip_json(self):
        si = fit_scaler_imputer([_seq([[2.0, 1.0], [4.0, 5.0]])], feature_names=("a", "b"))
        si2 = ScalerImputer.from_json_obj(si.to_json_obj())
        np.testing.assert_array_equal(si.min_, si2.min_)
        np.testing.assert_array_equal(si.max_, si2.max_)
        np.testing.assert_array_equal(si.mean_, si2.mean_)
        assert si2.fitted


class TestPadding:
    def test_short_sequence_front_padded(self):
        seq = _seq([[1.0], [2.0], [3.0]])
        out = pad_sequence(seq, 5)
        assert out.matrix[:, 0].tolist() == [0, 0, 1, 2, 3]
        assert out.mask.tolist() == [0, 0, 1, 1, 1]
        assert out.days == (0, 1, 2)

    def test_long_sequence_keeps_most_recent(self):
        seq = _seq([[float(i)] for i in range(6)])
        out = pad_sequence(seq, 4)
        assert out.matrix[:, 0].tolist() == [2, 3, 4, 5]
        assert out.mask.tolist() == [1, 1, 1, 1]
        assert out.days == (2, 3, 4, 5)

    def test_transform_output_in_unit_interval(self):
        rng = np.random.default_rng(31)
        train = [_seq(rng.normal(5, 3, size=(4, 3)), patient_id=f"t{i}") for i in range(3)]
        si = fit_scaler_imputer(train)
        test = _seq(rng.normal(5, 9, size=(2, 3)))
        out = transform(test, si, 6)
        assert out.matrix.shape == (6, 3)
        assert out.mask.tolist() == [0, 0, 0, 0, 1, 1]
        assert (out.matrix >= 0).all() and (out.matrix <= 1).all()
        assert not np.isnan(out.matrix).any()


class TestConfigs:
    def test_default_ranges_load_and_validate(self):
        ranges = PhysiologicalRanges.default()
        assert ranges.bounds_for("systolic_bp")[0] < ranges.bounds_for("systolic_bp")[1]

    def test_bad_range_rejected(self):
        with pytest.raises(ConfigError):
            PhysiologicalRanges({"x": (5.0, 5.0)})

    def test_unknown_variable_unbounded(self):
        lo, hi = PhysiologicalRanges({}).bounds_for("whatever")
        assert lo == -np.inf and hi == np.inf

    def test_charlson_has_17_conditions(self):
        assert len(CHARLSON.names()) == 17

    def test_charlson_covers_planted_codes(self):
        flat = {p for prefixes in CHARLSON.conditions.values() for p in prefixes}
        assert any("E11.9".startswith(p) for p in flat)
        assert any("N18.4".startswith(p) for p in flat)

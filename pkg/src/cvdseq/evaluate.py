"""Cross-validated evaluation harness.

Builds per-fold feature pipelines (vocabulary and scaler fitted on the
training folds only), adapts the score models behind one small fitting
interface, computes AUC / sensitivity / precision per fold and horizon
with thresholds frozen on an inner validation fold, and runs permutation
feature importance with t-tests against zero.

Fold layout: for k folds, fold f tests on fold f, freezes thresholds
(and early-stops sequence models) on fold (f+1) mod k, and trains on
the remaining k-2 folds. Test data never touches fitting or threshold
selection.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import gru
from .baselines import (
    HazardScoreConfig,
    concat_history,
    index_day_features,
    logreg_predict,
    logreg_train,
    qrisk_score,
)
from .cohort import Cohort, HorizonSet, DEFAULT_HORIZONS
from .errors import ConfigError, DataError, NumericError
from .features import (
    CharlsonMap,
    PhysiologicalRanges,
    ScalerImputer,
    Vocabulary,
    build_vocabulary,
    encode_record,
    fit_scaler_imputer,
    pad_sequence,
    scale_impute,
)
from .metrics import choose_threshold, roc_auc, roc_curve, sens_prec
from .numerics import seeded_rng
from .records import PatientRecord, PatientSequence


@dataclass(frozen=True)
class FeaturizationConfig:
    """Per-fold feature pipeline settings."""

    n_days_pad: int = 30
    top_k: int = 300
    min_prevalence: float = 0.01

    def __post_init__(self) -> None:
        if self.n_days_pad <= 0:
            raise ConfigError("n_days_pad must be positive")
        if self.top_k <= 0:
            raise ConfigError("top_k must be positive")
        if not (0.0 <= self.min_prevalence <= 1.0):
            raise ConfigError("min_prevalence must lie in [0, 1]")


@dataclass
class Split:
    """One side of a fold, fully featurized."""

    patient_ids: tuple[str, ...]
    sequences: list[PatientSequence]
    x: np.ndarray
    seq_mask: np.ndarray
    y: np.ndarray
    label_mask: np.ndarray
    is_case: np.ndarray

    @property
    def n_t(self) -> int:
        return self.y.shape[1]

    def as_train_tuple(self):
        return self.x, self.seq_mask, self.y, self.label_mask


@dataclass
class FoldData:
    fold: int
    n_folds: int
    train: Split
    val: Split
    test: Split
    vocab: Vocabulary
    scaler: ScalerImputer
    records: dict[str, PatientRecord]
    index_days: dict[str, int]


def fold_seed(seed: int, fold: int) -> int:
    """Stable derived seed for one fold's model fits."""
    return int(np.random.SeedSequence([seed, fold]).generate_state(1)[0])


def _build_split(ids, labeled_by_id, scaled_by_id, n_days_pad) -> Split:
    sequences = [scaled_by_id[pid] for pid in ids]
    padded = [pad_sequence(s, n_days_pad) for s in sequences]
    return Split(
        patient_ids=tuple(ids),
        sequences=sequences,
        x=np.stack([p.matrix for p in padded]),
        seq_mask=np.stack([p.mask for p in padded]),
        y=np.stack([np.asarray(labeled_by_id[pid].labels, dtype=float) for pid in ids]),
        label_mask=np.stack(
            [np.asarray(labeled_by_id[pid].label_mask, dtype=float) for pid in ids]
        ),
        is_case=np.array([labeled_by_id[pid].is_case for pid in ids], dtype=bool),
    )


def prepare_folds(
    records,
    cohort: Cohort,
    folds,
    config: FeaturizationConfig = FeaturizationConfig(),
    ranges: PhysiologicalRanges | None = None,
    charlson: CharlsonMap | None = None,
) -> list[FoldData]:
    """Featurize each fold with train-only fitting.

    Records are truncated at each patient's index day before anything is
    fit or encoded, so no post-index information leaks into features.
    """
    if ranges is None:
        ranges = PhysiologicalRanges.default()
    by_id = {r.patient_id: r for r in records}
    labeled_by_id = {p.patient_id: p for p in cohort.patients}
    missing = [pid for pid in labeled_by_id if pid not in by_id]
    if missing:
        raise DataError(f"cohort patient {missing[0]!r} has no record")
    truncated = {
        pid: by_id[pid].truncated(p.index_day) for pid, p in labeled_by_id.items()
    }
    index_days = {pid: p.index_day for pid, p in labeled_by_id.items()}
    order = [p.patient_id for p in cohort.patients]

    k = len(folds)
    if k < 3:
        raise ConfigError("need at least 3 folds to carve out an inner validation fold")
    out: list[FoldData] = []
    for f in range(k):
        test_ids = folds[f]
        val_ids = folds[(f + 1) % k]
        train_ids = set().union(*(folds[g] for g in range(k) if g != f and g != (f + 1) % k))
        train = [pid for pid in order if pid in train_ids]
        val = [pid for pid in order if pid in val_ids]
        test = [pid for pid in order if pid in test_ids]

        vocab = build_vocabulary(
            [truncated[pid] for pid in train],
            top_k=config.top_k,
            min_prevalence=config.min_prevalence,
            charlson=charlson,
        )
        encoded = {
            pid: encode_record(truncated[pid], vocab, ranges, charlson=charlson)
            for pid in order
        }
        scaler = fit_scaler_imputer([encoded[pid] for pid in train], vocab.feature_names)
        scaled = {pid: scale_impute(seq, scaler) for pid, seq in encoded.items()}

        out.append(FoldData(
            fold=f,
            n_folds=k,
            train=_build_split(train, labeled_by_id, scaled, config.n_days_pad),
            val=_build_split(val, labeled_by_id, scaled, config.n_days_pad),
            test=_build_split(test, labeled_by_id, scaled, config.n_days_pad),
            vocab=vocab,
            scaler=scaler,
            records=truncated,
            index_days=index_days,
        ))
    return out


# ---------------------------------------------------------------------------
# model adapters: spec.fit(fold, seed) -> fitted; fitted.scores(split) ->
# (n_patients, n_horizons) probabilities, NaN columns for horizons the
# model does not score.


class QriskSpec:
    """Fixed linear hazard score evaluated at the index day; no fitting."""

    def __init__(self, config: HazardScoreConfig | None = None, name: str = "qrisk"):
        self.config = HazardScoreConfig.default() if config is None else config
        self.name = name

    def fit(self, fold: FoldData, seed: int) -> "FittedQrisk":
        return FittedQrisk(self, fold)


class FittedQrisk:
    def __init__(self, spec: QriskSpec, fold: FoldData):
        self.spec = spec
        self.fold = fold

    def scores(self, split: Split) -> np.ndarray:
        values = np.array([
            qrisk_score(
                index_day_features(self.fold.records[pid], self.fold.index_days[pid]),
                self.spec.config,
            )
            for pid in split.patient_ids
        ])
        return np.tile(values[:, None], (1, split.n_t))

    def scores_from(self, x: np.ndarray, seq_mask: np.ndarray) -> np.ndarray:
        raise DataError(
            "the hazard-score baseline reads raw records, not feature tensors; "
            "permutation importance is undefined for it"
        )


class LogRegSpec:
    """L1 logistic regression over the last `window` observation days,
    one model per horizon."""

    def __init__(self, window: int = 50, lam: float = 2e-3, name: str | None = None):
        if window <= 0:
            raise ConfigError("history window must be positive")
        if lam < 0:
            raise ConfigError("lam must be non-negative")
        self.window = window
        self.lam = lam
        self.name = name if name is not None else f"lr{window}"

    def _design(self, split: Split) -> np.ndarray:
        return np.stack([concat_history(s, self.window) for s in split.sequences])

    def _design_from_tensor(self, x: np.ndarray, seq_mask: np.ndarray) -> np.ndarray:
        w = self.window
        n, _, n_feat = x.shape
        out = np.zeros((n, w * n_feat))
        for i in range(n):
            real = x[i][seq_mask[i] > 0][-w:]
            if len(real):
                out[i, (w - len(real)) * n_feat:] = real.reshape(-1)
        return out

    def fit(self, fold: FoldData, seed: int) -> "FittedLogReg":
        X = self._design(fold.train)
        models = []
        for h in range(fold.train.n_t):
            keep = fold.train.label_mask[:, h] > 0
            models.append(logreg_train(
                X[keep], fold.train.y[keep, h], self.lam,
                seed=seed, history_window=self.window,
            ))
        return FittedLogReg(self, models)


class FittedLogReg:
    def __init__(self, spec: LogRegSpec, models):
        self.spec = spec
        self.models = models

    def scores(self, split: Split) -> np.ndarray:
        X = self.spec._design(split)
        return np.column_stack([logreg_predict(m, X) for m in self.models])

    def scores_from(self, x: np.ndarray, seq_mask: np.ndarray) -> np.ndarray:
        X = self.spec._design_from_tensor(x, seq_mask)
        return np.column_stack([logreg_predict(m, X) for m in self.models])


class GruSpec:
    """Recurrent models. Multi-task variants fit one network scoring all
    horizons; the single-task variant fits one network per requested
    horizon and leaves the rest NaN."""

    def __init__(self, config: gru.ModelConfig, horizons=None, name: str | None = None):
        self.config = config
        self.horizons = None if horizons is None else tuple(horizons)
        self.name = name if name is not None else config.variant.replace("_", "-")

    def fit(self, fold: FoldData, seed: int) -> "FittedGru":
        train_t = fold.train.as_train_tuple()
        val_t = fold.val.as_train_tuple()
        if self.config.variant == "gru":
            horizons = self.horizons if self.horizons is not None else tuple(range(fold.train.n_t))
            results = {}
            for h in horizons:
                cfg = dataclasses.replace(self.config, target_horizon=h, seed=seed)
                results[h] = gru.train(train_t, val_t, cfg)
            return FittedGru(self, results, fold.train.n_t)
        cfg = dataclasses.replace(self.config, seed=seed)
        return FittedGru(self, {None: gru.train(train_t, val_t, cfg)}, fold.train.n_t)


class FittedGru:
    def __init__(self, spec: GruSpec, results, n_t: int):
        self.spec = spec
        self.results = results
        self.n_t = n_t

    def scores(self, split: Split) -> np.ndarray:
        return self.scores_from(split.x, split.seq_mask)

    def scores_from(self, x: np.ndarray, seq_mask: np.ndarray) -> np.ndarray:
        out = np.full((x.shape[0], self.n_t), np.nan)
        for key, result in self.results.items():
            probs, _ = gru.predict(result.params, x, seq_mask, result.config)
            if key is None:
                out[:, :] = probs
            else:
                out[:, key] = probs[:, 0]
        return out

    def attention_result(self) -> gru.TrainResult:
        if None not in self.results or not self.results[None].config.uses_attention:
            raise ConfigError("attention extraction needs the mt_att_gru variant")
        return self.results[None]


class OracleSpec:
    """Scores every horizon with the generator's true risks."""

    def __init__(self, truth, name: str = "oracle"):
        self.truth = truth
        self.name = name

    def fit(self, fold: FoldData, seed: int) -> "FittedOracle":
        return FittedOracle(self.truth)


class FittedOracle:
    def __init__(self, truth):
        self.truth = truth

    def scores(self, split: Split) -> np.ndarray:
        rows = self.truth.rows_for(split.patient_ids)
        n_t = min(split.n_t, self.truth.risks.shape[1])
        out = np.full((len(rows), split.n_t), np.nan)
        out[:, :n_t] = self.truth.risks[rows, :n_t]
        return out

    def scores_from(self, x: np.ndarray, seq_mask: np.ndarray) -> np.ndarray:
        raise DataError(
            "the oracle reads generator truth, not feature tensors; "
            "permutation importance is undefined for it"
        )


class ConstantSpec:
    """Same score for everyone; the AUC of ties is exactly one half."""

    def __init__(self, value: float = 0.3, name: str = "constant"):
        self.value = value
        self.name = name

    def fit(self, fold: FoldData, seed: int) -> "FittedConstant":
        return FittedConstant(self.value, fold.train.n_t)


class FittedConstant:
    def __init__(self, value: float, n_t: int):
        self.value = value
        self.n_t = n_t

    def scores(self, split: Split) -> np.ndarray:
        return np.full((len(split.patient_ids), split.n_t), self.value)

    def scores_from(self, x: np.ndarray, seq_mask: np.ndarray) -> np.ndarray:
        return np.full((x.shape[0], self.n_t), self.value)


# ---------------------------------------------------------------------------
# cross-validation


@dataclass
class FoldMetrics:
    model: str
    fold: int
    horizon: int
    auc: float
    sensitivity: float
    precision: float
    f1: float
    threshold: float
    n_test: int
    n_pos: int


@dataclass
class OofRow:
    model: str
    fold: int
    horizon: int
    patient_id: str
    score: float
    label: int


@dataclass
class EvalResult:
    metrics: list[FoldMetrics]
    oof: list[OofRow]
    warnings: list[str]
    fitted: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=dict)

    def rows(self, model: str, horizon: int) -> list[FoldMetrics]:
        return [m for m in self.metrics if m.model == model and m.horizon == horizon]

    def mean_auc(self, model: str, horizon: int) -> float:
        rows = self.rows(model, horizon)
        if not rows:
            raise DataError(f"no defined folds for model {model!r} horizon {horizon}")
        return float(np.mean([m.auc for m in rows]))

    def summary_rows(self) -> list[dict]:
        keys = sorted({(m.model, m.horizon) for m in self.metrics})
        out = []
        for model, horizon in keys:
            rows = self.rows(model, horizon)
            out.append({
                "model": model,
                "horizon": horizon,
                "n_folds": len(rows),
                "auc_mean": float(np.mean([m.auc for m in rows])),
                "auc_sd": float(np.std([m.auc for m in rows])),
                "sensitivity_mean": float(np.mean([m.sensitivity for m in rows])),
                "sensitivity_sd": float(np.std([m.sensitivity for m in rows])),
                "precision_mean": float(np.mean([m.precision for m in rows])),
                "precision_sd": float(np.std([m.precision for m in rows])),
                "f1_mean": float(np.mean([m.f1 for m in rows])),
                "f1_sd": float(np.std([m.f1 for m in rows])),
            })
        return out


def _masked_column(split: Split, scores: np.ndarray, horizon: int):
    keep = (split.label_mask[:, horizon] > 0) & np.isfinite(scores[:, horizon])
    return keep, scores[keep, horizon], split.y[keep, horizon]


def _eval_cell(spec, fold: FoldData, seed: int):
    """Fit one spec on one fold and score its held-out splits.

    Module-level (not a closure) so a process pool can ship it to
    workers; the return value is everything cross_validate needs to
    assemble its aggregates in a deterministic order.
    """
    metrics: list[FoldMetrics] = []
    oof: list[OofRow] = []
    warnings: list[str] = []
    thresholds: dict = {}
    fitted = spec.fit(fold, fold_seed(seed, fold.fold))
    val_scores = fitted.scores(fold.val)
    test_scores = fitted.scores(fold.test)
    for h in range(fold.test.n_t):
        if np.all(np.isnan(test_scores[:, h])):
            continue
        _, v_s, v_y = _masked_column(fold.val, val_scores, h)
        if len(v_s) == 0 or v_y.min() == v_y.max():
            threshold = 0.5
            warnings.append(
                f"{spec.name} fold {fold.fold} horizon {h}: "
                "single-class validation fold, threshold defaults to 0.5"
            )
        else:
            threshold = choose_threshold(v_s, v_y)
        thresholds[(spec.name, fold.fold, h)] = threshold

        keep, t_s, t_y = _masked_column(fold.test, test_scores, h)
        if len(t_s) == 0 or t_y.min() == t_y.max():
            warnings.append(
                f"{spec.name} fold {fold.fold} horizon {h}: "
                "single-class test fold, cell undefined and excluded"
            )
            continue
        auc = roc_auc(t_s, t_y)
        sens, prec, f1 = sens_prec(t_s, t_y, threshold)
        metrics.append(FoldMetrics(
            model=spec.name, fold=fold.fold, horizon=h, auc=auc,
            sensitivity=sens, precision=prec, f1=f1,
            threshold=threshold, n_test=int(len(t_s)), n_pos=int(t_y.sum()),
        ))
        ids = np.array(fold.test.patient_ids)[keep]
        for pid, s, y in zip(ids, t_s, t_y):
            oof.append(OofRow(spec.name, fold.fold, h, str(pid), float(s), int(y)))
    return fitted, metrics, oof, warnings, thresholds


def _eval_cell_args(args):
    return _eval_cell(*args)


def cross_validate(fold_data: list[FoldData], specs, seed: int = 0, jobs: int = 1) -> EvalResult:
    """Fit every spec on every fold and score the held-out data.

    A (fold, horizon) cell whose test labels are single-class is
    undefined: it is skipped and reported in warnings instead of
    contributing fabricated numbers to the aggregates.

    jobs > 1 fans the (spec, fold) fits over worker processes. Results
    are assembled in the sequential order either way, so the output is
    identical to a single-process run.
    """
    if jobs < 1:
        raise ConfigError("jobs must be at least 1")
    tasks = [(spec, fold, seed) for spec in specs for fold in fold_data]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_eval_cell_args, tasks))
    else:
        cells = [_eval_cell(*task) for task in tasks]

    metrics: list[FoldMetrics] = []
    oof: list[OofRow] = []
    warnings: list[str] = []
    fitted_models: dict = {}
    thresholds: dict = {}
    for (spec, fold, _), (fitted, m, o, w, t) in zip(tasks, cells):
        fitted_models[(spec.name, fold.fold)] = fitted
        metrics.extend(m)
        oof.extend(o)
        warnings.extend(w)
        thresholds.update(t)
    return EvalResult(metrics, oof, warnings, fitted_models, thresholds)


def run_evaluation(
    records,
    cohort: Cohort,
    folds,
    specs,
    seed: int = 0,
    config: FeaturizationConfig = FeaturizationConfig(),
    ranges: PhysiologicalRanges | None = None,
    charlson: CharlsonMap | None = None,
    jobs: int = 1,
) -> tuple[EvalResult, list[FoldData]]:
    fold_data = prepare_folds(records, cohort, folds, config, ranges, charlson)
    return cross_validate(fold_data, specs, seed=seed, jobs=jobs), fold_data


# ---------------------------------------------------------------------------
# permutation feature importance


@dataclass
class ImportanceRecord:
    feature: str
    horizon: int
    mean_delta: float
    sd_delta: float
    t_stat: float
    p_value: float
    n_samples: int

    def __post_init__(self) -> None:
        if not (0.0 <= self.p_value <= 1.0):
            raise NumericError(f"p-value {self.p_value} outside [0, 1]")

    @property
    def significant_05(self) -> bool:
        return self.p_value < 0.05

    @property
    def significant_01(self) -> bool:
        return self.p_value < 0.01


def _t_test_zero(deltas: np.ndarray) -> tuple[float, float]:
    """Two-sided one-sample t-test; a zero-variance sample degenerates to
    p=1 when centered on zero and p=0 otherwise."""
    if np.ptp(deltas) == 0.0:
        if deltas[0] == 0.0:
            return 0.0, 1.0
        return math.copysign(math.inf, deltas[0]), 0.0
    res = stats.ttest_1samp(deltas, 0.0)
    return float(res.statistic), float(res.pvalue)


def permutation_deltas(
    fitted,
    split: Split,
    feature: int,
    horizon: int,
    threshold: float,
    rng: np.random.Generator,
    repeats: int = 5,
) -> np.ndarray:
    """Baseline F1 minus F1 after permuting one feature column across
    patients (all days of the column move together, so each patient's
    temporal shape in the other features is untouched)."""
    keep = split.label_mask[:, horizon] > 0
    x = split.x
    base_scores = fitted.scores_from(x, split.seq_mask)[keep, horizon]
    y = split.y[keep, horizon]
    _, _, base_f1 = sens_prec(base_scores, y, threshold)
    out = np.empty(repeats)
    for r in range(repeats):
        perm = rng.permutation(x.shape[0])
        x_perm = x.copy()
        x_perm[:, :, feature] = x[perm, :, feature]
        scores = fitted.scores_from(x_perm, split.seq_mask)[keep, horizon]
        _, _, f1 = sens_prec(scores, y, threshold)
        out[r] = base_f1 - f1
    return out


def permutation_importance(
    result: EvalResult,
    fold_data: list[FoldData],
    model: str,
    horizon: int,
    features=None,
    repeats: int = 5,
    seed: int = 0,
) -> list[ImportanceRecord]:
    """Permutation ΔF1 across folds x repeats for the given fitted model.

    Only sequence-tensor models can be probed this way; the fitted model
    must expose scores_from(x, seq_mask). Feature columns are permuted
    on each fold's test split at the fold's frozen threshold.
    """
    names = list(fold_data[0].vocab.feature_names)
    if features is None:
        features = names
    records: list[ImportanceRecord] = []
    for feature_name in features:
        if feature_name not in names:
            raise DataError(f"unknown feature {feature_name!r}")
        idx = names.index(feature_name)
        deltas = []
        for fold in fold_data:
            fitted = result.fitted.get((model, fold.fold))
            if fitted is None:
                raise DataError(f"no fitted model {model!r} for fold {fold.fold}")
            threshold = result.thresholds.get((model, fold.fold, horizon))
            if threshold is None:
                continue
            rng = seeded_rng(seed, fold.fold, idx)
            deltas.append(permutation_deltas(
                fitted, fold.test, idx, horizon, threshold, rng, repeats,
            ))
        if not deltas:
            raise DataError(f"model {model!r} has no defined cells at horizon {horizon}")
        flat = np.concatenate(deltas)
        t_stat, p_value = _t_test_zero(flat)
        records.append(ImportanceRecord(
            feature=feature_name, horizon=horizon,
            mean_delta=float(flat.mean()), sd_delta=float(flat.std(ddof=1)),
            t_stat=t_stat, p_value=p_value, n_samples=int(flat.size),
        ))
    return records


# ---------------------------------------------------------------------------
# attention extraction


def extract_attention(params, config: gru.ModelConfig, sequence: PatientSequence):
    """Per-day attention weights for one patient, aligned to the real
    observation days that survive padding/truncation."""
    if not config.uses_attention:
        raise ConfigError("attention extraction needs the mt_att_gru variant")
    _, alpha = gru.predict_sequence(params, sequence, config)
    days = list(sequence.days[-len(alpha):])
    return list(zip(days, (float(a) for a in alpha)))


def attention_rows(result: EvalResult, fold_data: list[FoldData], model: str):
    """(patient_id, day, weight) rows over every test patient."""
    rows = []
    for fold in fold_data:
        fitted = result.fitted.get((model, fold.fold))
        if fitted is None:
            raise DataError(f"no fitted model {model!r} for fold {fold.fold}")
        train_result = fitted.attention_result()
        for pid, seq in zip(fold.test.patient_ids, fold.test.sequences):
            for day, weight in extract_attention(train_result.params, train_result.config, seq):
                rows.append((pid, int(day), float(weight)))
    return rows


# ---------------------------------------------------------------------------
# artifact writers


def write_metrics_json(path, result: EvalResult, horizons: HorizonSet = DEFAULT_HORIZONS) -> None:
    doc = {
        "schema_version": 1,
        "horizon_names": list(horizons.names()),
        "metrics": [dataclasses.asdict(m) for m in result.metrics],
        "summary": result.summary_rows(),
        "warnings": list(result.warnings),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_metrics_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("schema_version") != 1:
        raise ConfigError(f"metrics file {path}: unsupported schema_version")
    return doc


def write_summary_csv(path, result: EvalResult, horizons: HorizonSet = DEFAULT_HORIZONS) -> None:
    names = horizons.names()
    rows = result.summary_rows()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "model", "horizon", "horizon_name", "n_folds",
            "auc_mean", "auc_sd", "sensitivity_mean", "sensitivity_sd",
            "precision_mean", "precision_sd", "f1_mean", "f1_sd",
        ])
        for r in rows:
            writer.writerow([
                r["model"], r["horizon"], names[r["horizon"]], r["n_folds"],
                f"{r['auc_mean']:.6f}", f"{r['auc_sd']:.6f}",
                f"{r['sensitivity_mean']:.6f}", f"{r['sensitivity_sd']:.6f}",
                f"{r['precision_mean']:.6f}", f"{r['precision_sd']:.6f}",
                f"{r['f1_mean']:.6f}", f"{r['f1_sd']:.6f}",
            ])


def write_predictions_csv(path, result: EvalResult) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "fold", "horizon", "patient_id", "score", "label"])
        for row in result.oof:
            writer.writerow([
                row.model, row.fold, row.horizon, row.patient_id,
                repr(row.score), row.label,
            ])


def write_roc_csv(path, result: EvalResult) -> None:
    """Pooled out-of-fold ROC points per model and horizon."""
    keys = sorted({(r.model, r.horizon) for r in result.oof})
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "horizon", "threshold", "fpr", "tpr"])
        for model, horizon in keys:
            rows = [r for r in result.oof if r.model == model and r.horizon == horizon]
            scores = np.array([r.score for r in rows])
            labels = np.array([r.label for r in rows])
            if labels.min() == labels.max():
                continue
            fpr, tpr, thresholds = roc_curve(scores, labels)
            for t, f, s in zip(thresholds, fpr, tpr):
                writer.writerow([model, horizon, repr(float(t)), repr(float(f)), repr(float(s))])


def write_importance_csv(path, records: list[ImportanceRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "feature", "horizon", "mean_delta_f1", "sd_delta_f1",
            "t_stat", "p_value", "n_samples", "significant_05", "significant_01",
        ])
        for r in records:
            writer.writerow([
                r.feature, r.horizon, repr(r.mean_delta), repr(r.sd_delta),
                repr(r.t_stat), repr(r.p_value), r.n_samples,
                int(r.significant_05), int(r.significant_01),
            ])


def write_attention_csv(path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["patient_id", "day", "weight"])
        for pid, day, weight in rows:
            writer.writerow([pid, day, repr(weight)])


def scarce_train_labels(split: Split, horizon: int, max_positives: int, rng) -> Split:
    """Mask out training-side positives at one horizon beyond a cap,
    simulating label scarcity for that task without touching the test
    data. Returns a new Split; the input is unchanged."""
    if max_positives < 0:
        raise ConfigError("max_positives must be non-negative")
    pos = np.flatnonzero((split.y[:, horizon] > 0) & (split.label_mask[:, horizon] > 0))
    if len(pos) <= max_positives:
        return split
    drop = rng.permutation(pos)[: len(pos) - max_positives]
    label_mask = split.label_mask.copy()
    label_mask[drop, horizon] = 0.0
    return dataclasses.replace(split, label_mask=label_mask)

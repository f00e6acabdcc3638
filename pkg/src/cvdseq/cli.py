"""Command-line pipeline over the library.

Stages: generate -> cohort -> featurize/tune/train/evaluate ->
importance/attention -> report. Every stage reads its default inputs from
the shared output directory (--out, else $CVDSEQ_OUT, else ./artifacts),
so the stages chain without repeating paths.

Each stage writes a <stage>_manifest.json recording sha256 content hashes
of the inputs it read and the files it wrote. Reruns from identical
inputs produce byte-identical artifacts; volatile values such as
wall-clock timings never enter hashed files.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import re
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import gru
from .cohort import (
    build_cohort,
    cohort_from_json_obj,
    cohort_to_json_obj,
    read_folds_csv,
    split_folds,
    write_folds_csv,
)
from .errors import ConfigError, DataError, NumericError, TrainingDivergedError
from .evaluate import (
    ConstantSpec,
    FeaturizationConfig,
    GruSpec,
    LogRegSpec,
    OracleSpec,
    QriskSpec,
    attention_rows,
    fold_seed,
    permutation_importance,
    prepare_folds,
    run_evaluation,
    write_attention_csv,
    write_importance_csv,
    write_metrics_json,
    write_predictions_csv,
    write_roc_csv,
    write_summary_csv,
)
from .features import (
    CharlsonMap,
    PhysiologicalRanges,
    build_vocabulary,
    encode_record,
    fit_scaler_imputer,
    pad_sequence,
    read_json_doc,
    scale_impute,
    write_json_doc,
)
from .metrics import roc_auc
from .records import EVENT_DEFINITIONS, group_events, read_events_jsonl, records_to_events, write_events_jsonl
from .simulate import (
    GeneratorConfig,
    config_from_json_obj,
    generate,
    read_config_json,
    read_truth_json,
    write_config_json,
    write_truth_json,
)
from .tuning import (
    default_gru_space,
    default_lr_space,
    load_history_jsonl,
    tune,
)

ENV_OUT = "CVDSEQ_OUT"

_GRU_NAMES = {
    "gru": "gru",
    "mt-gru": "mt_gru",
    "mt_gru": "mt_gru",
    "mt-att-gru": "mt_att_gru",
    "mt_att_gru": "mt_att_gru",
}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad arguments; the pipeline
    reserves 2 for data errors, so bad arguments are rerouted through
    the usage path instead."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


# ---------------------------------------------------------------------------
# shared plumbing


def _resolve_out(args) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    env = os.environ.get(ENV_OUT)
    return Path(env) if env else Path("artifacts")


def _ensure_out(args) -> Path:
    out = _resolve_out(args)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise DataError(f"missing {what}: {path}")
    return path


def _input_path(args, flag_value, default_name: str, what: str) -> Path:
    if flag_value:
        return _require(Path(flag_value), what)
    return _require(_resolve_out(args) / default_name, what)


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(out: Path, stage: str, params: dict, inputs, outputs) -> Path:
    doc = {
        "schema_version": 1,
        "stage": stage,
        "params": params,
        "inputs": {str(p): _sha256_file(Path(p)) for p in inputs},
        "outputs": {Path(p).name: _sha256_file(Path(p)) for p in outputs},
    }
    path = out / f"{stage}_manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _load_records(path: Path):
    records = group_events(read_events_jsonl(path))
    if not records:
        raise DataError(f"no events in {path}")
    return records


def _load_cohort(path: Path):
    return cohort_from_json_obj(read_json_doc(path))


def _canonical_model(name: str) -> str:
    key = name.strip().lower()
    if key in _GRU_NAMES:
        return _GRU_NAMES[key]
    if key in ("qrisk", "constant", "oracle"):
        return key
    if re.fullmatch(r"lr[1-9]\d*", key):
        return key
    raise ConfigError(f"unknown model {name!r}")


def _make_spec(canon: str, args, truth=None):
    if canon == "qrisk":
        return QriskSpec()
    if canon == "constant":
        return ConstantSpec()
    if canon == "oracle":
        if truth is None:
            raise ConfigError("the oracle model needs --truth pointing at generator truth")
        return OracleSpec(truth)
    if canon.startswith("lr"):
        return LogRegSpec(window=int(canon[2:]), lam=args.lam)
    config = gru.ModelConfig(
        n_hidden=args.hidden,
        n_days_pad=args.pad,
        variant=canon,
        learning_rate=args.learning_rate,
        epochs=args.epochs,
        batch_size=args.batch_size,
        dropout=args.dropout,
        target_horizon=0 if canon == "gru" else None,
    )
    return GruSpec(config)


def _feat_config(args) -> FeaturizationConfig:
    return FeaturizationConfig(
        n_days_pad=args.pad,
        top_k=args.top_k,
        min_prevalence=args.min_prevalence,
    )


def _eval_inputs(args):
    events_path = _input_path(args, args.events, "events.jsonl", "events file")
    cohort_path = _input_path(args, args.cohort, "cohort.json", "cohort file")
    folds_path = _input_path(args, args.folds, "folds.csv", "folds file")
    records = _load_records(events_path)
    cohort = _load_cohort(cohort_path)
    folds = read_folds_csv(folds_path)
    return records, cohort, folds, [events_path, cohort_path, folds_path]


def _model_params(args, models) -> dict:
    return {
        "models": models,
        "seed": args.seed,
        "pad": args.pad,
        "top_k": args.top_k,
        "min_prevalence": args.min_prevalence,
        "hidden": args.hidden,
        "learning_rate": args.learning_rate,
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "dropout": args.dropout,
        "lam": args.lam,
    }


# ---------------------------------------------------------------------------
# stages


def cmd_generate(args) -> None:
    out = _ensure_out(args)
    inputs: list[Path] = []
    if args.config == "demo":
        doc = json.loads(
            resources.files("cvdseq.data").joinpath("demo_config.json").read_text("utf-8")
        )
        config = config_from_json_obj(doc)
    elif args.config:
        path = _require(Path(args.config), "generator config")
        config = read_config_json(path)
        inputs.append(path)
    else:
        config = GeneratorConfig()
    if args.n_patients is not None:
        config = replace(config, n_patients=args.n_patients)
    if args.seed is not None:
        config = replace(config, seed=args.seed)

    records, truth = generate(config)
    events_path = out / "events.jsonl"
    truth_path = out / "truth.json"
    config_path = out / "generator_config.json"
    write_events_jsonl(events_path, records_to_events(records))
    write_truth_json(truth_path, truth)
    write_config_json(config_path, config)
    _write_manifest(
        out, "generate",
        {"config": args.config or "defaults", "n_patients": config.n_patients,
         "seed": config.seed},
        inputs, [events_path, truth_path, config_path],
    )
    n_events = sum(len(r.events) for r in records)
    print(f"generate: {len(records)} patients, {n_events} events -> {events_path}")


def cmd_cohort(args) -> None:
    out = _ensure_out(args)
    events_path = _input_path(args, args.events, "events.jsonl", "events file")
    records = _load_records(events_path)
    event_def = EVENT_DEFINITIONS[args.disease]
    cohort, inclusion = build_cohort(records, event_def)
    folds = split_folds(cohort, k=args.folds, seed=args.fold_seed)

    cohort_path = out / "cohort.json"
    folds_path = out / "folds.csv"
    write_json_doc(cohort_path, cohort_to_json_obj(cohort))
    write_folds_csv(folds_path, folds)
    _write_manifest(
        out, "cohort",
        {"disease": args.disease, "folds": args.folds, "fold_seed": args.fold_seed},
        [events_path], [cohort_path, folds_path],
    )
    pairs = len(cohort.patients) // 2
    print(
        f"cohort: {len(inclusion.cases)} cases, {len(inclusion.control_pool)} eligible"
        f" controls, {pairs} matched pairs, {args.folds} folds -> {cohort_path}"
    )


def cmd_featurize(args) -> None:
    out = _ensure_out(args)
    events_path = _input_path(args, args.events, "events.jsonl", "events file")
    cohort_path = _input_path(args, args.cohort, "cohort.json", "cohort file")
    records = _load_records(events_path)
    cohort = _load_cohort(cohort_path)

    # Whole-cohort featurization for inspection and downstream training
    # stages. The evaluate stage does NOT read this: it refits the
    # vocabulary and scaler inside each training fold.
    by_id = {r.patient_id: r for r in records}
    missing = [p.patient_id for p in cohort.patients if p.patient_id not in by_id]
    if missing:
        raise DataError(f"cohort patient {missing[0]!r} has no record")
    truncated = {p.patient_id: by_id[p.patient_id].truncated(p.index_day) for p in cohort.patients}
    order = [p.patient_id for p in cohort.patients]
    ranges = PhysiologicalRanges.default()
    charlson = CharlsonMap.default()
    vocab = build_vocabulary(
        [truncated[pid] for pid in order],
        top_k=args.top_k, min_prevalence=args.min_prevalence, charlson=charlson,
    )
    encoded = [encode_record(truncated[pid], vocab, ranges, charlson=charlson) for pid in order]
    scaler = fit_scaler_imputer(encoded, vocab.feature_names)
    padded = [pad_sequence(scale_impute(s, scaler), args.pad) for s in encoded]
    x = np.stack([p.matrix for p in padded])
    mask = np.stack([p.mask for p in padded])

    features_path = out / "features.json"
    x_path = out / "sequences_x.npy"
    mask_path = out / "sequences_mask.npy"
    write_json_doc(features_path, {
        "schema_version": 1,
        "n_days_pad": args.pad,
        "patient_ids": order,
        "feature_names": list(vocab.feature_names),
        "vocabulary": vocab.to_json_obj(),
        "scaler": scaler.to_json_obj(),
    })
    np.save(x_path, x)
    np.save(mask_path, mask)
    _write_manifest(
        out, "featurize",
        {"pad": args.pad, "top_k": args.top_k, "min_prevalence": args.min_prevalence},
        [events_path, cohort_path], [features_path, x_path, mask_path],
    )
    print(
        f"featurize: {x.shape[0]} patients x {x.shape[1]} days x {x.shape[2]}"
        f" features -> {features_path}"
    )


def cmd_tune(args) -> None:
    out = _ensure_out(args)
    records, cohort, folds, inputs = _eval_inputs(args)
    canon = _canonical_model(args.model)
    if canon in ("qrisk", "constant", "oracle"):
        raise ConfigError(f"model {args.model!r} has nothing to tune")
    n_t = len(cohort.patients[0].labels)
    horizon = args.horizon if args.horizon is not None else n_t - 1
    if not 0 <= horizon < n_t:
        raise ConfigError(f"horizon {horizon} outside 0..{n_t - 1}")

    if canon.startswith("lr"):
        window = int(canon[2:])
        space = default_lr_space()
        fold_data = prepare_folds(records, cohort, folds, _feat_config(args))

        def objective(config: dict) -> float:
            aucs = []
            for fold in fold_data:
                fitted = LogRegSpec(window=window, lam=config["lam"]).fit(
                    fold, fold_seed(args.seed, fold.fold))
                aucs.append(roc_auc(
                    fitted.scores(fold.val)[:, horizon], fold.val.y[:, horizon]))
            return float(np.mean(aucs))
    else:
        space = default_gru_space()

        def objective(config: dict) -> float:
            feat = FeaturizationConfig(
                n_days_pad=config["n_days_pad"], top_k=args.top_k,
                min_prevalence=args.min_prevalence)
            fold_data = prepare_folds(records, cohort, folds, feat)
            model_config = gru.ModelConfig(
                n_hidden=config["n_hidden"],
                n_days_pad=config["n_days_pad"],
                variant=canon,
                learning_rate=config["learning_rate"],
                epochs=args.epochs,
                batch_size=config["batch_size"],
                dropout=args.dropout,
                target_horizon=horizon if canon == "gru" else None,
            )
            spec = GruSpec(model_config, horizons=[horizon] if canon == "gru" else None)
            aucs = []
            for fold in fold_data:
                fitted = spec.fit(fold, fold_seed(args.seed, fold.fold))
                aucs.append(roc_auc(
                    fitted.scores(fold.val)[:, horizon], fold.val.y[:, horizon]))
            return float(np.mean(aucs))

    trials_path = out / "trials.jsonl"
    history = load_history_jsonl(trials_path) if trials_path.exists() else None
    best, history = tune(
        space, args.budget, objective, seed=args.seed,
        history_path=trials_path, history=history,
    )
    best_path = out / "best_config.json"
    write_json_doc(best_path, {
        "schema_version": 1,
        "model": canon.replace("_", "-"),
        "objective": "mean validation AUC",
        "horizon": horizon,
        "trials": len(history),
        "best_value": history.best().value,
        "best_config": best,
    })
    _write_manifest(
        out, "tune",
        {"model": canon.replace("_", "-"), "budget": args.budget, "seed": args.seed,
         "horizon": horizon},
        inputs, [best_path, trials_path],
    )
    print(f"tune: {len(history)} trials, best {history.best().value:.4f} with {best} -> {best_path}")


def cmd_train(args) -> None:
    out = _ensure_out(args)
    records, cohort, folds, inputs = _eval_inputs(args)
    canon = _canonical_model(args.model)
    if canon in ("constant", "oracle"):
        raise ConfigError(f"model {args.model!r} is not trainable")
    fold_data = prepare_folds(records, cohort, folds, _feat_config(args))
    if not 0 <= args.fold < len(fold_data):
        raise ConfigError(f"fold {args.fold} outside 0..{len(fold_data) - 1}")
    fold = fold_data[args.fold]
    spec = _make_spec(canon, args)
    fitted = spec.fit(fold, fold_seed(args.seed, fold.fold))

    model_path = out / "model.json"
    outputs = [model_path]
    if canon in _GRU_NAMES.values():
        tasks = {}
        losses_path = out / "losses.csv"
        with open(losses_path, "w", encoding="utf-8", newline="") as fh:
            fh.write("task,epoch,train_loss,val_loss\n")
            for key, result in sorted(
                fitted.results.items(), key=lambda kv: (kv[0] is None, kv[0])
            ):
                task = "all" if key is None else str(key)
                tasks[task] = gru.train_result_to_json_obj(result)
                for row in result.log:
                    fh.write(f"{task},{row.epoch},{row.train_loss:.10g},{row.val_loss:.10g}\n")
        outputs.append(losses_path)
        write_json_doc(model_path, {
            "schema_version": 1, "model": spec.name, "fold": args.fold, "tasks": tasks,
        })
    elif canon == "qrisk":
        write_json_doc(model_path, {
            "schema_version": 1, "model": "qrisk", "fold": args.fold,
            "config": fitted.spec.config.to_json_obj(),
        })
    else:
        horizons_doc = []
        for model in fitted.models:
            horizons_doc.append({
                "weights": model.weights.tolist(),
                "intercept": model.intercept,
                "meta": model.meta(),
            })
        write_json_doc(model_path, {
            "schema_version": 1, "model": spec.name, "fold": args.fold,
            "horizons": horizons_doc,
        })

    val_auc = []
    scores = fitted.scores(fold.val)
    for h in range(fold.val.n_t):
        col = scores[:, h]
        if np.all(np.isnan(col)):
            continue
        val_auc.append(f"h{h}={roc_auc(col, fold.val.y[:, h]):.4f}")
    _write_manifest(
        out, "train",
        {**_model_params(args, [spec.name]), "fold": args.fold},
        inputs, outputs,
    )
    print(f"train: {spec.name} fold {args.fold} val AUC {' '.join(val_auc)} -> {model_path}")


def cmd_evaluate(args) -> None:
    out = _ensure_out(args)
    records, cohort, folds, inputs = _eval_inputs(args)
    names = [m for m in (s.strip() for s in args.models.split(",")) if m]
    if not names:
        raise ConfigError("no models requested")
    canons = [_canonical_model(n) for n in names]
    truth = None
    if "oracle" in canons or args.truth:
        truth_path = _input_path(args, args.truth, "truth.json", "truth file")
        truth = read_truth_json(truth_path)
        inputs.append(truth_path)
    specs = [_make_spec(c, args, truth=truth) for c in canons]
    seen = set()
    for spec in specs:
        if spec.name in seen:
            raise ConfigError(f"model {spec.name!r} requested twice")
        seen.add(spec.name)

    result, _ = run_evaluation(
        records, cohort, folds, specs,
        seed=args.seed, config=_feat_config(args), jobs=args.jobs,
    )
    metrics_path = out / "metrics.json"
    summary_path = out / "summary.csv"
    predictions_path = out / "predictions.csv"
    roc_path = out / "roc.csv"
    write_metrics_json(metrics_path, result)
    write_summary_csv(summary_path, result)
    write_predictions_csv(predictions_path, result)
    write_roc_csv(roc_path, result)
    _write_manifest(
        out, "evaluate",
        {**_model_params(args, [s.name for s in specs]), "jobs": args.jobs},
        inputs, [metrics_path, summary_path, predictions_path, roc_path],
    )
    last = len(cohort.patients[0].labels) - 1
    for spec in specs:
        rows = result.rows(spec.name, last)
        if rows:
            mean = float(np.mean([m.auc for m in rows]))
            print(f"evaluate: {spec.name} longest-horizon AUC {mean:.4f} over {len(rows)} folds")
    if result.warnings:
        print(f"evaluate: {len(result.warnings)} undefined cells (see metrics.json)")
    print(f"evaluate: artifacts -> {metrics_path}")


def cmd_importance(args) -> None:
    out = _ensure_out(args)
    records, cohort, folds, inputs = _eval_inputs(args)
    canon = _canonical_model(args.model)
    spec = _make_spec(canon, args)
    n_t = len(cohort.patients[0].labels)
    horizon = args.horizon if args.horizon is not None else n_t - 1
    result, fold_data = run_evaluation(
        records, cohort, folds, [spec],
        seed=args.seed, config=_feat_config(args), jobs=args.jobs,
    )
    features = None
    if args.features:
        features = [f for f in (s.strip() for s in args.features.split(",")) if f]
    records_out = permutation_importance(
        result, fold_data, spec.name, horizon,
        features=features, repeats=args.repeats, seed=args.seed,
    )
    importance_path = out / "importance.csv"
    write_importance_csv(importance_path, records_out)
    _write_manifest(
        out, "importance",
        {**_model_params(args, [spec.name]), "horizon": horizon,
         "repeats": args.repeats, "features": features or "all"},
        inputs, [importance_path],
    )
    top = sorted(records_out, key=lambda r: -abs(r.mean_delta))[:5]
    for r in top:
        flag = "*" if r.significant_05 else " "
        print(f"importance: {r.feature:<40s} dF1={r.mean_delta:+.4f} p={r.p_value:.4f}{flag}")
    print(f"importance: {len(records_out)} features -> {importance_path}")


def cmd_attention(args) -> None:
    out = _ensure_out(args)
    records, cohort, folds, inputs = _eval_inputs(args)
    spec = _make_spec("mt_att_gru", args)
    result, fold_data = run_evaluation(
        records, cohort, folds, [spec],
        seed=args.seed, config=_feat_config(args), jobs=args.jobs,
    )
    rows = attention_rows(result, fold_data, spec.name)
    attention_path = out / "attention.csv"
    write_attention_csv(attention_path, rows)
    _write_manifest(
        out, "attention",
        _model_params(args, [spec.name]),
        inputs, [attention_path],
    )
    print(f"attention: {len(rows)} weights over {len(fold_data)} folds -> {attention_path}")


def cmd_report(args) -> None:
    from .report import render_report

    out = _ensure_out(args)
    artifacts = Path(args.artifacts) if args.artifacts else _resolve_out(args)
    metrics_path = artifacts / "metrics.json"
    if not metrics_path.exists():
        raise DataError("missing metrics artifact")
    report_dir = out / "report"
    inputs, outputs = render_report(artifacts, report_dir)
    _write_manifest(
        out, "report",
        {"artifacts": str(artifacts)},
        inputs, outputs,
    )
    print(f"report: {len(outputs)} files -> {report_dir}")


# ---------------------------------------------------------------------------
# parser


def _add_out_arg(p) -> None:
    p.add_argument("--out", help="output directory (default $CVDSEQ_OUT or ./artifacts)")


def _add_eval_inputs(p) -> None:
    p.add_argument("--events", help="events JSONL (default <out>/events.jsonl)")
    p.add_argument("--cohort", help="cohort JSON (default <out>/cohort.json)")
    p.add_argument("--folds", help="folds CSV (default <out>/folds.csv)")


def _add_model_args(p) -> None:
    p.add_argument("--seed", type=int, default=0, help="evaluation seed")
    p.add_argument("--pad", type=int, default=30, help="days kept per sequence tensor")
    p.add_argument("--top-k", type=int, default=300, help="vocabulary size cap")
    p.add_argument("--min-prevalence", type=float, default=0.01, help="vocabulary prevalence floor")
    p.add_argument("--hidden", type=int, default=32, help="recurrent state size")
    p.add_argument("--learning-rate", type=float, default=2e-3, help="Adam step size")
    p.add_argument("--epochs", type=int, default=60, help="training epoch cap")
    p.add_argument("--batch-size", type=int, default=32, help="minibatch size")
    p.add_argument("--dropout", type=float, default=0.0, help="input dropout rate")
    p.add_argument("--lam", type=float, default=2e-3, help="L1 penalty for the linear models")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for fold fits")


def build_parser() -> _Parser:
    parser = _Parser(
        prog="cvdseq",
        description="Cardiovascular event prediction pipeline on longitudinal records",
    )
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("generate", help="sample a synthetic cohort")
    p.add_argument("--config", help="generator config JSON, or the literal 'demo'")
    p.add_argument("--n-patients", type=int, help="override patient count")
    p.add_argument("--seed", type=int, help="override generator seed")
    _add_out_arg(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("cohort", help="inclusion, labeling, matching, folds")
    p.add_argument("--events", help="events JSONL (default <out>/events.jsonl)")
    p.add_argument("--disease", choices=sorted(EVENT_DEFINITIONS), default="stroke")
    p.add_argument("--folds", type=int, default=5, help="cross-validation folds")
    p.add_argument("--fold-seed", type=int, default=0, help="fold assignment seed")
    _add_out_arg(p)
    p.set_defaults(func=cmd_cohort)

    p = sub.add_parser("featurize", help="whole-cohort feature tensors for inspection")
    p.add_argument("--events", help="events JSONL (default <out>/events.jsonl)")
    p.add_argument("--cohort", help="cohort JSON (default <out>/cohort.json)")
    p.add_argument("--pad", type=int, default=30)
    p.add_argument("--top-k", type=int, default=300)
    p.add_argument("--min-prevalence", type=float, default=0.01)
    _add_out_arg(p)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("tune", help="hyperparameter search for one model family")
    _add_eval_inputs(p)
    p.add_argument("--model", required=True, help="gru, mt-gru, mt-att-gru, or lrN")
    p.add_argument("--budget", type=int, default=20, help="number of trials")
    p.add_argument("--horizon", type=int, help="objective horizon (default longest)")
    _add_model_args(p)
    _add_out_arg(p)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("train", help="fit one model on one fold and persist it")
    _add_eval_inputs(p)
    p.add_argument("--model", required=True, help="qrisk, lrN, gru, mt-gru, or mt-att-gru")
    p.add_argument("--fold", type=int, default=0, help="fold index to train")
    _add_model_args(p)
    _add_out_arg(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="cross-validated comparison of models")
    _add_eval_inputs(p)
    p.add_argument(
        "--models",
        default="qrisk,lr1,lr50,lr100,gru,mt-gru,mt-att-gru",
        help="comma-separated model list",
    )
    p.add_argument("--truth", help="generator truth JSON (enables the oracle model)")
    _add_model_args(p)
    _add_out_arg(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("importance", help="permutation feature importance with t-tests")
    _add_eval_inputs(p)
    p.add_argument("--model", default="mt-att-gru", help="tensor-scoring model to probe")
    p.add_argument("--horizon", type=int, help="horizon index (default longest)")
    p.add_argument("--features", help="comma-separated feature names (default all)")
    p.add_argument("--repeats", type=int, default=5, help="permutations per fold")
    _add_model_args(p)
    _add_out_arg(p)
    p.set_defaults(func=cmd_importance)

    p = sub.add_parser("attention", help="attention weights over test sequences")
    _add_eval_inputs(p)
    _add_model_args(p)
    _add_out_arg(p)
    p.set_defaults(func=cmd_attention)

    p = sub.add_parser("report", help="figures and tables from evaluation artifacts")
    p.add_argument("--artifacts", help="directory holding metrics/roc/importance artifacts")
    _add_out_arg(p)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not hasattr(args, "func"):
            parser.print_usage(sys.stderr)
            print("cvdseq: error: a subcommand is required", file=sys.stderr)
            return 1
        args.func(args)
        return 0
    except _UsageError as exc:
        print(f"cvdseq: error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"cvdseq: config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"cvdseq: data error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, TrainingDivergedError) as exc:
        print(f"cvdseq: numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

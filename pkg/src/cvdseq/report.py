"""Render evaluation artifacts into figures and summary tables.

The CSV and JSON artifacts written by the evaluate, importance, and
attention stages stay authoritative; everything here is a view over
them. Nothing is recomputed from predictions. Figures are SVG with a
fixed hash salt and no embedded date, so rerunning the report over the
same artifacts reproduces the files byte for byte.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import DataError
from .evaluate import read_metrics_json

_SVG_SALT = "cvdseq-report"
_MAX_ATTENTION_STRIPS = 12


def _read_csv_rows(path: Path) -> list[dict]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def _save_svg(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _model_colors(models) -> dict:
    return {m: f"C{i % 10}" for i, m in enumerate(models)}


def _model_order(summary: list[dict]) -> list[str]:
    seen: list[str] = []
    for row in summary:
        if row["model"] not in seen:
            seen.append(row["model"])
    return seen


# ---------------------------------------------------------------------------
# tables


def _write_auc_table_csv(path: Path, summary: list[dict], names) -> None:
    """Wide model-by-horizon matrix of mean and sd AUC."""
    by_model: dict[str, dict[int, dict]] = {}
    for row in summary:
        by_model.setdefault(row["model"], {})[row["horizon"]] = row
    header = ["model"]
    for name in names:
        header.extend([f"auc_mean_{name}", f"auc_sd_{name}"])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for model in _model_order(summary):
            cells = [model]
            for h in range(len(names)):
                row = by_model[model].get(h)
                if row is None:
                    cells.extend(["", ""])
                else:
                    cells.extend([f"{row['auc_mean']:.6f}", f"{row['auc_sd']:.6f}"])
            writer.writerow(cells)


def _format_block(summary, names, mean_key, sd_key, title) -> list[str]:
    models = _model_order(summary)
    by_model = {}
    for row in summary:
        by_model.setdefault(row["model"], {})[row["horizon"]] = row
    width = max([len(m) for m in models] + [5])
    lines = [title, ""]
    lines.append("  ".join([f"{'model':<{width}}"] + [f"{n:>15}" for n in names]))
    for model in models:
        cells = [f"{model:<{width}}"]
        for h in range(len(names)):
            row = by_model[model].get(h)
            if row is None:
                cells.append(f"{'n/a':>15}")
            else:
                cells.append(f"{row[mean_key]:.3f} +- {row[sd_key]:.3f}".rjust(15))
        lines.append("  ".join(cells))
    return lines


def _write_report_txt(path: Path, doc: dict) -> None:
    names = doc["horizon_names"]
    summary = doc["summary"]
    folds = sorted({m["fold"] for m in doc["metrics"]})
    lines = [
        "Evaluation report",
        f"folds: {len(folds)}  horizons: {', '.join(names)}",
        "",
    ]
    lines += _format_block(summary, names, "auc_mean", "auc_sd",
                           "Mean AUC over folds (mean +- sd)")
    lines.append("")
    lines += _format_block(summary, names, "f1_mean", "f1_sd",
                           "Mean F1 over folds (mean +- sd)")
    lines.append("")
    if doc["warnings"]:
        lines.append(f"undefined cells: {len(doc['warnings'])}")
        lines.extend(f"  {w}" for w in doc["warnings"])
    else:
        lines.append("undefined cells: none")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# figures


def _fig_auc_by_horizon(path: Path, summary, names, colors) -> None:
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    x = np.arange(len(names))
    for model in _model_order(summary):
        rows = {r["horizon"]: r for r in summary if r["model"] == model}
        hs = sorted(rows)
        ax.errorbar(
            [x[h] for h in hs],
            [rows[h]["auc_mean"] for h in hs],
            yerr=[rows[h]["auc_sd"] for h in hs],
            label=model, color=colors[model], marker="o", capsize=3,
        )
    ax.set_xticks(x)
    ax.set_xticklabels(names)
    ax.set_xlabel("prediction horizon")
    ax.set_ylabel("mean AUC over folds")
    ax.axhline(0.5, color="grey", linewidth=0.8, linestyle=":")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save_svg(fig, path)


def _fig_roc(path: Path, rows, horizon_name, colors) -> None:
    """One ROC panel from pre-computed pooled out-of-fold points."""
    fig, ax = plt.subplots(figsize=(4.8, 4.6))
    for model, pts in rows:
        fpr = [p[0] for p in pts]
        tpr = [p[1] for p in pts]
        ax.plot(fpr, tpr, label=model,
                color=colors.get(model, "C7"), linewidth=1.2)
    ax.plot([0, 1], [0, 1], color="grey", linewidth=0.8, linestyle=":")
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_title(f"pooled out-of-fold ROC, horizon {horizon_name}")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    ax.legend(fontsize=8, loc="lower right")
    fig.tight_layout()
    _save_svg(fig, path)


def _fig_importance(path: Path, rows) -> None:
    """Horizontal bars of mean F1 drop after permutation; filled bars
    mark p < 0.05."""
    rows = sorted(rows, key=lambda r: float(r["mean_delta_f1"]))
    features = [r["feature"] for r in rows]
    deltas = np.array([float(r["mean_delta_f1"]) for r in rows])
    sds = np.array([float(r["sd_delta_f1"]) for r in rows])
    sig = np.array([r["significant_05"] == "1" for r in rows])
    fig, ax = plt.subplots(figsize=(7.0, max(2.4, 0.3 * len(rows) + 1.2)))
    y = np.arange(len(rows))
    for filled, label in ((True, "p < 0.05"), (False, "n.s.")):
        mask = sig == filled
        if not np.any(mask):
            continue
        ax.barh(y[mask], deltas[mask], xerr=sds[mask],
                color="C0" if filled else "none",
                edgecolor="C0", height=0.6, label=label,
                error_kw={"elinewidth": 0.8})
    ax.set_yticks(y)
    ax.set_yticklabels(features, fontsize=7)
    ax.axvline(0.0, color="grey", linewidth=0.8)
    ax.set_xlabel("mean F1 drop when the feature is permuted")
    ax.legend(fontsize=8, loc="lower right")
    fig.tight_layout()
    _save_svg(fig, path)


def _fig_attention(path: Path, rows) -> None:
    """Heat strips of per-day attention for the first few patients."""
    by_patient: dict[str, list[tuple[int, float]]] = {}
    for r in rows:
        by_patient.setdefault(r["patient_id"], []).append(
            (int(r["day"]), float(r["weight"])))
    pids = sorted(by_patient)[:_MAX_ATTENTION_STRIPS]
    width = max(len(by_patient[p]) for p in pids)
    grid = np.full((len(pids), width), np.nan)
    for i, pid in enumerate(pids):
        weights = [w for _, w in sorted(by_patient[pid])]
        grid[i, width - len(weights):] = weights
    fig, ax = plt.subplots(figsize=(7.0, 0.45 * len(pids) + 1.4))
    im = ax.imshow(np.ma.masked_invalid(grid), aspect="auto",
                   cmap="viridis", interpolation="nearest")
    ax.set_yticks(np.arange(len(pids)))
    ax.set_yticklabels(pids, fontsize=7)
    ax.set_xlabel("observation days before the index day (oldest to newest)")
    fig.colorbar(im, ax=ax, label="attention weight")
    fig.tight_layout()
    _save_svg(fig, path)


# ---------------------------------------------------------------------------
# entry point


def render_report(artifacts_dir, report_dir) -> tuple[list[Path], list[Path]]:
    """Render every artifact found in `artifacts_dir` into `report_dir`.

    metrics.json is required; roc.csv, importance.csv, and attention.csv
    are rendered when present. Returns (input paths read, output paths
    written) for manifest hashing.
    """
    artifacts_dir = Path(artifacts_dir)
    report_dir = Path(report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    matplotlib.rcParams["svg.hashsalt"] = _SVG_SALT

    metrics_path = artifacts_dir / "metrics.json"
    if not metrics_path.exists():
        raise DataError("missing metrics artifact")
    doc = read_metrics_json(metrics_path)
    names = doc["horizon_names"]
    summary = doc["summary"]
    if not summary:
        raise DataError("metrics artifact has no summary rows")
    colors = _model_colors(_model_order(summary))

    inputs = [metrics_path]
    outputs = [report_dir / "report.txt", report_dir / "auc_table.csv",
               report_dir / "auc_by_horizon.svg"]
    _write_report_txt(outputs[0], doc)
    _write_auc_table_csv(outputs[1], summary, names)
    _fig_auc_by_horizon(outputs[2], summary, names, colors)

    roc_path = artifacts_dir / "roc.csv"
    if roc_path.exists():
        inputs.append(roc_path)
        by_horizon: dict[int, list] = {}
        for row in _read_csv_rows(roc_path):
            h = int(row["horizon"])
            model = row["model"]
            curves = by_horizon.setdefault(h, [])
            if not curves or curves[-1][0] != model:
                curves.append((model, []))
            curves[-1][1].append((float(row["fpr"]), float(row["tpr"])))
        for h, curves in sorted(by_horizon.items()):
            name = names[h] if h < len(names) else f"h{h}"
            out = report_dir / f"roc_{name}.svg"
            _fig_roc(out, curves, name, colors)
            outputs.append(out)

    importance_path = artifacts_dir / "importance.csv"
    if importance_path.exists():
        rows = _read_csv_rows(importance_path)
        if rows:
            inputs.append(importance_path)
            out = report_dir / "importance.svg"
            _fig_importance(out, rows)
            outputs.append(out)

    attention_path = artifacts_dir / "attention.csv"
    if attention_path.exists():
        rows = _read_csv_rows(attention_path)
        if rows:
            inputs.append(attention_path)
            out = report_dir / "attention.svg"
            _fig_attention(out, rows)
            outputs.append(out)

    return inputs, outputs

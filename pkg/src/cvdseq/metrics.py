"""Classification metrics: rank-based AUC, ROC points, F1 thresholding.

AUC is the Mann-Whitney concordance P(score_pos > score_neg) with half
credit for ties, computed from average ranks rather than pairwise loops.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericError


def _check_two_classes(labels: np.ndarray, what: str) -> tuple[int, int]:
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise NumericError(f"undefined {what}: only one class present")
    return n_pos, n_neg


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size)
    s = scores[order]
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and s[j + 1] == s[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC with tie half-credit."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=float)
    n_pos, n_neg = _check_two_classes(labels, "AUC")
    ranks = _average_ranks(scores)
    pos_rank_sum = float(ranks[labels > 0].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def roc_curve(scores, labels) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(fpr, tpr, thresholds) sweeping the rule score >= threshold.

    Thresholds are the distinct scores in descending order, preceded by an
    infinite threshold so the curve starts at (0, 0).
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=float)
    n_pos, n_neg = _check_two_classes(labels, "ROC curve")
    thresholds = np.concatenate([[np.inf], np.unique(scores)[::-1]])
    tpr = np.empty(thresholds.size)
    fpr = np.empty(thresholds.size)
    for i, t in enumerate(thresholds):
        pred = scores >= t
        tpr[i] = float((pred & (labels > 0)).sum()) / n_pos
        fpr[i] = float((pred & (labels <= 0)).sum()) / n_neg
    return fpr, tpr, thresholds


def sens_prec(scores, labels, threshold: float) -> tuple[float, float, float]:
    """(sensitivity, precision, f1) at the rule score >= threshold; 0/0 -> 0."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=float)
    pred = scores >= threshold
    pos = labels > 0
    tp = float((pred & pos).sum())
    fp = float((pred & ~pos).sum())
    fn = float((~pred & pos).sum())
    sensitivity = tp / (tp + fn) if tp + fn > 0 else 0.0
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    f1 = (
        2.0 * precision * sensitivity / (precision + sensitivity)
        if precision + sensitivity > 0
        else 0.0
    )
    return sensitivity, precision, f1


def choose_threshold(scores, labels) -> float:
    """Threshold (one of the distinct scores) maximizing F1; ties go high.

    Every midpoint between consecutive distinct scores classifies exactly
    like the distinct value above it under the >= rule, so scanning the
    distinct values covers all achievable confusion tables.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=float)
    _check_two_classes(labels, "threshold")
    best_t = np.inf
    best_f1 = -1.0
    for t in np.unique(scores)[::-1]:
        _, _, f1 = sens_prec(scores, labels, t)
        if f1 > best_f1:
            best_f1 = f1
            best_t = float(t)
    return best_t

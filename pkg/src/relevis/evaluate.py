"""Classifier evaluation: ROC analysis, threshold selection, confusion
metrics, correlation, and stratified cross-validation folds.

Scores follow the convention that larger means more likely positive;
pass invert=True for markers like volumes where smaller means positive.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import betainc

from .errors import (DataError, DegenerateInputError, DegenerateLabelsError)


def _check_binary(labels):
    labels = np.asarray(labels)
    if labels.size == 0 or not np.all((labels == 0) | (labels == 1)):
        raise DegenerateLabelsError("labels must be a non-empty array of 0 and 1")
    if not (np.any(labels == 0) and np.any(labels == 1)):
        raise DegenerateLabelsError("both classes must be present")
    return labels.astype(int)


@dataclass(frozen=True)
class ROCCurve:
    thresholds: np.ndarray  # descending in score units; first is +inf
    sensitivity: np.ndarray
    specificity: np.ndarray
    auc: float
    invert: bool


def _midranks(values):
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    sorted_vals = values[order]
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def roc_auc(scores, labels, invert=False):
    """Area under the ROC curve via the rank statistic; tied
    positive/negative scores count one half."""
    labels = _check_binary(labels)
    s = np.asarray(scores, dtype=np.float64)
    if s.shape != labels.shape:
        raise DataError(f"scores shape {s.shape} does not match labels {labels.shape}")
    if invert:
        s = -s
    ranks = _midranks(s)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    pos_rank_sum = float(ranks[labels == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def roc_curve(scores, labels, invert=False):
    """Sensitivity/specificity at every distinct threshold.

    Samples scoring at or above a threshold are called positive (at or
    below, when inverted). Thresholds descend in predictiveness order,
    starting with a sentinel where nothing is called positive.
    """
    labels = _check_binary(labels)
    s = np.asarray(scores, dtype=np.float64)
    work = -s if invert else s
    uniq = np.unique(work)  # ascending
    thresholds = [np.inf]
    sens = [0.0]
    spec = [1.0]
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    for t in uniq[::-1]:
        called = work >= t
        tp = int(np.sum(called & (labels == 1)))
        fp = int(np.sum(called & (labels == 0)))
        thresholds.append(t)
        sens.append(tp / n_pos)
        spec.append((n_neg - fp) / n_neg)
    thresholds = np.asarray(thresholds)
    if invert:
        thresholds = -thresholds
    return ROCCurve(thresholds, np.asarray(sens), np.asarray(spec),
                    roc_auc(scores, labels, invert), invert)


def youden_threshold(scores, labels, invert=False):
    """The cut maximizing sensitivity + specificity - 1.

    Candidate cuts are midpoints between adjacent distinct scores; ties
    resolve to the smallest midpoint. With a single distinct score that
    score itself is returned (every cut is equivalent). The returned
    rule is score >= threshold positive, or <= when inverted.
    """
    labels = _check_binary(labels)
    s = np.asarray(scores, dtype=np.float64)
    work = -s if invert else s
    uniq = np.unique(work)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if uniq.size == 1:
        return (float(-uniq[0]) if invert else float(uniq[0])), 0.0
    best = None
    for i in range(uniq.size - 1):
        mid = 0.5 * (uniq[i] + uniq[i + 1])
        called = work >= mid
        tp = int(np.sum(called & (labels == 1)))
        fp = int(np.sum(called & (labels == 0)))
        j = tp / n_pos + (n_neg - fp) / n_neg - 1.0
        key = (-mid) if invert else mid
        if best is None or j > best[0] + 1e-15 or (abs(j - best[0]) <= 1e-15 and key < best[1]):
            best = (j, key)
    return float(best[1]), float(best[0])


@dataclass(frozen=True)
class Metrics:
    tp: int
    fp: int
    tn: int
    fn: int
    sensitivity: float
    specificity: float
    balanced_accuracy: float
    ppv: float
    npv: float
    f1: float


def classification_metrics(labels, predictions):
    """Confusion-matrix metrics; empty denominators report 0.0."""
    labels = _check_binary(labels)
    preds = np.asarray(predictions).astype(int)
    if preds.shape != labels.shape:
        raise DataError("predictions and labels must align")
    tp = int(np.sum((preds == 1) & (labels == 1)))
    fp = int(np.sum((preds == 1) & (labels == 0)))
    tn = int(np.sum((preds == 0) & (labels == 0)))
    fn = int(np.sum((preds == 0) & (labels == 1)))

    def ratio(a, b):
        return a / b if b else 0.0

    sens = ratio(tp, tp + fn)
    spec = ratio(tn, tn + fp)
    ppv = ratio(tp, tp + fp)
    npv = ratio(tn, tn + fn)
    f1 = ratio(2 * ppv * sens, ppv + sens) if (ppv + sens) else 0.0
    return Metrics(tp, fp, tn, fn, sens, spec, 0.5 * (sens + spec), ppv, npv, f1)


@dataclass(frozen=True)
class PearsonResult:
    r: float
    t: float
    p: float
    n: int


def pearson_r(x, y):
    """Pearson correlation with the two-sided t-test p-value computed
    through the regularized incomplete beta function."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError("x and y must be one-dimensional and aligned")
    n = x.size
    if n < 3:
        raise DegenerateInputError(f"need at least 3 pairs, got {n}")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = float(np.sqrt(np.sum(dx * dx)))
    sy = float(np.sqrt(np.sum(dy * dy)))
    if sx == 0.0 or sy == 0.0:
        raise DegenerateInputError("an input has zero variance")
    r = float(np.sum(dx * dy) / (sx * sy))
    r = max(-1.0, min(1.0, r))
    df = n - 2
    if abs(r) == 1.0:
        return PearsonResult(r, float("inf") if r > 0 else float("-inf"), 0.0, n)
    t = r * np.sqrt(df / (1.0 - r * r))
    p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return PearsonResult(r, float(t), p, n)


def stratified_kfold(groups, k, seed=0):
    """Split indices into k folds keeping each group's per-fold counts
    within one of each other; fold totals also stay within one because
    each group's remainder chunks start where the previous group's
    ended."""
    groups = list(groups)
    if k < 2:
        raise DataError(f"k must be at least 2, got {k}")
    by_group = {}
    for i, g in enumerate(groups):
        by_group.setdefault(g, []).append(i)
    smallest = min(len(v) for v in by_group.values())
    if k > smallest:
        raise DataError(f"k={k} exceeds the smallest group count {smallest}")
    rng = np.random.default_rng(seed)
    folds = [[] for _ in range(k)]
    offset = 0
    for g in sorted(by_group, key=str):
        idx = np.array(by_group[g])
        rng.shuffle(idx)
        base = len(idx) // k
        extra = len(idx) % k
        pos = 0
        for j in range(k):
            size = base + (1 if j < extra else 0)
            folds[(j + offset) % k].extend(idx[pos:pos + size].tolist())
            pos += size
        offset = (offset + extra) % k
    return [np.array(sorted(f)) for f in folds]


def volume_baseline(train_values, train_labels, test_values, test_labels):
    """Classify on a scalar volume marker where smaller means positive.

    The threshold is fitted on the training pairs with the Youden rule
    and applied to the test pairs; returns the threshold, test AUC, and
    test confusion metrics.
    """
    train_labels = _check_binary(train_labels)
    test_labels = _check_binary(test_labels)
    threshold, j = youden_threshold(train_values, train_labels, invert=True)
    preds = (np.asarray(test_values, dtype=np.float64) <= threshold).astype(int)
    return {
        "threshold": threshold,
        "youden_j_train": j,
        "auc": roc_auc(test_values, test_labels, invert=True),
        "metrics": classification_metrics(test_labels, preds),
    }


def relevance_volume_correlation(volumes, relevances):
    """Pearson association between a regional volume marker and the
    relevance attributed to the same region, plus the paired table."""
    result = pearson_r(volumes, relevances)
    pairs = [{"volume": float(v), "relevance": float(r)}
             for v, r in zip(volumes, relevances)]
    return {"r": result.r, "t": result.t, "p": result.p, "n": result.n,
            "pairs": pairs}

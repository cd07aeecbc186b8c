"""Scoring: confusion counts, precision/recall/F1, AUC, threshold tuning
and downsampling-aware calibration.

All operations take parallel numpy arrays (scores, labels).  Predictions
files are tab-separated ``pair_id	probability	label`` lines.  The
decision convention everywhere is inclusive: predict positive iff
probability >= threshold, and 0/0 metric ratios resolve to 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import ParseError, UndefinedMetricError


@dataclass(frozen=True)
class Prediction:
    pair_id: str
    probability: float
    label: bool


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass
class EvalReport:
    """Metrics at one threshold; ``auc`` is None when undefined (single class)."""

    counts: ConfusionCounts
    precision: float
    recall: float
    f1: float
    auc: float | None
    threshold: float

    def to_dict(self) -> dict:
        out = asdict(self)
        out["counts"] = asdict(self.counts)
        return out


@dataclass
class CalibrationResult:
    threshold: float
    target_rate: float
    achieved_rate: float
    mode: str
    downsampled_rate: float
    note: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _as_arrays(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be parallel 1-d arrays")
    return s, y


def confusion(scores, labels, threshold: float) -> ConfusionCounts:
    """Counts with the inclusive convention: positive iff score >= threshold."""
    s, y = _as_arrays(scores, labels)
    pos = s >= threshold
    tp = int(np.sum(pos & y))
    fp = int(np.sum(pos & ~y))
    fn = int(np.sum(~pos & y))
    tn = int(np.sum(~pos & ~y))
    return ConfusionCounts(tp, fp, fn, tn)


def prf1(counts: ConfusionCounts) -> tuple[float, float, float]:
    """Standard precision/recall/F1; any 0/0 ratio is 0 by convention."""
    p = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 0.0
    r = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0
    f1 = 2.0 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def auc_roc(scores, labels) -> float:
    """Mann-Whitney statistic: P(random positive outscores random negative),
    ties counted half."""
    s, y = _as_arrays(scores, labels)
    n_pos = int(np.sum(y))
    n_neg = int(len(y) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs at least one positive and one negative")
    ranks = rankdata(s, method="average")
    return float((np.sum(ranks[y]) - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def _threshold_candidates(scores: np.ndarray) -> np.ndarray:
    uniq = np.unique(scores)
    mids = (uniq[:-1] + uniq[1:]) / 2.0
    return np.concatenate([[0.0], mids, [1.0]])


def _f1_at_thresholds(scores: np.ndarray, labels: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    cum_tp = np.cumsum(labels[order])
    total_pos = cum_tp[-1] if len(cum_tp) else 0
    # number of predictions with score >= t
    k = len(scores) - np.searchsorted(sorted_scores[::-1], thresholds, side="left")
    tp = np.where(k > 0, cum_tp[np.maximum(k - 1, 0)], 0)
    fp = k - tp
    fn = total_pos - tp
    with np.errstate(divide="ignore", invalid="ignore"):
        prec = np.where(tp + fp > 0, tp / (tp + fp), 0.0)
        rec = np.where(tp + fn > 0, tp / (tp + fn), 0.0)
        f1 = np.where(prec + rec > 0, 2.0 * prec * rec / (prec + rec), 0.0)
    return f1


def tune_threshold(scores, labels) -> tuple[float, float]:
    """F1-maximizing threshold over {0} + midpoints of distinct scores + {1}.

    Ties break toward the smallest threshold.
    """
    s, y = _as_arrays(scores, labels)
    if len(s) == 0:
        raise ValueError("cannot tune a threshold on empty predictions")
    cands = _threshold_candidates(s)
    f1s = _f1_at_thresholds(s, y, cands)
    best = int(np.argmax(f1s))  # first occurrence = smallest threshold
    return float(cands[best]), float(f1s[best])


def threshold_metrics(scores, labels) -> tuple[float, float, float, float]:
    """Tune the threshold, then report (threshold, precision, recall, f1) at it."""
    thr, _ = tune_threshold(scores, labels)
    p, r, f1 = prf1(confusion(scores, labels, thr))
    return thr, p, r, f1


def _emission_threshold(
    scores: np.ndarray, weights: np.ndarray, target: float
) -> tuple[float, float]:
    """Smallest observed score whose weighted emission fraction is <= target.

    Emissions follow the inclusive >= convention, so equal scores emit
    together.  Returns (threshold, achieved fraction).  When even the top
    score group over-emits, falls back to 1.0 (or just above the top
    score) and reports the honest achieved rate.
    """
    order = np.argsort(-scores, kind="stable")
    s_sorted = scores[order]
    cum_w = np.cumsum(weights[order])
    total = cum_w[-1]
    # last index of each distinct-score group in descending order
    group_end = np.nonzero(np.diff(s_sorted, append=-np.inf))[0]
    group_scores = s_sorted[group_end]
    group_frac = cum_w[group_end] / total
    ok = np.nonzero(group_frac <= target)[0]
    if len(ok) == 0:
        # even the top score group over-emits; fall back to threshold 1.0
        achieved = float(np.sum(weights[scores >= 1.0]) / total)
        return 1.0, achieved
    j = ok[-1]  # most emissions while staying under target
    return float(group_scores[j]), float(group_frac[j])


def calibrate(
    scores,
    labels,
    downsample_rate: float,
    full_pos: int,
    full_neg: int,
    mode: str = "weighted",
) -> CalibrationResult:
    """Pick the decision threshold that emits the full-population base rate.

    The target rate is full_pos/(full_pos+full_neg).  In ``weighted`` mode
    each retained negative counts 1/downsample_rate so the emission
    fraction estimates the rate on the non-downsampled population; in
    ``naive`` mode the threshold is the matching empirical quantile of the
    raw downsampled score distribution.
    """
    if mode not in ("weighted", "naive"):
        raise ValueError(f"unknown calibration mode {mode!r}")
    if not 0.0 < downsample_rate <= 1.0:
        raise ValueError("downsample_rate must be in (0, 1]")
    if full_pos <= 0 or full_neg <= 0:
        raise ValueError("full population counts must be positive")
    s, y = _as_arrays(scores, labels)
    if len(s) == 0:
        raise ValueError("cannot calibrate on empty predictions")
    target = full_pos / (full_pos + full_neg)
    downsampled_rate = float(np.mean(y))
    note = None
    if target >= 1.0:
        return CalibrationResult(0.0, target, 1.0, mode, downsampled_rate,
                                 note="target rate >= 1; emitting everything")
    if mode == "weighted":
        weights = np.where(y, 1.0, 1.0 / downsample_rate)
    else:
        weights = np.ones_like(s)
        approx = downsampled_rate * downsample_rate
        note = (
            f"naive mode: the rate product {approx:.0%} "
            f"(downsampled rate {downsampled_rate:.0%} x rate {downsample_rate:g}) "
            f"only approximates the exact target rate {target:.0%}"
        )
    threshold, achieved = _emission_threshold(s, weights, target)
    return CalibrationResult(threshold, target, achieved, mode, downsampled_rate, note)


def roc_points(scores, labels) -> np.ndarray:
    """(threshold, fpr, tpr) rows sorted by increasing FPR, from (0,0) to (1,1)."""
    s, y = _as_arrays(scores, labels)
    n_pos = int(np.sum(y))
    n_neg = len(y) - n_pos
    order = np.argsort(-s, kind="stable")
    s_sorted, y_sorted = s[order], y[order]
    group_end = np.nonzero(np.diff(s_sorted, append=-np.inf))[0]
    cum_tp = np.cumsum(y_sorted)[group_end]
    cum_fp = group_end + 1 - cum_tp
    tpr = cum_tp / n_pos if n_pos else np.zeros(len(group_end))
    fpr = cum_fp / n_neg if n_neg else np.zeros(len(group_end))
    rows = [(np.inf, 0.0, 0.0)]
    rows += [(float(s_sorted[i]), float(f), float(t)) for i, f, t in zip(group_end, fpr, tpr)]
    return np.array(rows, dtype=np.float64)


def pr_points(scores, labels) -> np.ndarray:
    """(threshold, precision, recall) rows in decreasing-threshold order."""
    s, y = _as_arrays(scores, labels)
    n_pos = int(np.sum(y))
    order = np.argsort(-s, kind="stable")
    s_sorted, y_sorted = s[order], y[order]
    group_end = np.nonzero(np.diff(s_sorted, append=-np.inf))[0]
    cum_tp = np.cumsum(y_sorted)[group_end]
    k = group_end + 1
    prec = np.where(k > 0, cum_tp / k, 0.0)
    rec = cum_tp / n_pos if n_pos else np.zeros(len(group_end))
    rows = [(np.inf, 0.0, 0.0)]
    rows += [(float(s_sorted[i]), float(p), float(r)) for i, p, r in zip(group_end, prec, rec)]
    return np.array(rows, dtype=np.float64)


def emit_curves(scores, labels, out_prefix) -> tuple[str, str]:
    """Write ROC and PR curve CSVs; returns the two paths."""
    roc = roc_points(scores, labels)
    pr = pr_points(scores, labels)
    roc_path = f"{out_prefix}.roc.csv"
    pr_path = f"{out_prefix}.pr.csv"
    with open(roc_path, "w", encoding="utf-8") as fh:
        fh.write("threshold,fpr,tpr\n")
        for t, f, tp in roc:
            fh.write(f"{t!r},{f!r},{tp!r}\n")
    with open(pr_path, "w", encoding="utf-8") as fh:
        fh.write("threshold,precision,recall\n")
        for t, p, r in pr:
            fh.write(f"{t!r},{p!r},{r!r}\n")
    return roc_path, pr_path


def evaluate(scores, labels, threshold: float) -> EvalReport:
    counts = confusion(scores, labels, threshold)
    p, r, f1 = prf1(counts)
    try:
        auc = auc_roc(scores, labels)
    except UndefinedMetricError:
        auc = None
    return EvalReport(counts, p, r, f1, auc, threshold)


def format_report(report: EvalReport) -> str:
    c = report.counts
    lines = [
        f"threshold  {report.threshold:.6g}",
        f"counts     tp={c.tp} fp={c.fp} fn={c.fn} tn={c.tn}",
        f"precision  {report.precision:.4f}",
        f"recall     {report.recall:.4f}",
        f"f1         {report.f1:.4f}",
        f"auc        {'undefined' if report.auc is None else format(report.auc, '.4f')}",
    ]
    return "\n".join(lines)


def write_predictions(path, ids: Sequence[str], scores, labels) -> None:
    s, y = _as_arrays(scores, labels)
    with open(path, "w", encoding="utf-8") as fh:
        for pair_id, prob, label in zip(ids, s, y):
            fh.write(f"{pair_id}\t{float(prob)!r}\t{int(label)}\n")


def read_predictions(path) -> tuple[list[str], np.ndarray, np.ndarray]:
    ids: list[str] = []
    probs: list[float] = []
    labels: list[bool] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3:
                raise ParseError(path, line_no, f"expected 3 tab-separated fields, got {len(parts)}")
            try:
                prob = float(parts[1])
                label = bool(int(parts[2]))
            except ValueError as exc:
                raise ParseError(path, line_no, str(exc)) from exc
            if not np.isfinite(prob) or not 0.0 <= prob <= 1.0:
                raise ParseError(path, line_no, f"probability {prob} outside [0, 1]")
            ids.append(parts[0])
            probs.append(prob)
            labels.append(label)
    return ids, np.asarray(probs, dtype=np.float64), np.asarray(labels, dtype=bool)


def report_to_json(report: EvalReport, extra: dict | None = None) -> str:
    record = report.to_dict()
    if extra:
        record.update(extra)
    return json.dumps(record, sort_keys=True, indent=2)

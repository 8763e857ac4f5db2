"""Confusion-matrix metrics, precision-recall curves and per-scenario reports.

The attack class is positive.  Zero-denominator conventions: precision is
1.0 when nothing was flagged, f1 is 0 when precision + recall is 0, and a
scored series without any attack is rejected (recall would be undefined).
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

REPORT_COLUMNS = ("scenario", "recall_pct", "precision_pct", "accuracy_pct", "f1_pct")
PR_COLUMNS = ("threshold_m", "precision", "recall")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class MetricSet:
    accuracy: float
    precision: float
    recall: float
    f1: float

    def as_percent(self) -> dict:
        """Two-decimal percentages; f1 is taken from the rounded precision and recall
        so a reader recomputing it from the displayed values gets the displayed f1."""
        p, r = pct(self.precision), pct(self.recall)
        return {"recall_pct": r, "precision_pct": p, "accuracy_pct": pct(self.accuracy),
                "f1_pct": pct(f1_score(p / 100.0, r / 100.0))}


def pct(x: float) -> float:
    return round(100.0 * x, 2)


def confusion(flags, labels) -> ConfusionMatrix:
    flags = np.asarray(flags).astype(bool)
    labels = np.asarray(labels).astype(bool)
    if flags.shape != labels.shape:
        raise ValueError(f"length mismatch: {flags.shape} flags vs {labels.shape} labels")
    tp = int(np.count_nonzero(flags & labels))
    fp = int(np.count_nonzero(flags & ~labels))
    fn = int(np.count_nonzero(~flags & labels))
    return ConfusionMatrix(tp, fp, flags.size - tp - fp - fn, fn)


def f1_score(precision: float, recall: float) -> float:
    s = precision + recall
    return 0.0 if s == 0 else 2.0 * precision * recall / s


def metrics(cm: ConfusionMatrix) -> MetricSet:
    if cm.total <= 0:
        raise ValueError("no scored steps")
    if cm.tp + cm.fn == 0:
        raise ValueError("no attack steps: recall undefined")
    precision = 1.0 if cm.tp + cm.fp == 0 else cm.tp / (cm.tp + cm.fp)
    recall = cm.tp / (cm.tp + cm.fn)
    return MetricSet((cm.tp + cm.tn) / cm.total, precision, recall, f1_score(precision, recall))


def merge_events(flags, window: int = 2) -> np.ndarray:
    """Collapse flags within ``window`` steps after a kept flag into that flag."""
    flags = np.asarray(flags).astype(bool)
    out = np.zeros_like(flags)
    last = -window - 1
    for i in np.flatnonzero(flags):
        if i - last > window:
            out[i] = True
            last = i
    return out


@dataclass(frozen=True)
class PrPoint:
    threshold_m: float
    precision: float
    recall: float


def pr_curve(dd_m, labels, thresholds: Sequence[float]) -> list[PrPoint]:
    """Precision/recall from re-thresholding a DD series at each grid value (flag iff DD > threshold)."""
    grid = np.asarray(thresholds, dtype=float)
    if grid.size == 0:
        raise ValueError("threshold grid is empty")
    if np.any(np.diff(grid) < 0):
        raise ValueError("threshold grid must be sorted ascending")
    dd = np.asarray(dd_m, dtype=float)
    labels = np.asarray(labels).astype(bool)
    pos = np.sort(dd[labels])
    neg = np.sort(dd[~labels])
    if pos.size == 0:
        raise ValueError("no attack steps: recall undefined")
    # counts strictly above each threshold
    tp = pos.size - np.searchsorted(pos, grid, side="right")
    fp = neg.size - np.searchsorted(neg, grid, side="right")
    out = []
    for t, a, b in zip(grid, tp, fp):
        precision = 1.0 if a + b == 0 else a / (a + b)
        out.append(PrPoint(float(t), float(precision), float(a / pos.size)))
    return out


def default_threshold_grid(lo: float = 1e-3, hi: float = 200.0, n: int = 60) -> list[float]:
    return [0.0] + np.geomspace(lo, hi, n).tolist()


@dataclass
class ScenarioResult:
    scenario: int
    confusion: ConfusionMatrix
    metrics: MetricSet

    def row(self) -> dict:
        return {"scenario": self.scenario, **self.metrics.as_percent()}


def score_scenario(scenario: int, flags, labels, merge_window: int = 0) -> ScenarioResult:
    flags = np.asarray(flags).astype(bool)
    if merge_window:
        flags = merge_events(flags, merge_window)
    cm = confusion(flags, labels)
    return ScenarioResult(scenario, cm, metrics(cm))


def scenario_report(results: Sequence[ScenarioResult]) -> list[dict]:
    if not results:
        raise ValueError("no scenarios scored")
    return [r.row() for r in results]


def write_report_csv(rows: list[dict], path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in rows:
            w.writerow([r["scenario"]] + [f"{r[c]:.2f}" for c in REPORT_COLUMNS[1:]])
    tmp.replace(path)


def write_report_json(results: Sequence[ScenarioResult], path, extra: dict | None = None) -> None:
    payload = {
        **(extra or {}),
        "scenarios": [{"scenario": r.scenario, "confusion": asdict(r.confusion),
                       "metrics": asdict(r.metrics), **r.metrics.as_percent()} for r in results],
    }
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")
    tmp.replace(path)


def write_pr_csv(points: Sequence[PrPoint], path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(PR_COLUMNS)
        for p in points:
            w.writerow([repr(p.threshold_m), repr(p.precision), repr(p.recall)])
    tmp.replace(path)

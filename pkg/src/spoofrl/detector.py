"""Runtime detection: compare per-step differential distance against a threshold."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import NormalizationStats, Trace
from .mlp import MlpNetwork
from .predictor import DISTANCE_FEATURE, normalize_distance, predict_distances, predictor_rows_for

GUARDS = ("substitute", "clamp", "none")
DETECTION_COLUMNS = ("step", "calculated_m", "predicted_m", "dd_m", "flagged")


def differential_distance(predicted_m: float, calculated_m: float) -> float:
    if not (math.isfinite(predicted_m) and math.isfinite(calculated_m)):
        raise ValueError("distances must be finite")
    return abs(predicted_m - calculated_m)


@dataclass(frozen=True)
class DetectionSample:
    step: int
    calculated_m: float
    predicted_m: float
    dd_m: float
    flagged: bool


@dataclass
class DetectionSeries:
    """Per-step detection output for steps 1 .. n_steps-1 of a trace."""
    steps: np.ndarray
    calculated_m: np.ndarray
    predicted_m: np.ndarray
    dd_m: np.ndarray
    threshold_m: float

    @property
    def flagged(self) -> np.ndarray:
        return self.dd_m > self.threshold_m

    def __len__(self) -> int:
        return len(self.steps)

    def __iter__(self):
        for i, f in enumerate(self.flagged):
            yield DetectionSample(int(self.steps[i]), float(self.calculated_m[i]),
                                  float(self.predicted_m[i]), float(self.dd_m[i]), bool(f))

    def rethreshold(self, threshold_m: float) -> "DetectionSeries":
        return DetectionSeries(self.steps, self.calculated_m, self.predicted_m, self.dd_m, threshold_m)


def predict_trace(trace: Trace, net: MlpNetwork, stats: NormalizationStats,
                  guard: str = "substitute") -> np.ndarray:
    """Predicted step distance for steps 1 .. n_steps-1 of ``trace``.

    The previous GPS step distance fed to the predictor comes from the trace
    itself, spoofed or not.  ``guard`` decides what happens when that input
    lies outside the range seen in training:

    * ``"substitute"``: use the predictor's own estimate for the previous step
    * ``"clamp"``: clip it to the training range
    * ``"none"``: pass it through unchanged
    """
    if guard not in GUARDS:
        raise ValueError(f"guard must be one of {GUARDS}, got {guard!r}")
    if len(trace) < 3:
        raise ValueError(f"trace too short for detection: {len(trace)} records")
    xn = predictor_rows_for(trace, stats, clamp_distance_input=(guard == "clamp"))
    pred = predict_distances(net, xn, stats)
    if guard == "substitute":
        col = xn[:, DISTANCE_FEATURE]
        # row 0's previous step has no prediction of its own; it keeps the GPS value
        for i in np.flatnonzero((col < 0.0) | (col > 1.0)):
            if i == 0:
                continue
            xn[i, DISTANCE_FEATURE] = normalize_distance(pred[i - 1], stats)
            pred[i] = predict_distances(net, xn[i], stats)[0]
    return pred


def run_detection(trace: Trace, net: MlpNetwork, stats: NormalizationStats, threshold_m: float,
                  guard: str = "substitute") -> DetectionSeries:
    if not threshold_m >= 0:
        raise ValueError(f"threshold must be ≥ 0, got {threshold_m}")
    pred = predict_trace(trace, net, stats, guard)
    calc = trace.step_distance_m[1:].copy()
    return DetectionSeries(np.arange(1, trace.n_steps), calc, pred, np.abs(pred - calc), float(threshold_m))


def write_detection_csv(series: DetectionSeries, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(DETECTION_COLUMNS)
        for s, c, p, d, fl in zip(series.steps, series.calculated_m, series.predicted_m, series.dd_m,
                                  series.flagged):
            w.writerow([int(s), repr(float(c)), repr(float(p)), repr(float(d)), int(fl)])
    tmp.replace(path)


"""Distance-per-step predictor: CAN features plus the previous GPS step
distance in, predicted current GPS step distance out (4-16-8-4-1 ReLU net)."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .data import NormalizationStats, Trace, apply_normalization, denormalize, fit_normalization, \
    split_train_validation
from .mlp import MlpNetwork, TrainConfig, forward, init_network, train

PREDICTOR_LAYERS = (4, 16, 8, 4, 1)
FEATURES = ("speed_fps", "steer_deg", "pedal_pct", "prev_distance_m")
DISTANCE_FEATURE = 3
ROLE = "predictor"


@dataclass(frozen=True)
class PredictorInput:
    """Normalised inputs for one step."""
    speed_norm: float
    steer_norm: float
    pedal_norm: float
    prev_distance_norm: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.as_array()):
            raise ValueError("predictor inputs must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.speed_norm, self.steer_norm, self.pedal_norm, self.prev_distance_norm])


@dataclass(frozen=True)
class ValidationReport:
    rmse_m: float
    max_abs_error_m: float
    n_samples: int

    def to_dict(self) -> dict:
        return asdict(self)


def build_predictor(rng_seed: int = 0) -> MlpNetwork:
    return init_network(PREDICTOR_LAYERS, rng_seed)


def raw_rows(trace: Trace) -> tuple[np.ndarray, np.ndarray]:
    """Unnormalised ``(features, target)`` for steps t = 1 .. n_steps-1.

    Features are the CAN values at record t and the step distance d[t-1];
    the target is d[t].
    """
    if len(trace) < 3:
        raise ValueError(f"trace needs ≥ 3 records for predictor rows, got {len(trace)}")
    d = trace.step_distance_m
    x = np.column_stack([trace.speed_fps[1:-1], trace.steer_deg[1:-1], trace.pedal_pct[1:-1], d[:-1]])
    return x, d[1:].copy()


def make_training_rows(trace: Trace, stats: NormalizationStats) -> tuple[np.ndarray, np.ndarray]:
    """Normalised rows; the target shares the distance feature's scaling."""
    x, y = raw_rows(trace)
    return apply_normalization(x, stats), normalize_distance(y, stats)


def fit_stats(x_raw: np.ndarray) -> NormalizationStats:
    return fit_normalization(x_raw, FEATURES)


def _distance_range(stats: NormalizationStats) -> tuple[float, float]:
    return stats.mins[DISTANCE_FEATURE], stats.maxs[DISTANCE_FEATURE]


def normalize_distance(d, stats: NormalizationStats) -> np.ndarray:
    lo, hi = _distance_range(stats)
    return (np.asarray(d, dtype=float) - lo) / (hi - lo)


def denormalize_distance(z, stats: NormalizationStats) -> np.ndarray:
    lo, hi = _distance_range(stats)
    return np.asarray(z, dtype=float) * (hi - lo) + lo


def predict_distances(net: MlpNetwork, x_norm: np.ndarray, stats: NormalizationStats) -> np.ndarray:
    """Batch prediction in meters, clamped below at 0."""
    out = forward(net, np.atleast_2d(x_norm))[:, 0]
    return np.maximum(denormalize_distance(out, stats), 0.0)


def predict_distance(net: MlpNetwork, inp: PredictorInput, stats: NormalizationStats) -> float:
    return float(predict_distances(net, inp.as_array()[None, :], stats)[0])


def validation_report(net: MlpNetwork, x_norm: np.ndarray, y_m: np.ndarray,
                      stats: NormalizationStats) -> ValidationReport:
    err = predict_distances(net, x_norm, stats) - y_m
    return ValidationReport(float(np.sqrt(np.mean(err ** 2))), float(np.max(np.abs(err))), len(err))


def train_predictor(x_raw: np.ndarray, y_m: np.ndarray, cfg: TrainConfig,
                    train_fraction: float = 0.7, log_every: int = 0):
    """Split 70/30, fit normalisation on the training part, train, report on the rest.

    Returns ``(net, stats, report, loss_history)``.
    """
    x_raw = np.asarray(x_raw, dtype=float)
    y_m = np.asarray(y_m, dtype=float)
    if len(x_raw) < 10:
        raise ValueError(f"need ≥ 10 rows, got {len(x_raw)}")
    tr_idx, va_idx = split_train_validation(len(x_raw), train_fraction, cfg.rng_seed)
    stats = fit_stats(x_raw[tr_idx])
    x_norm = apply_normalization(x_raw, stats)
    y_norm = normalize_distance(y_m, stats)
    net = build_predictor(cfg.rng_seed)
    net, history = train(net, x_norm[tr_idx], y_norm[tr_idx], cfg, log_every=log_every)
    report = validation_report(net, x_norm[va_idx], y_m[va_idx], stats)
    return net, stats, report, history


def predictor_rows_for(trace: Trace, stats: NormalizationStats, clamp_distance_input: bool = True) -> np.ndarray:
    """Normalised predictor inputs for every scorable step of a (possibly spoofed) trace.

    With ``clamp_distance_input`` the GPS-derived input is limited to the
    fitted range before it reaches the network: a spoofed jump of 100+ m is
    hundreds of training ranges out, and a ReLU network extrapolates it
    linearly into a bogus prediction for the *next* step.
    """
    x, _ = raw_rows(trace)
    xn = apply_normalization(x, stats)
    if clamp_distance_input:
        np.clip(xn[:, DISTANCE_FEATURE], 0.0, 1.0, out=xn[:, DISTANCE_FEATURE])
    return xn

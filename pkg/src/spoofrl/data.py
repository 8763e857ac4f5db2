"""Driving traces: CSV I/O, GPS/CAN synchronisation, normalisation, splits and
a synthetic kinematic trace generator standing in for recorded drives."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .geo import EARTH_RADIUS_M, GeoDomainError, GeoPoint, check_coords, haversine_m

FT_TO_M = 0.3048

TRACE_COLUMNS = ("timestamp", "lat", "lon", "speed_fps", "steer_deg", "pedal_pct")
LABEL_COLUMN = "label"


class TraceError(ValueError):
    """Malformed or inconsistent trace data."""


@dataclass(frozen=True)
class SensorRecord:
    timestamp_s: float
    position: GeoPoint
    speed_fps: float
    steer_deg: float
    pedal_pct: float


class Trace:
    """Time-synchronised GPS + CAN samples, stored column-wise.

    ``step_distance_m[t]`` is the haversine distance between records ``t`` and
    ``t + 1``.  ``labels``, when present, is a per-step 0/1 series of the same
    length as the step distances.
    """

    def __init__(self, timestamp, lat, lon, speed_fps, steer_deg, pedal_pct, labels=None):
        cols = [np.array(c, dtype=float) for c in (timestamp, lat, lon, speed_fps, steer_deg, pedal_pct)]
        n = len(cols[0])
        if any(c.ndim != 1 or len(c) != n for c in cols):
            raise TraceError("trace columns must be 1-d and of equal length")
        if n < 2:
            raise TraceError("trace requires ≥ 2 records")
        self.timestamp, self.lat, self.lon, self.speed_fps, self.steer_deg, self.pedal_pct = cols
        _validate_columns(self)
        self.step_distance_m = haversine_m(self.lat[:-1], self.lon[:-1], self.lat[1:], self.lon[1:])
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int8)
            if labels.shape != (n - 1,):
                raise TraceError(f"labels length {len(labels)} != step count {n - 1}")
            if np.any((labels != 0) & (labels != 1)):
                raise TraceError("labels must be 0/1")
        self.labels = labels

    def __len__(self) -> int:
        return len(self.timestamp)

    @property
    def n_steps(self) -> int:
        return len(self.timestamp) - 1

    @property
    def records(self) -> list[SensorRecord]:
        return list(self.iter_records())

    def iter_records(self) -> Iterator[SensorRecord]:
        for i in range(len(self)):
            yield SensorRecord(float(self.timestamp[i]), GeoPoint(float(self.lat[i]), float(self.lon[i])),
                               float(self.speed_fps[i]), float(self.steer_deg[i]), float(self.pedal_pct[i]))

    def with_positions(self, lat, lon, labels=None) -> "Trace":
        return Trace(self.timestamp, lat, lon, self.speed_fps, self.steer_deg, self.pedal_pct, labels)

    @classmethod
    def from_records(cls, records: Sequence[SensorRecord], labels=None) -> "Trace":
        return cls([r.timestamp_s for r in records],
                   [r.position.lat_deg for r in records],
                   [r.position.lon_deg for r in records],
                   [r.speed_fps for r in records],
                   [r.steer_deg for r in records],
                   [r.pedal_pct for r in records],
                   labels)


def _validate_columns(tr: Trace) -> None:
    names = ("timestamp",) + TRACE_COLUMNS[1:]
    for name, col in zip(names, (tr.timestamp, tr.lat, tr.lon, tr.speed_fps, tr.steer_deg, tr.pedal_pct)):
        bad = np.flatnonzero(~np.isfinite(col))
        if bad.size:
            raise TraceError(f"row {bad[0] + 1}: non-finite {name}")
    bad = np.flatnonzero(np.diff(tr.timestamp) <= 0)
    if bad.size:
        raise TraceError(f"row {bad[0] + 2}: timestamp not strictly increasing")
    try:
        check_coords(tr.lat, tr.lon)
    except GeoDomainError as exc:
        raise TraceError(str(exc)) from None
    bad = np.flatnonzero(tr.speed_fps < 0)
    if bad.size:
        raise TraceError(f"row {bad[0] + 1}: negative speed")
    bad = np.flatnonzero((tr.pedal_pct < 0) | (tr.pedal_pct > 100))
    if bad.size:
        raise TraceError(f"row {bad[0] + 1}: pedal position outside [0, 100]")


# -- CSV ---------------------------------------------------------------------

def load_trace(path) -> Trace:
    """Read a trace CSV (``timestamp,lat,lon,speed_fps,steer_deg,pedal_pct[,label]``).

    Row numbers in error messages count data rows from 1 (header excluded).
    A ``label`` column marks the step that *starts* at that row; the final
    row's label is ignored since no step starts there.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise TraceError(f"{path}: empty file") from None
        has_label = header == list(TRACE_COLUMNS) + [LABEL_COLUMN]
        if header != list(TRACE_COLUMNS) and not has_label:
            raise TraceError(f"{path}: header {header} does not match {list(TRACE_COLUMNS)}[,label]")
        width = len(header)
        rows = []
        for lineno, row in enumerate(reader, start=1):
            if len(row) != width:
                raise TraceError(f"{path}: row {lineno}: expected {width} columns, got {len(row)}")
            try:
                rows.append([float(x) for x in row])
            except ValueError as exc:
                raise TraceError(f"{path}: row {lineno}: {exc}") from None
    if len(rows) < 2:
        raise TraceError("trace requires ≥ 2 records")
    arr = np.array(rows, dtype=float)
    labels = None
    if has_label:
        raw = arr[:-1, 6]
        bad = np.flatnonzero((raw != 0) & (raw != 1))
        if bad.size:
            raise TraceError(f"{path}: row {bad[0] + 1}: label must be 0 or 1")
        labels = raw.astype(np.int8)
    try:
        return Trace(*arr[:, :6].T, labels=labels)
    except TraceError as exc:
        raise TraceError(f"{path}: {exc}") from None


def save_trace(trace: Trace, path) -> None:
    path = Path(path)
    header = list(TRACE_COLUMNS)
    if trace.labels is not None:
        header.append(LABEL_COLUMN)
    cols = [trace.timestamp, trace.lat, trace.lon, trace.speed_fps, trace.steer_deg, trace.pedal_pct]
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for i in range(len(trace)):
            row = [repr(float(c[i])) for c in cols]
            if trace.labels is not None:
                row.append(str(int(trace.labels[i])) if i < trace.n_steps else "0")
            w.writerow(row)
    tmp.replace(path)


# -- synchronisation ---------------------------------------------------------

def synchronize(gps_t, gps_lat, gps_lon, can_t, can_speed_fps, can_steer_deg, can_pedal_pct) -> Trace:
    """Resample CAN onto GPS timestamps by nearest neighbour.

    GPS timestamps outside ``[can_t[0], can_t[-1]]`` are dropped.  A GPS time
    exactly halfway between two CAN samples takes the earlier one.
    """
    gps_t = np.asarray(gps_t, dtype=float)
    can_t = np.asarray(can_t, dtype=float)
    if gps_t.size == 0 or can_t.size == 0:
        raise TraceError("both streams must be non-empty")
    if np.any(np.diff(gps_t) <= 0) or np.any(np.diff(can_t) <= 0):
        raise TraceError("streams must be strictly time-sorted")
    keep = (gps_t >= can_t[0]) & (gps_t <= can_t[-1])
    if not keep.any():
        raise TraceError("GPS and CAN streams do not overlap in time")
    t = gps_t[keep]
    hi = np.searchsorted(can_t, t, side="left")
    hi = np.clip(hi, 0, len(can_t) - 1)
    lo = np.clip(hi - 1, 0, len(can_t) - 1)
    pick = np.where(t - can_t[lo] <= can_t[hi] - t, lo, hi)
    return Trace(t, np.asarray(gps_lat, dtype=float)[keep], np.asarray(gps_lon, dtype=float)[keep],
                 np.asarray(can_speed_fps, dtype=float)[pick],
                 np.asarray(can_steer_deg, dtype=float)[pick],
                 np.asarray(can_pedal_pct, dtype=float)[pick])


# -- normalisation -----------------------------------------------------------

@dataclass(frozen=True)
class NormalizationStats:
    names: tuple[str, ...]
    mins: tuple[float, ...]
    maxs: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.names) == len(self.mins) == len(self.maxs)):
            raise ValueError("names/mins/maxs length mismatch")
        for name, lo, hi in zip(self.names, self.mins, self.maxs):
            if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
                raise ValueError(f"constant feature {name!r}: min={lo} max={hi}")

    def to_dict(self) -> dict:
        return {"features": [{"name": n, "min": lo, "max": hi}
                             for n, lo, hi in zip(self.names, self.mins, self.maxs)]}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationStats":
        feats = d["features"]
        return cls(tuple(f["name"] for f in feats),
                   tuple(float(f["min"]) for f in feats),
                   tuple(float(f["max"]) for f in feats))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "NormalizationStats":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def fit_normalization(rows, names: Sequence[str]) -> NormalizationStats:
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[0] < 2 or rows.shape[1] != len(names):
        raise ValueError(f"need a (≥2, {len(names)}) array, got shape {rows.shape}")
    lo = rows.min(axis=0)
    hi = rows.max(axis=0)
    return NormalizationStats(tuple(names), tuple(float(x) for x in lo), tuple(float(x) for x in hi))


def apply_normalization(rows, stats: NormalizationStats) -> np.ndarray:
    """Min-max scale; values outside the fitted range are left unclamped."""
    lo = np.asarray(stats.mins)
    return (np.asarray(rows, dtype=float) - lo) / (np.asarray(stats.maxs) - lo)


def denormalize(rows, stats: NormalizationStats) -> np.ndarray:
    lo = np.asarray(stats.mins)
    return np.asarray(rows, dtype=float) * (np.asarray(stats.maxs) - lo) + lo


def split_train_validation(n_rows: int, train_fraction: float = 0.7, rng_seed: int = 0):
    """Shuffled disjoint index split with ``round(train_fraction * n_rows)`` training rows."""
    if n_rows < 10:
        raise ValueError(f"need ≥ 10 rows to split, got {n_rows}")
    n_train = int(round(train_fraction * n_rows))
    perm = np.random.default_rng(rng_seed).permutation(n_rows)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


# -- synthetic traces --------------------------------------------------------

@dataclass
class SynthConfig:
    duration_s: float = 600.0
    sample_rate_hz: float = 100.0
    origin_lat: float = 37.393
    origin_lon: float = -122.077
    start_time: float = 1488224209.0
    rng_seed: int = 0
    initial_speed_mps: float = 0.0
    heading_deg: float = 0.0
    speed_max_mps: float = 30.0
    # pedal: piecewise-linear random knots in [pedal_min, pedal_max]
    pedal_min: float = 0.0
    pedal_max: float = 60.0
    pedal_knot_s: float = 8.0
    pedal_gain: float = 0.1        # m/s^2 per pedal percent
    drag: float = 0.12             # 1/s
    brake_decel: float = 2.0       # m/s^2 applied while the pedal is released
    # steering wheel: sinusoid plus random knots, degrees
    steer_amplitude_deg: float = 90.0
    steer_period_s: float = 40.0
    steer_knot_deg: float = 30.0
    steer_knot_s: float = 5.0
    steering_ratio: float = 15.0
    wheelbase_m: float = 2.8
    timestamp_jitter_s: float = 0.0002
    speed_noise_fps: float = 0.0
    steer_noise_deg: float = 0.0

    def __post_init__(self):
        if not self.duration_s > 0:
            raise ValueError(f"duration_s must be > 0, got {self.duration_s}")
        if not self.sample_rate_hz > 0:
            raise ValueError(f"sample_rate_hz must be > 0, got {self.sample_rate_hz}")
        if self.timestamp_jitter_s < 0 or self.timestamp_jitter_s >= 0.5 / self.sample_rate_hz:
            raise ValueError("timestamp_jitter_s must be in [0, half the sample period)")
        if self.speed_max_mps <= 0 or not 0 <= self.initial_speed_mps <= self.speed_max_mps:
            raise ValueError("need 0 <= initial_speed_mps <= speed_max_mps, speed_max_mps > 0")
        if not 0 <= self.pedal_min <= self.pedal_max <= 100:
            raise ValueError("need 0 <= pedal_min <= pedal_max <= 100")

    def to_dict(self) -> dict:
        return asdict(self)


def _knots(rng, n_samples: int, dt: float, knot_s: float, lo: float, hi: float) -> np.ndarray:
    t = np.arange(n_samples) * dt
    n_knots = int(t[-1] // knot_s) + 2
    values = rng.uniform(lo, hi, n_knots)
    return np.interp(t, np.arange(n_knots) * knot_s, values)


def generate_synthetic_trace(cfg: SynthConfig) -> Trace:
    """Kinematic bicycle-model drive mapped onto the sphere.

    Pedal position drives longitudinal acceleration (with linear drag and a
    fixed braking deceleration when the pedal is fully released), steering
    wheel angle drives yaw rate, and the planar displacement of each step is
    converted to latitude/longitude increments along the local meridian and
    parallel.  Deterministic in ``cfg.rng_seed``.
    """
    rng = np.random.default_rng(cfg.rng_seed)
    n = int(round(cfg.duration_s * cfg.sample_rate_hz)) + 1
    period = 1.0 / cfg.sample_rate_hz

    offsets = np.arange(n) * period
    if cfg.timestamp_jitter_s > 0:
        offsets = offsets + rng.uniform(-cfg.timestamp_jitter_s, cfg.timestamp_jitter_s, n)
        offsets[0] = 0.0
    dts = np.diff(offsets)

    if cfg.pedal_max > cfg.pedal_min:
        pedal = _knots(rng, n, period, cfg.pedal_knot_s, cfg.pedal_min, cfg.pedal_max)
        # release the pedal now and then so the drive includes stops and coasting
        pedal = np.clip(pedal - 0.25 * (cfg.pedal_max - cfg.pedal_min), 0.0, None)
    else:
        pedal = np.full(n, cfg.pedal_min)
    steer = cfg.steer_amplitude_deg * np.sin(2 * np.pi * offsets / cfg.steer_period_s)
    if cfg.steer_knot_deg > 0:
        steer = steer + _knots(rng, n, period, cfg.steer_knot_s, -cfg.steer_knot_deg, cfg.steer_knot_deg)

    speed = np.empty(n)
    speed[0] = cfg.initial_speed_mps
    lat = np.empty(n)
    lon = np.empty(n)
    lat[0], lon[0] = cfg.origin_lat, cfg.origin_lon
    heading = math.radians(cfg.heading_deg)  # clockwise from north
    r = EARTH_RADIUS_M
    for k in range(n - 1):
        dt = dts[k]
        v = speed[k]
        step = v * dt
        if step > 0.0:
            de = step * math.sin(heading)
            dn = step * math.cos(heading)
            lat[k + 1] = lat[k] + math.degrees(dn / r)
            lon[k + 1] = lon[k] + math.degrees(de / (r * math.cos(math.radians(lat[k]))))
        else:
            lat[k + 1], lon[k + 1] = lat[k], lon[k]
        wheel = math.radians(steer[k] / cfg.steering_ratio)
        heading += v * math.tan(wheel) / cfg.wheelbase_m * dt
        accel = cfg.pedal_gain * pedal[k] - cfg.drag * v
        if pedal[k] <= 0.0 and v > 0.0:
            accel -= cfg.brake_decel
        speed[k + 1] = min(max(v + accel * dt, 0.0), cfg.speed_max_mps)

    speed_fps = speed / FT_TO_M
    if cfg.speed_noise_fps > 0:
        speed_fps = np.clip(speed_fps + rng.normal(0.0, cfg.speed_noise_fps, n), 0.0, None)
    if cfg.steer_noise_deg > 0:
        steer = steer + rng.normal(0.0, cfg.steer_noise_deg, n)
    return Trace(cfg.start_time + offsets, lat, lon, speed_fps, steer, pedal)

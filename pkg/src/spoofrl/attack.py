"""Turn-by-turn spoofing: location-shift injection and attack scenario sets."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Trace, load_trace, save_trace
from .geo import GeoPoint, destination, from_unit_vectors, rotation_between, to_unit_vectors

SHIFT_MIN_M = 50.0
SHIFT_MAX_M = 180.0
N_SCENARIOS = 10
MIN_ONSET_GAP = 100


class AttackError(ValueError):
    pass


@dataclass(frozen=True)
class AttackSpec:
    """Shift GPS positions from record ``onset_index`` on by ``shift_m`` toward ``shift_bearing_deg``."""
    onset_index: int
    shift_m: float
    shift_bearing_deg: float = 0.0

    def __post_init__(self):
        if not SHIFT_MIN_M <= self.shift_m <= SHIFT_MAX_M:
            raise AttackError(f"shift_m {self.shift_m} outside [{SHIFT_MIN_M}, {SHIFT_MAX_M}]")

    def check(self, trace: Trace) -> None:
        if not 0 < self.onset_index < len(trace):
            raise AttackError(f"onset_index {self.onset_index} outside (0, {len(trace)})")

    def to_dict(self) -> dict:
        return {"onset_index": self.onset_index, "shift_m": self.shift_m,
                "shift_bearing_deg": self.shift_bearing_deg}


def _shift_suffix(lat: np.ndarray, lon: np.ndarray, spec: AttackSpec) -> tuple[np.ndarray, np.ndarray]:
    k = spec.onset_index
    a = GeoPoint(float(lat[k]), float(lon[k]))
    b = destination(a, spec.shift_m, spec.shift_bearing_deg)
    rot = rotation_between(a, b)
    xyz = to_unit_vectors(lat[k:], lon[k:]) @ rot.T
    new_lat, new_lon = from_unit_vectors(xyz)
    lat = lat.copy()
    lon = lon.copy()
    lat[k:] = new_lat
    lon[k:] = new_lon
    return lat, lon


def inject_attacks(trace: Trace, specs: Sequence[AttackSpec]) -> tuple[Trace, np.ndarray]:
    """Apply every spec in onset order; label 1 marks each onset step.

    The onset step of an attack at record ``k`` is step ``k - 1`` (the step
    from the last genuine fix to the first spoofed one).  Each shift is a
    rotation of the sphere applied to the whole suffix, so the spoofed route
    keeps every turn and step length of the real one after the jump.
    """
    labels = np.zeros(trace.n_steps, dtype=np.int8)
    if not specs:
        return trace, labels
    lat, lon = trace.lat, trace.lon
    for spec in sorted(specs, key=lambda s: s.onset_index):
        spec.check(trace)
        lat, lon = _shift_suffix(lat, lon, spec)
        labels[spec.onset_index - 1] = 1
    return trace.with_positions(lat, lon, labels), labels


def inject_attack(trace: Trace, spec: AttackSpec) -> tuple[Trace, np.ndarray]:
    return inject_attacks(trace, [spec])


@dataclass
class Scenario:
    index: int
    attacks: list[AttackSpec]
    trace: Trace
    labels: np.ndarray

    @property
    def segments(self) -> list[tuple[int, int]]:
        """Spoofed record ranges ``[onset, end)``; each attack lasts until the next onset."""
        onsets = [a.onset_index for a in self.attacks] + [len(self.trace)]
        return [(onsets[i], onsets[i + 1]) for i in range(len(self.attacks))]


@dataclass
class ScenarioSet:
    scenarios: list[Scenario]
    rng_seed: int
    meta: dict = field(default_factory=dict)

    def __getitem__(self, index: int) -> Scenario:
        for s in self.scenarios:
            if s.index == index:
                return s
        raise KeyError(index)


def attack_counts(max_attacks: int, min_attacks: int, n: int = N_SCENARIOS) -> list[int]:
    """Strictly decreasing counts from ``max_attacks`` to ``min_attacks`` over ``n`` scenarios."""
    if min_attacks < 1 or max_attacks - min_attacks < n - 1:
        raise AttackError(f"cannot make {n} strictly decreasing counts in [{min_attacks}, {max_attacks}]")
    counts = np.round(np.linspace(max_attacks, min_attacks, n)).astype(int).tolist()
    return counts


def _draw_onsets(rng: np.random.Generator, n_records: int, count: int, gap: int, margin: int) -> list[int]:
    lo = margin
    hi = n_records - margin  # exclusive
    free = (hi - lo) - (count - 1) * gap
    if free < count:
        raise AttackError(f"trace of {n_records} records too short for {count} attacks spaced {gap} apart")
    base = np.sort(rng.choice(free, size=count, replace=False))
    return [int(lo + b + i * (gap - 1)) for i, b in enumerate(base)]


def generate_scenario_set(trace: Trace, rng_seed: int = 0, counts: Sequence[int] | None = None,
                          min_gap: int = MIN_ONSET_GAP,
                          shift_range: tuple[float, float] = (SHIFT_MIN_M, SHIFT_MAX_M)) -> ScenarioSet:
    """Ten spoofed copies of ``trace`` with strictly decreasing attack counts.

    Onsets are at least ``min_gap`` records apart and at least ``min_gap``
    records from either end of the trace; shift magnitudes are uniform over
    ``shift_range`` and bearings uniform over [0, 360).
    """
    counts = list(counts) if counts is not None else attack_counts(20, 2)
    if len(counts) != N_SCENARIOS:
        raise AttackError(f"need {N_SCENARIOS} attack counts, got {len(counts)}")
    if any(c < 1 for c in counts) or any(a <= b for a, b in zip(counts, counts[1:])):
        raise AttackError(f"attack counts must be ≥ 1 and strictly decreasing: {counts}")
    lo, hi = shift_range
    if not SHIFT_MIN_M <= lo <= hi <= SHIFT_MAX_M:
        raise AttackError(f"shift range {shift_range} outside [{SHIFT_MIN_M}, {SHIFT_MAX_M}]")
    rng = np.random.default_rng(rng_seed)
    scenarios = []
    for i, count in enumerate(counts, start=1):
        onsets = _draw_onsets(rng, len(trace), count, min_gap, margin=min_gap)
        shifts = rng.uniform(lo, hi, count)
        bearings = rng.uniform(0.0, 360.0, count)
        specs = [AttackSpec(o, float(s), float(b)) for o, s, b in zip(onsets, shifts, bearings)]
        spoofed, labels = inject_attacks(trace, specs)
        scenarios.append(Scenario(i, specs, spoofed, labels))
    return ScenarioSet(scenarios, rng_seed, {"counts": counts, "min_gap": min_gap,
                                             "shift_range": [lo, hi]})


# -- manifest ------------------------------------------------------------------

def scenario_filename(index: int) -> str:
    return f"scenario_{index:02d}.csv"


def write_scenario_set(sset: ScenarioSet, out_dir, source_trace: str | None = None) -> Path:
    """Write one labelled CSV per scenario plus ``manifest.json``; returns the manifest path."""
    from .mlp import atomic_write_text, dumps_json

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for sc in sset.scenarios:
        name = scenario_filename(sc.index)
        save_trace(sc.trace, out_dir / name)
        entries.append({
            "scenario": sc.index,
            "trace": name,
            "labels": name,
            "label_column": "label",
            "n_attacks": len(sc.attacks),
            "attacks": [a.to_dict() for a in sc.attacks],
            "segments": [list(s) for s in sc.segments],
        })
    manifest = {"rng_seed": sset.rng_seed, "source_trace": source_trace, **sset.meta, "scenarios": entries}
    path = out_dir / "manifest.json"
    atomic_write_text(path, dumps_json(manifest))
    return path


def read_scenario_set(manifest_path) -> ScenarioSet:
    manifest_path = Path(manifest_path)
    m = json.loads(manifest_path.read_text(encoding="utf-8"))
    scenarios = []
    for e in m["scenarios"]:
        tr = load_trace(manifest_path.parent / e["trace"])
        specs = [AttackSpec(int(a["onset_index"]), float(a["shift_m"]), float(a["shift_bearing_deg"]))
                 for a in e["attacks"]]
        labels = tr.labels if tr.labels is not None else np.zeros(tr.n_steps, dtype=np.int8)
        scenarios.append(Scenario(int(e["scenario"]), specs, tr, labels))
    meta = {k: v for k, v in m.items() if k not in ("rng_seed", "scenarios")}
    return ScenarioSet(scenarios, int(m["rng_seed"]), meta)

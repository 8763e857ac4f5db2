import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spoofrl.attack import (AttackError, AttackSpec, attack_counts, generate_scenario_set, inject_attack,
                            inject_attacks, read_scenario_set, write_scenario_set)
from spoofrl.data import generate_synthetic_trace
from spoofrl.geo import haversine_m

from conftest import constant_speed_config, stationary_trace


def test_stationary_shift_isolated():
    tr = stationary_trace(50)
    spoofed, labels = inject_attack(tr, AttackSpec(20, 100.0, 45.0))
    d = spoofed.step_distance_m
    assert d[19] == pytest.approx(100.0, rel=1e-9)
    assert np.all(np.delete(d, 19) < 1e-6)
    assert labels.tolist() == [0] * 19 + [1] + [0] * 29


@pytest.mark.parametrize("bearing", [0.0, 90.0, 180.0, 300.0])
def test_moving_vehicle_onset_matches_haversine(bearing):
    tr = generate_synthetic_trace(constant_speed_config(30.0, duration_s=1.0, sample_rate_hz=30.0))  # 1 m per step
    assert np.allclose(tr.step_distance_m, 1.0, rtol=1e-6)
    k = 10
    spoofed, _ = inject_attack(tr, AttackSpec(k, 50.0, bearing))
    d = spoofed.step_distance_m[k - 1]
    # collinear bearings sit exactly on the triangle bound
    assert 49.0 - 1e-6 <= d <= 51.0 + 1e-6
    oracle = haversine_m(tr.lat[k - 1], tr.lon[k - 1], spoofed.lat[k], spoofed.lon[k])
    assert d == oracle


@pytest.mark.parametrize("spec", [(0, 100.0), (10_000, 100.0), (5, 49.9), (5, 180.5)])
def test_invalid_specs(spec):
    tr = stationary_trace(30)
    with pytest.raises(AttackError):
        inject_attack(tr, AttackSpec(*spec))


def test_empty_attack_list_is_identity(short_trace):
    out, labels = inject_attacks(short_trace, [])
    assert out is short_trace and not labels.any()


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_injection_invariants(seed):
    rng = np.random.default_rng(seed)
    tr = generate_synthetic_trace(constant_speed_config(rng.uniform(0, 30), duration_s=5.0,
                                                         heading_deg=rng.uniform(0, 360)))
    onsets = sorted(rng.choice(np.arange(1, len(tr)), size=3, replace=False))
    specs = [AttackSpec(int(k), float(rng.uniform(50, 180)), float(rng.uniform(0, 360))) for k in onsets]
    spoofed, labels = inject_attacks(tr, specs)
    clean_d, spoof_d = tr.step_distance_m, spoofed.step_distance_m
    quiet = labels == 0
    assert np.max(np.abs(spoof_d[quiet] - clean_d[quiet])) < 1e-6
    for s in specs:
        step = s.onset_index - 1
        assert labels[step] == 1
        assert spoof_d[step] >= s.shift_m - clean_d[step] - 1e-6


def test_attack_counts():
    assert attack_counts(10, 1) == list(range(10, 0, -1))
    counts = attack_counts(20, 2)
    assert counts[0] == 20 and counts[-1] == 2
    assert all(a > b for a, b in zip(counts, counts[1:]))
    with pytest.raises(AttackError):
        attack_counts(5, 1)


def test_scenario_set(short_trace):
    sset = generate_scenario_set(short_trace, rng_seed=1, counts=list(range(10, 0, -1)))
    assert [len(s.attacks) for s in sset.scenarios] == list(range(10, 0, -1))
    assert sset.scenarios[0].index == 1 and sset.scenarios[-1].index == 10
    for sc in sset.scenarios:
        onsets = [a.onset_index for a in sc.attacks]
        assert all(b - a >= 100 for a, b in zip(onsets, onsets[1:]))
        assert all(50 <= a.shift_m <= 180 for a in sc.attacks)
        assert int(sc.labels.sum()) == len(sc.attacks)
        assert sc.segments[-1][1] == len(sc.trace)


def test_scenario_set_deterministic(short_trace):
    a = generate_scenario_set(short_trace, rng_seed=4)
    b = generate_scenario_set(short_trace, rng_seed=4)
    for x, y in zip(a.scenarios, b.scenarios):
        assert x.attacks == y.attacks
        assert np.array_equal(x.trace.lat, y.trace.lat) and np.array_equal(x.labels, y.labels)


def test_trace_too_short():
    with pytest.raises(AttackError):
        generate_scenario_set(stationary_trace(500))


def test_manifest_round_trip(tmp_path, short_trace):
    sset = generate_scenario_set(short_trace, rng_seed=2)
    manifest = write_scenario_set(sset, tmp_path / "sc", source_trace="trace.csv")
    assert len(list((tmp_path / "sc").glob("scenario_*.csv"))) == 10
    back = read_scenario_set(manifest)
    for x, y in zip(sset.scenarios, back.scenarios):
        assert x.index == y.index and x.attacks == y.attacks
        assert np.array_equal(x.labels, y.labels)
        assert np.array_equal(x.trace.lon, y.trace.lon)

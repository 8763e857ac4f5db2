import numpy as np
import pytest

from spoofrl.data import SynthConfig, Trace, generate_synthetic_trace

TABLE1_CSV = """timestamp,lat,lon,speed_fps,steer_deg,pedal_pct
1488224209.42714,37.393,-122.077,0,-57.8,0
1488224209.43716,37.3939,-122.077,0,-57.8,0
1488224209.44696,37.3939,-122.077,0,-57.8,0
1488224209.45698,37.3939,-122.077,0,-57.8,0
1488224209.46698,37.3939,-122.077,0,-57.8,0
"""

# filled by the acceptance checks, echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def table1_path(tmp_path):
    p = tmp_path / "table1.csv"
    p.write_text(TABLE1_CSV, encoding="utf-8")
    return p


def constant_speed_config(v_mps: float, duration_s: float = 10.0, **kw) -> SynthConfig:
    """Straight line at a fixed speed: no pedal, drag, braking, steering or jitter."""
    return SynthConfig(duration_s=duration_s, initial_speed_mps=v_mps, pedal_min=0.0, pedal_max=0.0,
                       pedal_gain=0.0, drag=0.0, brake_decel=0.0, steer_amplitude_deg=0.0,
                       steer_knot_deg=0.0, timestamp_jitter_s=0.0, **kw)


def stationary_trace(n: int = 50) -> Trace:
    t = 1000.0 + np.arange(n) * 0.01
    return Trace(t, np.full(n, 37.393), np.full(n, -122.077), np.zeros(n), np.zeros(n), np.zeros(n))


@pytest.fixture(scope="session")
def short_trace():
    return generate_synthetic_trace(SynthConfig(duration_s=60.0, rng_seed=3))

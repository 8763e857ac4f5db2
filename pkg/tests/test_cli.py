import csv
import json

import pytest

from spoofrl import cli
from spoofrl.data import TRACE_COLUMNS

SMALL = {"synth": {"duration_s": 40.0}, "predictor": {"epochs": 3}, "agent": {"total_steps": 600}}


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "run.json"
    p.write_text(json.dumps(SMALL))
    return p


def run(*args) -> int:
    return cli.main([str(a) for a in args])


def test_synth_writes_header(tmp_path, config):
    assert run("synth", "--config", config, "--out", tmp_path / "o", "--duration", 5) == 0
    with open(tmp_path / "o" / "trace.csv") as f:
        assert next(csv.reader(f)) == list(TRACE_COLUMNS)


def test_synth_default_config_header(tmp_path):
    assert run("synth", "--out", tmp_path, "--duration", 2) == 0
    assert (tmp_path / "trace.csv").read_text().startswith(",".join(TRACE_COLUMNS) + "\n")


def test_same_seed_same_bytes(tmp_path, config):
    for name in ("a", "b"):
        assert run("synth", "--config", config, "--seed", 7, "--out", tmp_path / name) == 0
    assert (tmp_path / "a" / "trace.csv").read_bytes() == (tmp_path / "b" / "trace.csv").read_bytes()
    assert run("synth", "--config", config, "--seed", 8, "--out", tmp_path / "c") == 0
    assert (tmp_path / "a" / "trace.csv").read_bytes() != (tmp_path / "c" / "trace.csv").read_bytes()


@pytest.mark.parametrize("args", [["synth", "--duration", "0"], ["synth", "--duration", "-3"], [],
                                  ["bogus"], ["synth", "--seed", "-1"], ["detect"]])
def test_usage_errors(args, capsys):
    assert cli.main(args) == cli.EXIT_USAGE
    assert "usage error" in capsys.readouterr().err


def test_global_flags_before_subcommand(tmp_path, config):
    assert run("--out", tmp_path / "g", "--config", config, "synth") == 0
    assert (tmp_path / "g" / "trace.csv").exists()


def test_missing_trace(tmp_path, capsys):
    assert run("train-predictor", "--out", tmp_path, "--trace", tmp_path / "nope.csv") == cli.EXIT_DATA
    assert "nope.csv" in capsys.readouterr().err


def test_missing_artifacts(tmp_path, capsys):
    assert run("evaluate", "--out", tmp_path) == cli.EXIT_DATA
    assert "not found" in capsys.readouterr().err


def test_bad_config(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"synth": {"duration": 5}}))
    assert run("synth", "--config", p, "--out", tmp_path) == cli.EXIT_DATA
    p.write_text("{not json")
    assert run("synth", "--config", p, "--out", tmp_path) == cli.EXIT_DATA


def test_malformed_trace(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text(",".join(TRACE_COLUMNS) + "\n1,2,3,4,5,6\n0,2,3,4,5,6\n1,2,3\n")
    assert run("inject", "--out", tmp_path, "--trace", p) == cli.EXIT_DATA


def test_config_round_trip(tmp_path, capsys, config):
    assert run("config", "--config", config) == 0
    dumped = json.loads(capsys.readouterr().out)
    assert dumped["synth"]["duration_s"] == 40.0 and dumped["agent"]["train_scenario"] == 2
    assert cli.RunConfig.from_dict(dumped).to_dict() == dumped


def test_full_chain(tmp_path, config, capsys):
    out = tmp_path / "run"
    for cmd in ("synth", "inject", "train-predictor", "train-agent", "evaluate"):
        assert run(cmd, "--config", config, "--out", out) == 0, cmd
    printed = capsys.readouterr().out
    assert "rmse_m" in printed and "max_abs_error_m" in printed

    manifest = json.loads((out / "scenarios" / "manifest.json").read_text())
    assert len(manifest["scenarios"]) == 10
    assert len(list((out / "scenarios").glob("scenario_*.csv"))) == 10

    agent = json.loads((out / "models" / "agent.json").read_text())
    assert agent["train_scenario"] == 2
    assert agent["threshold_m"] >= 0 and len(agent["reward_history"]) > 0

    with open(out / "reports" / "report.csv") as f:
        rows = list(csv.DictReader(f))
    assert [int(r["scenario"]) for r in rows] == [1, 3, 4, 5, 6, 7, 8, 9, 10]
    with open(out / "reports" / "pr_curve.csv") as f:
        assert next(csv.reader(f)) == ["threshold_m", "precision", "recall"]
    assert len(list((out / "detections").glob("*.csv"))) == 9

    before = {p: p.read_bytes() for p in (out / "reports").rglob("*.csv")}
    assert run("evaluate", "--config", config, "--out", out) == 0
    assert before == {p: p.read_bytes() for p in (out / "reports").rglob("*.csv")}

    assert run("train-agent", "--config", config, "--out", out, "--train-scenario", 5) == 0
    assert run("evaluate", "--config", config, "--out", out) == 0
    with open(out / "reports" / "report.csv") as f:
        assert 5 not in [int(r["scenario"]) for r in csv.DictReader(f)]

    det = tmp_path / "det.csv"
    assert run("detect", "--config", config, "--out", out, "--trace", out / "scenarios" / "scenario_03.csv",
               "--dest", det, "--threshold", 1.5) == 0
    assert det.read_text().splitlines()[0] == "step,calculated_m,predicted_m,dd_m,flagged"
    assert not list(out.rglob("*.tmp"))

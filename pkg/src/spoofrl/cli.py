"""Command-line driver: synth -> inject -> train-predictor -> train-agent -> evaluate.

Every command reads one JSON run configuration (``--config``), accepts a few
per-command overrides, and writes under ``--out``.  Exit codes: 0 success,
1 usage error, 2 data/validation error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import traceback
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import attack, data, detector, evaluation, mlp, predictor, rl

log = logging.getLogger("spoofrl")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


@dataclass
class AttackParams:
    max_attacks: int = 20
    min_attacks: int = 2
    min_gap: int = attack.MIN_ONSET_GAP
    shift_min_m: float = attack.SHIFT_MIN_M
    shift_max_m: float = attack.SHIFT_MAX_M


@dataclass
class PredictorParams:
    epochs: int = 1000
    batch_size: int = 32
    learning_rate: float = 1e-3
    train_fraction: float = 0.7


@dataclass
class AgentParams:
    train_scenario: int = 2
    alpha: float = 1.0
    gamma: float = 0.9
    total_steps: int = 10_000
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_fraction: float = 0.2
    replay_capacity: int = 10_000
    batch_size: int = 32
    target_sync_steps: int = 500
    learning_rate: float = 1e-3
    threshold_step_m: float = 0.01
    threshold_max_m: float = 200.0
    # None: start from the predictor's held-out max absolute error
    threshold_init_m: float | None = None
    observation: str = "margin"


@dataclass
class EvalParams:
    guard: str = "substitute"
    merge_window: int = 0
    threshold_grid: list[float] = field(default_factory=evaluation.default_threshold_grid)


@dataclass
class RunConfig:
    seed: int = 0
    synth: data.SynthConfig = field(default_factory=data.SynthConfig)
    attack: AttackParams = field(default_factory=AttackParams)
    predictor: PredictorParams = field(default_factory=PredictorParams)
    agent: AgentParams = field(default_factory=AgentParams)
    evaluation: EvalParams = field(default_factory=EvalParams)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        parts = {"synth": data.SynthConfig, "attack": AttackParams, "predictor": PredictorParams,
                 "agent": AgentParams, "evaluation": EvalParams}
        unknown = set(d) - set(parts) - {"seed"}
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        kwargs = {"seed": int(d.get("seed", 0))}
        for name, klass in parts.items():
            section = d.get(name, {})
            allowed = {f.name for f in fields(klass)}
            bad = set(section) - allowed
            if bad:
                raise ValueError(f"unknown keys in [{name}]: {sorted(bad)}")
            kwargs[name] = klass(**section)
        return cls(**kwargs)

    # one seed drives everything; each stage gets its own stream
    def stage_seed(self, stage: str) -> int:
        offsets = {"synth": 0, "attack": 1, "predictor": 2, "agent": 3}
        return self.seed * 10 + offsets[stage]


@dataclass
class Layout:
    root: Path

    @property
    def trace(self) -> Path:
        return self.root / "trace.csv"

    @property
    def scenarios(self) -> Path:
        return self.root / "scenarios"

    @property
    def manifest(self) -> Path:
        return self.scenarios / "manifest.json"

    @property
    def models(self) -> Path:
        return self.root / "models"

    @property
    def predictor(self) -> Path:
        return self.models / "predictor.json"

    @property
    def validation(self) -> Path:
        return self.models / "validation_report.json"

    @property
    def agent(self) -> Path:
        return self.models / "agent.json"

    @property
    def detections(self) -> Path:
        return self.root / "detections"

    @property
    def reports(self) -> Path:
        return self.root / "reports"


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    mlp.atomic_write_text(path, mlp.dumps_json(obj))


# -- commands ------------------------------------------------------------------

def cmd_synth(cfg: RunConfig, out: Layout) -> Path:
    synth = data.SynthConfig(**{**asdict(cfg.synth), "rng_seed": cfg.stage_seed("synth")})
    trace = data.generate_synthetic_trace(synth)
    out.root.mkdir(parents=True, exist_ok=True)
    data.save_trace(trace, out.trace)
    log.info("wrote %s (%d records)", out.trace, len(trace))
    return out.trace


def cmd_inject(cfg: RunConfig, out: Layout, trace_path: Path | None = None) -> Path:
    trace_path = _require(trace_path or out.trace, "clean trace")
    trace = data.load_trace(trace_path)
    a = cfg.attack
    sset = attack.generate_scenario_set(
        trace, cfg.stage_seed("attack"), attack.attack_counts(a.max_attacks, a.min_attacks),
        a.min_gap, (a.shift_min_m, a.shift_max_m))
    path = attack.write_scenario_set(sset, out.scenarios, source_trace=str(trace_path.name))
    log.info("wrote %d scenarios to %s", len(sset.scenarios), out.scenarios)
    return path


def cmd_train_predictor(cfg: RunConfig, out: Layout, trace_path: Path | None = None) -> predictor.ValidationReport:
    trace = data.load_trace(_require(trace_path or out.trace, "clean trace"))
    x, y = predictor.raw_rows(trace)
    p = cfg.predictor
    tc = mlp.TrainConfig(epochs=p.epochs, batch_size=p.batch_size, rng_seed=cfg.stage_seed("predictor"),
                         learning_rate=p.learning_rate)
    net, stats, report, history = predictor.train_predictor(x, y, tc, p.train_fraction)
    out.models.mkdir(parents=True, exist_ok=True)
    mlp.save_model(net, stats, out.predictor, role=predictor.ROLE)
    _write_json(out.validation, {**report.to_dict(), "final_train_mae": history[-1], "epochs": p.epochs,
                                 "n_rows": len(x)})
    log.info("predictor: rmse=%.6g m max_abs_error=%.6g m", report.rmse_m, report.max_abs_error_m)
    return report


def _load_predictor(out: Layout):
    net, stats = mlp.load_model(_require(out.predictor, "predictor model"))
    if stats is None:
        raise ValueError(f"{out.predictor}: model carries no normalization stats")
    return net, stats


def _scored(scenario: attack.Scenario, net, stats, guard: str) -> tuple[np.ndarray, np.ndarray]:
    """DD and labels over the steps the detector can score (all but the first)."""
    pred = detector.predict_trace(scenario.trace, net, stats, guard)
    dd = np.abs(pred - scenario.trace.step_distance_m[1:])
    return dd, scenario.labels[1:]


def cmd_train_agent(cfg: RunConfig, out: Layout, train_scenario: int | None = None) -> rl.AgentResult:
    net, stats = _load_predictor(out)
    sset = attack.read_scenario_set(_require(out.manifest, "scenario manifest"))
    idx = train_scenario if train_scenario is not None else cfg.agent.train_scenario
    try:
        scenario = sset[idx]
    except KeyError:
        raise ValueError(f"training scenario {idx} not in manifest") from None
    dd, labels = _scored(scenario, net, stats, cfg.evaluation.guard)
    params = asdict(cfg.agent)
    params.pop("train_scenario")
    if params["threshold_init_m"] is None:
        report = json.loads(_require(out.validation, "validation report").read_text(encoding="utf-8"))
        params["threshold_init_m"] = float(report["max_abs_error_m"])
    qcfg = rl.QLearningConfig(**params, rng_seed=cfg.stage_seed("agent"))
    result = rl.train_agent(dd, labels, qcfg)
    payload = result.to_dict()
    payload["train_scenario"] = idx
    _write_json(out.agent, payload)
    log.info("agent: threshold=%.4f m after %d steps (scenario %d)", result.threshold.threshold_m,
             qcfg.total_steps, idx)
    return result


def _load_threshold(out: Layout) -> tuple[float, int]:
    d = json.loads(_require(out.agent, "agent file").read_text(encoding="utf-8"))
    return float(d["threshold_m"]), int(d.get("train_scenario", 2))


def cmd_detect(cfg: RunConfig, out: Layout, trace_path: Path, dest: Path | None = None,
               threshold_m: float | None = None) -> detector.DetectionSeries:
    net, stats = _load_predictor(out)
    if threshold_m is None:
        threshold_m, _ = _load_threshold(out)
    trace = data.load_trace(_require(trace_path, "trace"))
    series = detector.run_detection(trace, net, stats, threshold_m, cfg.evaluation.guard)
    dest = dest or out.detections / (trace_path.stem + "_detections.csv")
    dest.parent.mkdir(parents=True, exist_ok=True)
    detector.write_detection_csv(series, dest)
    log.info("wrote %s: %d of %d steps flagged", dest, int(series.flagged.sum()), len(series))
    return series


def cmd_evaluate(cfg: RunConfig, out: Layout, train_scenario: int | None = None) -> list[dict]:
    net, stats = _load_predictor(out)
    threshold_m, trained_on = _load_threshold(out)
    if train_scenario is not None:
        trained_on = train_scenario
    sset = attack.read_scenario_set(_require(out.manifest, "scenario manifest"))
    ev = cfg.evaluation
    out.detections.mkdir(parents=True, exist_ok=True)
    (out.reports / "pr").mkdir(parents=True, exist_ok=True)
    results, all_dd, all_labels = [], [], []
    for sc in sset.scenarios:
        if sc.index == trained_on:
            continue
        series = detector.run_detection(sc.trace, net, stats, threshold_m, ev.guard)
        labels = sc.labels[1:]
        detector.write_detection_csv(series, out.detections / f"scenario_{sc.index:02d}.csv")
        results.append(evaluation.score_scenario(sc.index, series.flagged, labels, ev.merge_window))
        evaluation.write_pr_csv(evaluation.pr_curve(series.dd_m, labels, ev.threshold_grid),
                                out.reports / "pr" / f"scenario_{sc.index:02d}.csv")
        all_dd.append(series.dd_m)
        all_labels.append(labels)
    rows = evaluation.scenario_report(results)
    evaluation.write_report_csv(rows, out.reports / "report.csv")
    evaluation.write_report_json(results, out.reports / "report.json",
                                 {"threshold_m": threshold_m, "train_scenario": trained_on,
                                  "merge_window": ev.merge_window, "guard": ev.guard})
    evaluation.write_pr_csv(evaluation.pr_curve(np.concatenate(all_dd), np.concatenate(all_labels),
                                                ev.threshold_grid), out.reports / "pr_curve.csv")
    for r in rows:
        log.info("scenario %2d  recall %6.2f%%  precision %6.2f%%  accuracy %6.2f%%  f1 %6.2f%%",
                 r["scenario"], r["recall_pct"], r["precision_pct"], r["accuracy_pct"], r["f1_pct"])
    return rows


def run_pipeline(cfg: RunConfig, out: Layout) -> list[dict]:
    cmd_synth(cfg, out)
    cmd_inject(cfg, out)
    cmd_train_predictor(cfg, out)
    cmd_train_agent(cfg, out)
    return cmd_evaluate(cfg, out)


# -- argument handling ---------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive(kind):
    def parse(text):
        try:
            value = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a valid {kind.__name__}: {text!r}") from None
        if value <= 0:
            raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
        return value
    return parse


def _seed(text):
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=argparse.SUPPRESS, help="JSON run configuration")
    common.add_argument("--seed", type=_seed, default=argparse.SUPPRESS, help="master RNG seed")
    common.add_argument("--out", type=Path, default=argparse.SUPPRESS, help="output directory (default: run)")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    p = _Parser(prog="spoofrl", description=__doc__.splitlines()[0], parents=[common])
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("synth", parents=[common], help="generate a clean synthetic trace")
    s.add_argument("--duration", type=_positive(float), help="seconds of driving")
    s.add_argument("--rate", type=_positive(float), help="sample rate in Hz")

    s = sub.add_parser("inject", parents=[common], help="create the ten attack scenarios")
    s.add_argument("--trace", type=Path, help="clean trace CSV (default: <out>/trace.csv)")

    s = sub.add_parser("train-predictor", parents=[common], help="train the distance predictor")
    s.add_argument("--trace", type=Path, help="clean trace CSV (default: <out>/trace.csv)")
    s.add_argument("--epochs", type=_positive(int))

    s = sub.add_parser("train-agent", parents=[common], help="train the threshold agent")
    s.add_argument("--train-scenario", type=int)
    s.add_argument("--steps", type=_positive(int), help="total environment steps")

    s = sub.add_parser("detect", parents=[common], help="run detection on one trace")
    s.add_argument("--trace", type=Path, required=True)
    s.add_argument("--dest", type=Path, help="detection CSV to write")
    s.add_argument("--threshold", type=float, help="override the agent's threshold (m)")

    s = sub.add_parser("evaluate", parents=[common], help="score every held-out scenario")
    s.add_argument("--train-scenario", type=int, help="scenario to exclude (default: the agent's)")
    s.add_argument("--merge-window", type=int, help="merge flags within this many steps (0 = off)")

    s = sub.add_parser("pipeline", parents=[common], help="run all stages end to end")
    s.add_argument("--duration", type=_positive(float))
    s.add_argument("--epochs", type=_positive(int))

    sub.add_parser("config", parents=[common], help="print the effective configuration as JSON")
    return p


def load_config(args) -> RunConfig:
    path = getattr(args, "config", None)
    if path is None:
        cfg = RunConfig()
    else:
        try:
            cfg = RunConfig.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except FileNotFoundError:
            raise FileNotFoundError(f"config not found: {path}") from None
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "duration", None) is not None:
        cfg.synth = data.SynthConfig(**{**asdict(cfg.synth), "duration_s": args.duration})
    if getattr(args, "rate", None) is not None:
        cfg.synth = data.SynthConfig(**{**asdict(cfg.synth), "sample_rate_hz": args.rate})
    if getattr(args, "epochs", None) is not None:
        cfg.predictor.epochs = args.epochs
    if getattr(args, "steps", None) is not None:
        cfg.agent.total_steps = args.steps
    if getattr(args, "merge_window", None) is not None:
        cfg.evaluation.merge_window = args.merge_window
    return cfg


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(message)s")
    try:
        cfg = load_config(args)
        out = Layout(getattr(args, "out", None) or Path("run"))
        cmd = args.command
        if cmd == "synth":
            cmd_synth(cfg, out)
        elif cmd == "inject":
            cmd_inject(cfg, out, args.trace)
        elif cmd == "train-predictor":
            report = cmd_train_predictor(cfg, out, args.trace)
            print(json.dumps(report.to_dict()))
        elif cmd == "train-agent":
            result = cmd_train_agent(cfg, out, args.train_scenario)
            print(json.dumps({"threshold_m": result.threshold.threshold_m}))
        elif cmd == "detect":
            cmd_detect(cfg, out, args.trace, args.dest, args.threshold)
        elif cmd == "evaluate":
            _print_rows(cmd_evaluate(cfg, out, args.train_scenario))
        elif cmd == "pipeline":
            _print_rows(run_pipeline(cfg, out))
        elif cmd == "config":
            print(json.dumps(cfg.to_dict(), indent=1))
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL
    return EXIT_OK


def _print_rows(rows: list[dict]) -> None:
    print(",".join(evaluation.REPORT_COLUMNS))
    for r in rows:
        print(",".join([str(r["scenario"])] + [f"{r[c]:.2f}" for c in evaluation.REPORT_COLUMNS[1:]]))


if __name__ == "__main__":
    sys.exit(main())

import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st

from spoofrl.evaluation import (ConfusionMatrix, MetricSet, confusion, default_threshold_grid, f1_score,
                                merge_events, metrics, pct, pr_curve, scenario_report, score_scenario,
                                write_report_csv)


def test_confusion_basic():
    assert confusion([1, 0, 0, 1], [1, 0, 0, 1]) == ConfusionMatrix(tp=2, fp=0, tn=2, fn=0)
    assert confusion([0] * 6, [1, 0, 1, 1, 0, 0]).fn == 3


def test_confusion_matches_loop_tally():
    rng = np.random.default_rng(5)
    flags, labels = rng.integers(0, 2, 1000), rng.integers(0, 2, 1000)
    tally = {"tp": 0, "fp": 0, "tn": 0, "fn": 0}
    for f, y in zip(flags.tolist(), labels.tolist()):
        key = ("t" if f == y else "f") + ("p" if f else "n")
        tally[key] += 1
    assert confusion(flags, labels) == ConfusionMatrix(**tally)


def test_length_mismatch():
    with pytest.raises(ValueError):
        confusion([1, 0], [1, 0, 0])


def test_perfect_detection():
    m = metrics(confusion([1, 0, 0, 1, 0], [1, 0, 0, 1, 0]))
    assert m.as_percent() == {"recall_pct": 100.0, "precision_pct": 100.0, "accuracy_pct": 100.0,
                              "f1_pct": 100.0}


@given(st.lists(st.booleans(), min_size=2).filter(lambda x: any(x) and not all(x)))
def test_self_confusion_is_perfect(x):
    assert metrics(confusion(x, x)) == MetricSet(1.0, 1.0, 1.0, 1.0)


@pytest.mark.parametrize("p, r, expected", [(0.9344, 1.0, 96.61), (0.9857, 1.0, 99.28)])
def test_reported_f1_pairs(p, r, expected):
    assert pct(f1_score(p, r)) == expected
    assert f"{pct(f1_score(p, r)):.2f}" == f"{expected:.2f}"


def test_conventions():
    m = metrics(ConfusionMatrix(tp=0, fp=0, tn=10, fn=2))
    assert m.precision == 1.0 and m.recall == 0.0 and m.f1 == 0.0
    assert f1_score(0.0, 0.0) == 0.0
    with pytest.raises(ValueError):
        metrics(ConfusionMatrix(tp=0, fp=1, tn=10, fn=0))


@given(st.integers(1, 50), st.integers(0, 50), st.integers(0, 5000), st.integers(0, 50))
def test_emitted_f1_consistent(tp, fp, tn, fn):
    row = metrics(ConfusionMatrix(tp, fp, tn, fn)).as_percent()
    p, r = row["precision_pct"] / 100, row["recall_pct"] / 100
    assert abs(f1_score(p, r) - row["f1_pct"] / 100) <= 5e-5 + 1e-12
    assert abs(row["f1_pct"] / 100 - metrics(ConfusionMatrix(tp, fp, tn, fn)).f1) < 2e-4


def test_pr_curve_extremes():
    dd = np.array([0.1, 0.2, 60.0, 0.05, 90.0])
    labels = np.array([0, 0, 1, 0, 1])
    lo, hi = pr_curve(dd, labels, [0.0, 100.0])
    assert lo.recall == 1.0
    assert hi.recall == 0.0 and hi.precision == 1.0


@given(st.integers(0, 10_000))
def test_pr_recall_non_increasing(seed):
    rng = np.random.default_rng(seed)
    dd = np.abs(rng.normal(size=200)) * rng.choice([1, 100], size=200)
    labels = (dd > 50).astype(int)
    labels[0] = 1
    points = pr_curve(dd, labels, default_threshold_grid())
    recalls = [p.recall for p in points]
    assert all(a >= b for a, b in zip(recalls, recalls[1:]))
    # cross-check one grid point against direct re-thresholding
    t = points[30].threshold_m
    m = metrics(confusion(dd > t, labels))
    assert (points[30].precision, points[30].recall) == pytest.approx((m.precision, m.recall))


def test_pr_grid_validated():
    with pytest.raises(ValueError):
        pr_curve([1.0], [1], [2.0, 1.0])


def test_merge_events():
    assert merge_events([1, 1, 0, 1, 0, 0, 1, 1], window=2).astype(int).tolist() == [1, 0, 0, 1, 0, 0, 1, 0]
    flags = [1, 1, 0, 0]
    assert score_scenario(1, flags, [1, 0, 0, 0], merge_window=2).confusion.fp == 0
    assert score_scenario(1, flags, [1, 0, 0, 0]).confusion.fp == 1


def test_report_rows_and_csv(tmp_path):
    results = [score_scenario(i, [1, 0, 0, 1], [1, 0, 0, 1]) for i in (1, 3, 4)]
    rows = scenario_report(results)
    assert [r["scenario"] for r in rows] == [1, 3, 4]
    write_report_csv(rows, tmp_path / "r.csv")
    with open(tmp_path / "r.csv") as f:
        got = list(csv.reader(f))
    assert got[0] == ["scenario", "recall_pct", "precision_pct", "accuracy_pct", "f1_pct"]
    assert got[1] == ["1", "100.00", "100.00", "100.00", "100.00"]

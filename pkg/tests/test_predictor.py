import numpy as np
import pytest

from spoofrl.data import NormalizationStats, apply_normalization, generate_synthetic_trace
from spoofrl.mlp import MlpNetwork, TrainConfig
from spoofrl.predictor import (FEATURES, PREDICTOR_LAYERS, PredictorInput, build_predictor, make_training_rows,
                               predict_distance, predict_distances, raw_rows, train_predictor,
                               validation_report)

from conftest import constant_speed_config, stationary_trace

STATS = NormalizationStats(FEATURES, (0.0, -100.0, 0.0, 0.0), (100.0, 100.0, 60.0, 0.3))


def test_build_predictor():
    net = build_predictor(3)
    assert net.layer_sizes == PREDICTOR_LAYERS == (4, 16, 8, 4, 1)
    assert net.n_params == 257
    assert np.array_equal(net.params, build_predictor(3).params)


def test_row_count(short_trace):
    x, y = raw_rows(short_trace)
    assert x.shape == (len(short_trace) - 2, 4) and y.shape == (len(short_trace) - 2,)
    assert np.array_equal(x[1:, 3], y[:-1])


def test_stationary_targets_zero():
    _, y = raw_rows(stationary_trace(20))
    assert np.all(y == 0)


def test_constant_speed_targets_equal():
    _, y = raw_rows(generate_synthetic_trace(constant_speed_config(12.0)))
    assert np.allclose(y, y[0], rtol=1e-6)


def test_too_short():
    with pytest.raises(ValueError):
        raw_rows(stationary_trace(2))


def test_training_rows_scaled(short_trace):
    x, y = make_training_rows(short_trace, STATS)
    raw_x, raw_y = raw_rows(short_trace)
    assert np.allclose(x[:, 3], raw_x[:, 3] / 0.3)
    assert np.allclose(y, raw_y / 0.3)


def test_zero_network_predicts_distance_min():
    stats = NormalizationStats(FEATURES, (0.0, -100.0, 0.0, 0.05), (100.0, 100.0, 60.0, 0.3))
    net = MlpNetwork(PREDICTOR_LAYERS)
    out = predict_distances(net, np.random.default_rng(0).uniform(size=(10, 4)), stats)
    assert np.all(out == 0.05)


def test_negative_output_clamped():
    net = MlpNetwork(PREDICTOR_LAYERS)
    net.biases[-1][0] = -5.0
    assert predict_distance(net, PredictorInput(0.5, 0.5, 0.5, 0.5), STATS) == 0.0


def test_non_finite_input_rejected():
    with pytest.raises(ValueError):
        PredictorInput(0.1, float("nan"), 0.0, 0.0)


@pytest.fixture(scope="module")
def trained(short_trace):
    x, y = raw_rows(short_trace)
    net, stats, report, hist = train_predictor(x, y, TrainConfig(epochs=15, rng_seed=1))
    return x, y, net, stats, report, hist


def test_report_matches_brute_force(trained):
    from spoofrl.data import split_train_validation

    x, y, net, stats, report, _ = trained
    _, va = split_train_validation(len(x), 0.7, 1)
    worst, sq = 0.0, 0.0
    for i in va:
        p = predict_distance(net, PredictorInput(*apply_normalization(x[i], stats)), stats)
        worst = max(worst, abs(p - y[i]))
        sq += (p - y[i]) ** 2
    assert report.n_samples == len(va)
    assert report.max_abs_error_m == pytest.approx(worst, rel=1e-12)
    assert report.rmse_m == pytest.approx(np.sqrt(sq / len(va)), rel=1e-9)
    assert report.max_abs_error_m >= report.rmse_m


def test_training_rows_predicted_within_bound(trained):
    x, y, net, stats, report, hist = trained
    assert hist[-1] < hist[0]
    assert report.max_abs_error_m < 0.5
    err = np.abs(predict_distances(net, apply_normalization(x, stats), stats) - y)
    assert np.quantile(err, 0.99) <= report.max_abs_error_m


def test_validation_report_direct():
    net = MlpNetwork((4, 1), np.array([0, 0, 0, 0, 0.5]))
    stats = NormalizationStats(FEATURES, (0, 0, 0, 0), (1, 1, 1, 2.0))
    rep = validation_report(net, np.zeros((3, 4)), np.array([1.0, 0.0, 2.0]), stats)
    assert rep.max_abs_error_m == 1.0
    assert rep.rmse_m == pytest.approx(np.sqrt(2 / 3))

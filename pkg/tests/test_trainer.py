import math

import numpy as np
import numpy.testing as npt
import pytest

from r2n import dataset as ds
from r2n.models import ModelSpec, build_model, decode_angle
from r2n.trainer import (TrainConfig, TrainingDiverged, dataset_loss, evaluate_angle, evaluate_classification,
                         predict_normalized, rmse_degrees, train)

from oracles import uniform_rmse_constant_predictor


def toy_split(n, seed, name="train"):
    rng = np.random.default_rng(seed)
    images = rng.random((n, 1, 28, 28)).astype(np.float32)
    theta = rng.uniform(-math.pi / 2, math.pi / 2, n)
    digits = rng.integers(0, 10, n)
    return ds.Split(name, np.arange(n), theta, digits, images)


def toy_splits(n_train=64, seed=0):
    return ds.SplitSet(toy_split(n_train, seed), toy_split(32, seed + 1, "validation"),
                       toy_split(32, seed + 2, "test"), seed)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(task="segmentation")
    with pytest.raises(ValueError):
        TrainConfig(lr=-1.0)
    assert TrainConfig().epochs == 160 and TrainConfig().batch_size == 128


def test_rmse_degrees():
    t = np.array([0.1, -0.4, 1.0])
    assert rmse_degrees(t, t) == 0.0
    assert rmse_degrees(np.zeros(1), np.array([math.pi / 2])) == pytest.approx(90.0)


def test_constant_predictor_matches_closed_form():
    theta = ds.draw_splits(0).test.theta
    rmse = rmse_degrees(np.zeros_like(theta), theta)
    assert abs(rmse - uniform_rmse_constant_predictor(-90, 90)) < 2.0


def test_zero_head_model_is_the_constant_predictor():
    model = build_model(ModelSpec("two-fc"))
    model.zero_head()
    split = toy_split(50, 3)
    assert evaluate_angle(model, split) == pytest.approx(rmse_degrees(np.zeros(50), split.theta))


def test_evaluation_is_side_effect_free_and_matches_raw_outputs():
    model = build_model(ModelSpec("cnn"))
    split = toy_split(40, 4)
    a, b = evaluate_angle(model, split), evaluate_angle(model, split)
    assert a == b
    direct = rmse_degrees(decode_angle(predict_normalized(model, split.images)), split.theta)
    assert a == pytest.approx(direct, rel=1e-10)


def test_empty_split_is_an_error():
    with pytest.raises(ValueError):
        evaluate_angle(build_model(ModelSpec("two-fc")), toy_split(0, 0))


def test_classification_accuracy():
    model = build_model(ModelSpec("classifier"))
    split = toy_split(30, 5)
    model.rest["fc4"].params["weight"][...] = 0
    model.rest["fc4"].params["bias"][...] = np.eye(10)[1]
    split.digits = np.arange(30) % 10
    assert evaluate_classification(model, split) == pytest.approx(0.1)
    split.digits[:] = 1
    assert evaluate_classification(model, split) == 1.0


def test_zero_learning_rate_keeps_parameters():
    model = build_model(ModelSpec("cnn"))
    before = [p.copy() for p in model.parameters()]
    train(model, toy_splits(), TrainConfig(epochs=2, batch_size=16, lr=0.0))
    for a, b in zip(before, model.parameters()):
        npt.assert_array_equal(a, b)


def test_one_epoch_on_two_samples_reduces_loss():
    model = build_model(ModelSpec("two-fc"))
    two = toy_split(2, 6)
    two.theta[:] = [1.4, 1.5]
    splits = ds.SplitSet(two, two, two, 0)
    before = dataset_loss(model, two, "angle-regression")
    train(model, splits, TrainConfig(epochs=1, batch_size=2, lr=1e-3))
    assert dataset_loss(model, two, "angle-regression") < before


def test_history_and_csv(tmp_path):
    model = build_model(ModelSpec("two-fc"))
    csv = tmp_path / "m.csv"
    res = train(model, toy_splits(), TrainConfig(epochs=3, batch_size=16, lr=0.01), metrics_csv=csv)
    assert [r.epoch for r in res.history] == [1, 2, 3]
    lines = csv.read_text().splitlines()
    assert lines[0] == "epoch,train_loss,val_rmse_degrees"
    assert len(lines) == 4
    assert all(r.val_rmse_degrees >= 0 for r in res.history)


def test_eval_every_and_classification_columns(tmp_path):
    model = build_model(ModelSpec("stn-two-fc"))
    csv = tmp_path / "m.csv"
    res = train(model, toy_splits(), TrainConfig(epochs=3, batch_size=32, task="stn-classification",
                                                 eval_every=2), metrics_csv=csv)
    assert [r.epoch for r in res.history] == [2, 3]
    assert csv.read_text().splitlines()[0] == "epoch,train_loss,val_rmse_degrees,val_accuracy"
    assert all(0 <= r.val_accuracy <= 1 for r in res.history)


def test_best_validation_parameters_are_restored():
    model = build_model(ModelSpec("two-fc"))
    res = train(model, toy_splits(), TrainConfig(epochs=4, batch_size=16, lr=0.05))
    best = min(res.history, key=lambda r: r.val_rmse_degrees)
    assert res.best_epoch == best.epoch
    assert evaluate_angle(model, toy_splits().validation) == pytest.approx(best.val_rmse_degrees)
    assert len(res.last_params) == len(model.parameters())


def test_training_is_deterministic(tmp_path):
    runs = []
    for k in range(2):
        model = build_model(ModelSpec("cnn", seed=7))
        train(model, toy_splits(), TrainConfig(epochs=2, batch_size=16, seed=7), metrics_csv=tmp_path / f"{k}.csv")
        runs.append([p.copy() for p in model.parameters()])
    assert (tmp_path / "0.csv").read_bytes() == (tmp_path / "1.csv").read_bytes()
    for a, b in zip(*runs):
        npt.assert_array_equal(a, b)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_reported():
    model = build_model(ModelSpec("two-fc"))
    model.fc2.params["weight"][0, 0] = np.nan
    with pytest.raises(TrainingDiverged, match="fc2.weight"):
        train(model, toy_splits(), TrainConfig(epochs=1, batch_size=16))

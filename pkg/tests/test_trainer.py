"""Tests for the training loop."""

from __future__ import annotations

from dataclasses import replace
import math

import numpy as np
import pandas as pd
import pytest

from mftraj.autodiff import Tensor
from mftraj.const import LOSS_CURVE_COLUMNS
from mftraj.exceptions import InputError
from mftraj.evaluation import evaluate
from mftraj.model import MFTrajModel, ModelConfig
from mftraj.scene import SyntheticSpec, generate_synthetic
from mftraj.trainer import (
    Adam,
    learning_rate_at,
    scene_gradients,
    train,
    write_loss_curve,
)


def test_learning_rate_schedule():
    config = ModelConfig(epochs=8, learning_rate=1e-3, learning_rate_final=1e-4, lr_decay_fraction=0.75)
    rates = [learning_rate_at(config, epoch, 8) for epoch in range(8)]
    assert rates == [1e-3] * 6 + [1e-4] * 2


def test_adam_first_step_moves_by_learning_rate():
    weight = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    optimizer = Adam([("w", weight)])
    optimizer.step([np.array([0.5, -3.0])], 0.1)
    np.testing.assert_allclose(weight.values, [0.9, -1.9], atol=1e-7)
    assert optimizer.step_count == 1
    assert set(optimizer.state()) == {"adam.m.w", "adam.v.w"}


def test_training_reduces_loss(small_config, small_scenes):
    config = replace(small_config, epochs=6, learning_rate=1e-2, learning_rate_final=1e-2)
    result = train(small_scenes, config)
    assert len(result.curve) == 6
    assert result.curve[-1].train_loss < result.curve[0].train_loss
    assert result.step == 6 * math.ceil(len(small_scenes) / config.batch_size)


def test_training_is_independent_of_workers(small_config, small_scenes):
    serial = train(small_scenes, small_config)
    threaded = train(small_scenes, small_config, workers=3)
    assert [r.train_loss for r in serial.curve] == [r.train_loss for r in threaded.curve]
    for (name, left), (_, right) in zip(
        serial.model.named_parameters(), threaded.model.named_parameters()
    ):
        np.testing.assert_array_equal(left.values, right.values, err_msg=name)


def test_zero_epochs_returns_initial_model(small_config, small_scenes):
    result = train(small_scenes, small_config, epochs=0)
    assert result.curve == []
    assert result.step == 0
    assert math.isnan(result.final_loss)


def test_validation_loss_is_recorded(small_config, small_scenes):
    result = train(small_scenes[:4], small_config, val_scenes=small_scenes[4:])
    assert all(math.isfinite(record.val_loss) for record in result.curve)
    assert math.isnan(train(small_scenes[:4], small_config, epochs=1).curve[0].val_loss)


def test_standardizer_is_fitted(small_config, small_scenes):
    result = train(small_scenes, small_config, epochs=0)
    assert np.any(result.model.standardizer.mean != 0.0)


def test_training_needs_labeled_scenes(small_config, small_scenes):
    with pytest.raises(InputError):
        train([], small_config)
    unlabeled = [replace(scene, target_future=None) for scene in small_scenes]
    with pytest.raises(InputError, match="ground-truth"):
        train(unlabeled, small_config)


def test_write_loss_curve(tmp_path, small_config, small_scenes):
    result = train(small_scenes, small_config)
    path = tmp_path / "loss.csv"
    write_loss_curve(result.curve, path)
    table = pd.read_csv(path)
    assert list(table.columns) == LOSS_CURVE_COLUMNS
    assert table["epoch"].tolist() == [1, 2]


@pytest.mark.slow
def test_overfits_lane_change_scenes():
    config = ModelConfig(epochs=500, seed=0)
    scenes = generate_synthetic(SyntheticSpec("lane_change", scenes=32, noise_std=0.0, seed=0))
    result = train(scenes, config)
    assert result.final_loss < 0.05
    assert evaluate(result.model, scenes).min_ade_m < 0.3


@pytest.mark.parametrize("beta_kl", [0.0, 0.5])
def test_scene_gradients_cover_every_parameter(small_config, small_scenes, beta_kl):
    model = MFTrajModel(replace(small_config, beta_kl=beta_kl))
    prepared = model.prepare(small_scenes[0])
    loss, gradients = scene_gradients(model, prepared, np.random.default_rng(0))
    assert math.isfinite(loss)
    named = list(model.named_parameters())
    assert len(gradients) == len(named)
    for (name, tensor), gradient in zip(named, gradients):
        assert gradient is not None, name
        assert gradient.shape == tensor.values.shape, name
        assert np.isfinite(gradient).all(), name
    assert any(np.any(gradient != 0.0) for gradient in gradients)

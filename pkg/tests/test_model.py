"""Tests for the MFTraj network."""

from __future__ import annotations

from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

from mftraj.autodiff import Tensor
from mftraj.const import ABLATION_MODELS, PREDICTION_COLUMNS
from mftraj.exceptions import CheckpointError, ConfigError, InputError
from mftraj.model import (
    MODE_EVAL,
    MODE_TRAIN,
    MFTrajModel,
    ModelConfig,
    position_features,
    predict,
    prepare_for_prediction,
    trajectory_loss,
    write_predictions_csv,
)
from mftraj.scene import drop_frames

from .conftest import make_scene


def shifted(scene, offset):
    moved = scene.with_tracks(scene.all_positions() + offset, scene.all_valid())
    return replace(moved, target_future=scene.target_future + offset)


def test_forward_shape_and_determinism(small_config, small_scenes):
    model = MFTrajModel(small_config)
    first = model.forward(small_scenes[0]).prediction.values
    second = model.forward(small_scenes[0], MODE_EVAL).prediction.values
    assert first.shape == (small_config.t_f, 2)
    np.testing.assert_array_equal(first, second)


def test_same_seed_same_model(small_config, small_scenes):
    first = MFTrajModel(small_config).forward(small_scenes[1]).prediction.values
    second = MFTrajModel(small_config).forward(small_scenes[1]).prediction.values
    np.testing.assert_array_equal(first, second)
    other = MFTrajModel(replace(small_config, seed=1)).forward(small_scenes[1]).prediction.values
    assert not np.array_equal(first, other)


def test_prediction_is_translation_equivariant(small_config, small_scenes):
    model = MFTrajModel(small_config)
    offset = np.array([250.0, -75.0])
    for scene in small_scenes[:3]:
        base = model.forward(scene).prediction.values
        moved = model.forward(shifted(scene, offset)).prediction.values
        np.testing.assert_allclose(moved, base + offset, atol=1e-6)


def test_prediction_starts_from_last_position(small_config, small_scenes):
    scene = small_scenes[0]
    model = MFTrajModel(small_config)
    prepared = model.prepare(scene)
    np.testing.assert_array_equal(prepared.anchor, scene.target.positions[-1])


def test_train_mode_is_seeded(small_config, small_scenes):
    model = MFTrajModel(small_config)
    prepared = model.prepare(small_scenes[0])
    first = model.forward(prepared, MODE_TRAIN, np.random.default_rng(4)).prediction.values
    second = model.forward(prepared, MODE_TRAIN, np.random.default_rng(4)).prediction.values
    np.testing.assert_array_equal(first, second)
    with pytest.raises(ConfigError):
        model.forward(prepared, MODE_TRAIN)
    with pytest.raises(ConfigError):
        model.forward(prepared, "sample")


@pytest.mark.parametrize("label", sorted(ABLATION_MODELS))
def test_ablation_variants_forward(label, small_config, small_scenes):
    model = MFTrajModel(small_config.with_ablation(label))
    result = model.forward(small_scenes[2])
    assert result.prediction.shape == (small_config.t_f, 2)
    assert np.isfinite(result.prediction.values).all()
    assert (result.kl is None) == (label == "A")


def test_ablation_flags_are_exclusive(small_config):
    config = small_config.with_ablation("E").with_ablation("D")
    assert config.disable_linformer
    assert not config.plain_gcn
    with pytest.raises(ConfigError):
        small_config.with_ablation("G")


def test_ablations_change_parameter_count(small_config):
    full = MFTrajModel(small_config).parameter_count()
    assert MFTrajModel(small_config.with_ablation("A")).parameter_count() < full
    assert MFTrajModel(small_config.with_ablation("C")).parameter_count() < full
    assert MFTrajModel(small_config.with_ablation("B")).parameter_count() == full


def test_plain_gcn_connects_agents_within_radius(small_config):
    target = [[float(step), 0.0] for step in range(8)]
    near = [[float(step), 5.0] for step in range(8)]
    far = [[float(step), 500.0] for step in range(8)]
    scene = make_scene(target, agents=[near, far])

    plain = MFTrajModel(replace(small_config, plain_gcn=True)).prepare(scene)
    np.testing.assert_array_equal(
        plain.mask,
        [[False, True, False], [True, False, False], [False, False, False]],
    )
    full = MFTrajModel(small_config).prepare(scene)
    np.testing.assert_array_equal(full.mask, ~np.eye(3, dtype=bool))


def test_plain_gcn_isolates_a_far_agent(small_config):
    target = [[float(step), 0.0] for step in range(8)]
    far = [[float(step), 500.0] for step in range(8)]
    scene = make_scene(target, agents=[far])
    prepared = MFTrajModel(replace(small_config, plain_gcn=True)).prepare(scene)
    assert not prepared.mask.any()
    result = MFTrajModel(replace(small_config, plain_gcn=True)).forward(scene)
    assert np.isfinite(result.prediction.values).all()


def test_horizon_mismatch(small_config, small_scenes):
    model = MFTrajModel(replace(small_config, t_f=6))
    with pytest.raises(ConfigError, match="predicts"):
        model.forward(small_scenes[0])
    model = MFTrajModel(replace(small_config, t_h=9))
    with pytest.raises(ConfigError, match="history"):
        model.forward(small_scenes[0])


def test_unimputed_target_is_rejected(small_config, small_scenes):
    dropped, _ = drop_frames(small_scenes[0], 2, 0)
    with pytest.raises(InputError, match="impute"):
        MFTrajModel(small_config).forward(dropped)


def test_prepare_for_prediction_imputes(small_config, small_scenes):
    scene = prepare_for_prediction(small_scenes[0], 0, drop=3, seed=1)
    assert scene.target.valid.all()
    assert prepare_for_prediction(small_scenes[0], 0) is small_scenes[0]
    MFTrajModel(small_config).forward(scene)


def test_predict_workers_agree(small_config, small_scenes):
    model = MFTrajModel(small_config)
    serial = predict(model, small_scenes, drop=2, seed=5)
    threaded = predict(model, small_scenes, drop=2, seed=5, workers=3)
    for left, right in zip(serial, threaded):
        np.testing.assert_array_equal(left, right)


def test_state_round_trip(small_config, small_scenes):
    model = MFTrajModel(small_config)
    other = MFTrajModel(replace(small_config, seed=8))
    other.load_state(model.state())
    np.testing.assert_array_equal(
        other.forward(small_scenes[3]).prediction.values,
        model.forward(small_scenes[3]).prediction.values,
    )


def test_load_state_checks_names_and_shapes(small_config):
    model = MFTrajModel(small_config)
    state = model.state()
    name = next(iter(dict(model.named_parameters())))
    with pytest.raises(CheckpointError):
        model.load_state({key: value for key, value in state.items() if key != name})
    state[name] = np.zeros((1, 1))
    with pytest.raises(CheckpointError):
        model.load_state(state)


def test_trajectory_loss_values():
    prediction = Tensor(np.zeros((2, 2)))
    target = np.array([[0.5, 0.0], [3.0, 0.0]])
    assert trajectory_loss(prediction, target).item() == pytest.approx(0.65625)
    with_kl = trajectory_loss(prediction, target, Tensor(2.0), beta_kl=0.5)
    assert with_kl.item() == pytest.approx(1.65625)


def test_position_features():
    target = [[0.0, 0.0], [1.0, 0.0], [3.0, 1.0]]
    agent = [[5.0, 0.0], [np.nan, np.nan], [6.0, 2.0]]
    displacements, offsets = position_features(make_scene(target, agents=[agent]))
    np.testing.assert_array_equal(displacements[0], [[0.0, 0.0], [1.0, 0.0], [2.0, 1.0]])
    np.testing.assert_array_equal(displacements[1], np.zeros((3, 2)))
    np.testing.assert_array_equal(offsets[1, 0, :, :], [[5.0, 0.0], [0.0, 0.0], [3.0, 1.0]])
    np.testing.assert_array_equal(offsets[0, 1], -offsets[1, 0])


def test_config_text_round_trip(small_config):
    config = replace(small_config, learning_rate=0.1 + 0.2, plain_gcn=True)
    assert ModelConfig.from_text(config.to_text()) == config


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        ModelConfig.from_mapping({"hidden": 3})


def test_write_predictions_csv(tmp_path, small_scenes):
    predictions = [np.arange(10.0).reshape(5, 2)]
    path = tmp_path / "pred.csv"
    write_predictions_csv(small_scenes[:1], predictions, path)
    table = pd.read_csv(path)
    assert list(table.columns) == PREDICTION_COLUMNS
    assert table["step"].tolist() == [1, 2, 3, 4, 5]
    assert table["x"].tolist() == [0.0, 2.0, 4.0, 6.0, 8.0]

"""Tests for checkpoint files."""

from __future__ import annotations

import numpy as np
import pytest

from mftraj.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from mftraj.const import CHECKPOINT_MAGIC
from mftraj.exceptions import CheckpointError
from mftraj.model import MFTrajModel
from mftraj.trainer import train


@pytest.fixture
def trained(small_config, small_scenes):
    """Model trained for one epoch."""
    return train(small_scenes, small_config, epochs=1)


def test_round_trip_is_byte_identical(tmp_path, trained, small_scenes):
    checkpoint = Checkpoint.from_training(trained)
    path = tmp_path / "model.ckpt"
    save_checkpoint(checkpoint, path)
    loaded = load_checkpoint(path)
    assert loaded.to_bytes() == path.read_bytes()
    assert loaded.config == trained.model.config
    assert loaded.step == trained.step
    model = loaded.to_model()
    np.testing.assert_array_equal(
        model.forward(small_scenes[0]).prediction.values,
        trained.model.forward(small_scenes[0]).prediction.values,
    )


def test_optimizer_moments_are_restored(trained):
    checkpoint = Checkpoint.from_bytes(Checkpoint.from_training(trained).to_bytes())
    model = checkpoint.to_model()
    optimizer = checkpoint.to_optimizer(model)
    assert optimizer.step_count == trained.optimizer.step_count
    for left, right in zip(optimizer.first, trained.optimizer.first):
        np.testing.assert_array_equal(left, right)


def test_model_only_checkpoint(small_config):
    model = MFTrajModel(small_config)
    checkpoint = Checkpoint.from_bytes(Checkpoint.from_model(model).to_bytes())
    assert checkpoint.step == 0
    assert not any(name.startswith("adam.") for name in checkpoint.tensors)
    assert "standardizer.mean" in checkpoint.tensors


def test_tensors_are_written_sorted(small_config):
    data = Checkpoint.from_model(MFTrajModel(small_config)).to_bytes()
    names = list(Checkpoint.from_bytes(data).tensors)
    assert names == sorted(names)


def test_bad_magic():
    with pytest.raises(CheckpointError, match="magic"):
        Checkpoint.from_bytes(b"NOTACKPT" + bytes(16))


def test_truncated_file(small_config):
    data = Checkpoint.from_model(MFTrajModel(small_config)).to_bytes()
    for cut in (len(CHECKPOINT_MAGIC) + 2, len(data) // 2, len(data) - 1):
        with pytest.raises(CheckpointError):
            Checkpoint.from_bytes(data[:cut])


def test_trailing_bytes(small_config):
    data = Checkpoint.from_model(MFTrajModel(small_config)).to_bytes()
    with pytest.raises(CheckpointError, match="Trailing"):
        Checkpoint.from_bytes(data + b"\x00")


def test_unsupported_format_version(small_config):
    data = Checkpoint.from_model(MFTrajModel(small_config)).to_bytes()
    patched = data.replace(b"format_version = 1.0.0", b"format_version = 2.0.0")
    assert patched != data
    with pytest.raises(CheckpointError, match="not supported"):
        Checkpoint.from_bytes(patched)


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "absent.ckpt")

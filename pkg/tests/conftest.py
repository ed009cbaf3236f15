"""Shared fixtures for mftraj tests."""

from __future__ import annotations

import numpy as np
import pytest

from mftraj.const import KIND_LANE_CHANGE
from mftraj.model import ModelConfig
from mftraj.scene import AgentTrack, SyntheticSpec, TrajectoryScene, generate_synthetic


def pytest_addoption(parser):
    """Add the --runslow switch."""
    parser.addoption("--runslow", action="store_true", default=False, help="run slow tests")


def pytest_configure(config):
    """Register the slow marker."""
    config.addinivalue_line("markers", "slow: long training run, needs --runslow")


def pytest_collection_modifyitems(config, items):
    """Skip slow tests unless --runslow is given."""
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def make_scene(
    target,
    agents=(),
    future=None,
    sample_rate_hz=10.0,
    scene_id="s0",
    first_frame=0,
):
    """Scene from plain coordinate lists; NaN rows of an agent are invalid."""
    target = np.asarray(target, dtype=float)
    frames = np.arange(first_frame, first_frame + target.shape[0])
    tracks = []
    for index, positions in enumerate(agents, start=1):
        positions = np.asarray(positions, dtype=float)
        valid = ~np.isnan(positions).any(axis=1)
        tracks.append(AgentTrack(f"a{index}", np.nan_to_num(positions), valid))
    return TrajectoryScene(
        scene_id,
        sample_rate_hz,
        frames,
        AgentTrack("t", target, np.ones(target.shape[0], bool)),
        tuple(tracks),
        None if future is None else np.asarray(future, dtype=float),
    )


@pytest.fixture
def small_config():
    """Tiny model configuration for fast tests."""
    return ModelConfig(
        t_h=7,
        t_f=5,
        behavior_hidden=8,
        position_hidden=8,
        latent_dim=4,
        attention_heads=2,
        proj_dim=4,
        max_agents=8,
        gn_groups=2,
        decoder_hidden=16,
        gcn_layers=2,
        lstm_layers=1,
        epochs=2,
        batch_size=4,
    )


@pytest.fixture
def small_scenes():
    """Synthetic lane-change scenes matching small_config."""
    spec = SyntheticSpec(
        KIND_LANE_CHANGE, scenes=6, agents=2, history_frames=8, future_frames=5, seed=3
    )
    return generate_synthetic(spec)

"""Diagnostics dumps for scenes: behavior features and proximity graphs."""

from __future__ import annotations

from collections.abc import Iterable
import logging
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from .behavior import BehaviorConfig, behavior_tensor
from .const import (
    ADJACENCY_COLUMNS,
    BEHAVIOR_FEATURES,
    COL_AGENT_ID,
    COL_FRAME,
    COL_SCENE_ID,
    FLOAT_FORMAT,
)
from .graph import adjacency_records, graph_series
from .scene import TrajectoryScene

_LOGGER = logging.getLogger(__name__)

FEATURE_COLUMNS = [COL_SCENE_ID, COL_AGENT_ID, COL_FRAME, *BEHAVIOR_FEATURES]


def scene_diagnostics(scene: TrajectoryScene) -> dict[str, Any]:
    """Return a summary of a scene."""
    valid = scene.all_valid()
    return {
        "scene_id": scene.scene_id,
        "agents": scene.n,
        "history_frames": scene.t_h + 1,
        "future_frames": scene.t_f,
        "observed_fraction": float(valid.mean()),
    }


def feature_frame(
    scenes: Iterable[TrajectoryScene], config: BehaviorConfig | None = None
) -> pd.DataFrame:
    """Raw behavior features, one row per present agent-frame."""
    records = []
    for scene in scenes:
        features = behavior_tensor(scene, config)
        present = scene.all_valid()
        for row, agent_id in enumerate(scene.agent_ids):
            for column in np.flatnonzero(present[row]):
                records.append(
                    (scene.scene_id, agent_id, int(scene.frames[column]), *features[row, column])
                )
    return pd.DataFrame.from_records(records, columns=FEATURE_COLUMNS)


def adjacency_frame(
    scenes: Iterable[TrajectoryScene], radius_m: float
) -> pd.DataFrame:
    """Per-frame edges (scene_id, frame, i, j, weight) with i < j as scene indices."""
    records = []
    for scene in scenes:
        records.extend(
            (scene.scene_id, frame, i, j, weight)
            for frame, i, j, weight in adjacency_records(graph_series(scene, radius_m))
        )
    return pd.DataFrame.from_records(records, columns=ADJACENCY_COLUMNS)


def write_feature_dump(
    scenes: Iterable[TrajectoryScene], path: str | Path, config: BehaviorConfig | None = None
) -> None:
    """Write the feature dump CSV."""
    table = feature_frame(scenes, config)
    table.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    _LOGGER.info("Wrote %d feature rows to %s", len(table), path)


def write_adjacency_dump(
    scenes: Iterable[TrajectoryScene], path: str | Path, radius_m: float
) -> None:
    """Write the adjacency dump CSV."""
    table = adjacency_frame(scenes, radius_m)
    table.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    _LOGGER.info("Wrote %d edges to %s", len(table), path)

"""Per-frame proximity graphs over scene agents."""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass
import logging

import numpy as np

from .const import COINCIDENT_WEIGHT_FLOOR_M, DEFAULT_RADIUS_M
from .exceptions import BoundsError, ConfigError, InputError
from .scene import TrajectoryScene

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ProximityGraph:
    """Distance-weighted symmetric adjacency of the agents valid at one frame.

    ``node_ids`` holds scene agent indices (0 = target); row ``k`` of
    ``adjacency`` belongs to agent ``node_ids[k]``.
    """

    frame: int
    node_ids: tuple[int, ...]
    radius_m: float
    adjacency: np.ndarray

    @property
    def size(self) -> int:
        """Node count."""
        return len(self.node_ids)

    def index_of(self, agent: int) -> int:
        """Row of a scene agent index in the adjacency."""
        try:
            return self.node_ids.index(agent)
        except ValueError as err:
            raise BoundsError(
                f"Agent {agent} is not a node of the graph at frame {self.frame}"
            ) from err

    def binary(self) -> np.ndarray:
        """1 where an edge exists, 0 elsewhere."""
        return (self.adjacency > 0).astype(np.float64)


def build_graph(
    positions: np.ndarray,
    valid: np.ndarray,
    radius_m: float = DEFAULT_RADIUS_M,
    frame: int = 0,
) -> ProximityGraph:
    """Build the proximity graph of one frame.

    ``positions`` is [agents, 2] and ``valid`` [agents]; invalid agents are left
    out. Edges join distinct agents within ``radius_m``; weights are the
    distances, floored so coincident agents keep a nonzero edge.
    """
    if not radius_m > 0:
        raise ConfigError(f"Radius must be positive, got {radius_m}")
    positions = np.asarray(positions, dtype=np.float64)
    valid = np.asarray(valid, dtype=bool)
    node_ids = tuple(int(index) for index in np.flatnonzero(valid))
    if not node_ids:
        raise InputError(f"Frame {frame} has no valid agent")
    points = positions[list(node_ids)]
    if not np.all(np.isfinite(points)):
        raise InputError(f"Frame {frame} has non-finite coordinates: {points.tolist()}")

    distances = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1)
    adjacency = np.where(
        distances <= radius_m, np.maximum(distances, COINCIDENT_WEIGHT_FLOOR_M), 0.0
    )
    np.fill_diagonal(adjacency, 0.0)
    adjacency.setflags(write=False)
    return ProximityGraph(frame, node_ids, float(radius_m), adjacency)


def graph_series(
    scene: TrajectoryScene, radius_m: float = DEFAULT_RADIUS_M
) -> list[ProximityGraph]:
    """One graph per history frame of the scene."""
    positions = scene.all_positions()
    valid = scene.all_valid()
    graphs = [
        build_graph(positions[:, column], valid[:, column], radius_m, int(frame))
        for column, frame in enumerate(scene.frames)
    ]
    _LOGGER.debug(
        "Scene %s: built %d graphs, max %d edges",
        scene.scene_id,
        len(graphs),
        max(int((graph.adjacency > 0).sum()) // 2 for graph in graphs),
    )
    return graphs


def neighbor_set(graph: ProximityGraph, agent: int) -> list[int]:
    """Scene agent indices adjacent to ``agent``."""
    row = graph.index_of(agent)
    return [graph.node_ids[column] for column in np.flatnonzero(graph.adjacency[row] > 0)]


def adjacency_records(graphs: Iterable[ProximityGraph]) -> list[tuple[int, int, int, float]]:
    """Flatten graphs to (frame, i, j, weight) rows for each edge with i < j."""
    records = []
    for graph in graphs:
        rows, columns = np.nonzero(np.triu(graph.adjacency))
        records.extend(
            (
                graph.frame,
                graph.node_ids[row],
                graph.node_ids[column],
                float(graph.adjacency[row, column]),
            )
            for row, column in zip(rows, columns)
        )
    return records

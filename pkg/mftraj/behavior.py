"""Centrality measures and behavior criteria over proximity graph series."""

from __future__ import annotations

from collections import deque
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
import logging
import math

import numpy as np

from .const import (
    BEHAVIOR_FEATURES,
    CENTRALITY_NAMES,
    DEFAULT_ALPHA_FRAC,
    DEFAULT_K_MAX,
    DEFAULT_KATZ_BETA,
    DEFAULT_RADIUS_M,
    EIGEN_MAX_ITERATIONS,
    EIGEN_TOLERANCE,
    EMPTY_GRAPH_EIGENVALUE,
    STANDARDIZER_STD_FLOOR,
)
from .exceptions import ConfigError, InputError, NumericError, ShapeError
from .graph import ProximityGraph, graph_series
from .scene import TrajectoryScene

_LOGGER = logging.getLogger(__name__)

# Column order of frame_centralities(); degree is temporal and handled apart.
FRAME_MEASURES = CENTRALITY_NAMES[1:]


@dataclass(frozen=True)
class BehaviorConfig:
    """Parameters of the centrality computation."""

    radius_m: float = DEFAULT_RADIUS_M
    k_max: int = DEFAULT_K_MAX
    alpha_frac: float = DEFAULT_ALPHA_FRAC
    beta: float = DEFAULT_KATZ_BETA
    instantaneous_degree: bool = False

    def __post_init__(self) -> None:
        """Validate ranges."""
        if not self.radius_m > 0:
            raise ConfigError(f"radius_m must be positive, got {self.radius_m}")
        if self.k_max < 1:
            raise ConfigError(f"k_max must be at least 1, got {self.k_max}")
        if not 0 <= self.alpha_frac < 1:
            raise ConfigError(f"alpha_frac must be in [0, 1), got {self.alpha_frac}")
        if not self.beta > 0:
            raise ConfigError(f"beta must be positive, got {self.beta}")


@dataclass(frozen=True)
class BehaviorCriteria:
    """Magnitude, tendency and curvature of a centrality series."""

    bmi: np.ndarray
    bti: np.ndarray
    bci: np.ndarray

    def stacked(self) -> np.ndarray:
        """Concatenate [bmi | bti | bci] along the last axis."""
        return np.concatenate([self.bmi, self.bti, self.bci], axis=-1)


def leading_eigenvalue(
    adjacency: np.ndarray,
    tolerance: float = EIGEN_TOLERANCE,
    max_iterations: int = EIGEN_MAX_ITERATIONS,
) -> float:
    """Largest-magnitude eigenvalue of a non-negative symmetric matrix.

    Power iteration on the shifted matrix A + sI, with s the largest row sum so
    that the Perron root dominates even on bipartite graphs. Each iteration
    squares the iterated matrix, so the subdominant part decays doubly
    exponentially; the eigenvalue is the Rayleigh quotient of the iterate.
    """
    adjacency = np.asarray(adjacency, dtype=np.float64)
    shift = float(adjacency.sum(axis=1).max(initial=0.0))
    if shift == 0.0:
        return 0.0
    power = adjacency + shift * np.eye(adjacency.shape[0])
    previous = math.inf
    for iteration in range(max_iterations):
        vector = power @ np.ones(adjacency.shape[0])
        norm = np.linalg.norm(vector)
        if not np.isfinite(norm) or norm == 0.0:
            break
        vector /= norm
        value = float(vector @ adjacency @ vector)
        if abs(value - previous) <= tolerance * max(1.0, abs(value)):
            _LOGGER.debug("Eigenvalue %.12g after %d squarings", value, iteration)
            return value
        previous = value
        power = power @ power
        power /= np.abs(power).max()
    raise NumericError(
        f"Power iteration did not converge in {max_iterations} iterations "
        f"for adjacency {adjacency.tolist()}"
    )


def _neighbor_counts(graph: ProximityGraph) -> np.ndarray:
    return (graph.adjacency > 0).sum(axis=1).astype(np.float64)


def closeness_all(graph: ProximityGraph) -> np.ndarray:
    """(|N| - 1) / sum of neighbor distances per node; 0 when |N| <= 1."""
    counts = _neighbor_counts(graph)
    totals = graph.adjacency.sum(axis=1)
    return np.where(counts > 1, (counts - 1) / np.where(totals > 0, totals, 1.0), 0.0)


def eigenvector_all(graph: ProximityGraph) -> np.ndarray:
    """Weighted neighbor distance sum per node divided by the leading eigenvalue."""
    value = leading_eigenvalue(graph.adjacency)
    if value < EMPTY_GRAPH_EIGENVALUE:
        return np.zeros(graph.size)
    return graph.adjacency.sum(axis=1) / value


def betweenness_all(graph: ProximityGraph) -> np.ndarray:
    """Hop-count betweenness over unordered pairs, by Brandes accumulation."""
    size = graph.size
    neighbors = [np.flatnonzero(row > 0) for row in graph.adjacency]
    centrality = np.zeros(size)
    for source in range(size):
        distance = np.full(size, -1)
        sigma = np.zeros(size)
        predecessors: list[list[int]] = [[] for _ in range(size)]
        distance[source] = 0
        sigma[source] = 1.0
        order = []
        queue = deque([source])
        while queue:
            node = queue.popleft()
            order.append(node)
            for other in neighbors[node]:
                if distance[other] < 0:
                    distance[other] = distance[node] + 1
                    queue.append(other)
                if distance[other] == distance[node] + 1:
                    sigma[other] += sigma[node]
                    predecessors[other].append(node)
        delta = np.zeros(size)
        for node in reversed(order):
            for previous in predecessors[node]:
                delta[previous] += sigma[previous] / sigma[node] * (1.0 + delta[node])
            if node != source:
                centrality[node] += delta[node]
    # every unordered pair was counted from both ends
    return centrality / 2.0


def _walk_powers(binary: np.ndarray, k_max: int) -> list[np.ndarray]:
    powers = [binary]
    for _ in range(k_max - 1):
        powers.append(powers[-1] @ binary)
    return powers


def power_all(graph: ProximityGraph, k_max: int = DEFAULT_K_MAX) -> np.ndarray:
    """Sum over k of diag(B^k) / k! on the binary adjacency B."""
    powers = _walk_powers(graph.binary(), k_max)
    return sum(
        np.diag(matrix) / math.factorial(k) for k, matrix in enumerate(powers, start=1)
    )


def katz_all(
    graph: ProximityGraph,
    k_max: int = DEFAULT_K_MAX,
    alpha_frac: float = DEFAULT_ALPHA_FRAC,
    beta: float = DEFAULT_KATZ_BETA,
) -> np.ndarray:
    """Truncated Katz series with alpha = alpha_frac / lambda_max(B)."""
    binary = graph.binary()
    value = leading_eigenvalue(binary)
    alpha = alpha_frac / value if value >= EMPTY_GRAPH_EIGENVALUE else 0.0
    powers = _walk_powers(binary, k_max)
    return sum(
        alpha**k * matrix.sum(axis=1) + beta**k
        for k, matrix in enumerate(powers, start=1)
    )


def frame_centralities(
    graph: ProximityGraph, config: BehaviorConfig | None = None
) -> np.ndarray:
    """Per-node closeness, eigenvector, betweenness, power and Katz: [nodes, 5]."""
    config = config or BehaviorConfig()
    return np.column_stack(
        [
            closeness_all(graph),
            eigenvector_all(graph),
            betweenness_all(graph),
            power_all(graph, config.k_max),
            katz_all(graph, config.k_max, config.alpha_frac, config.beta),
        ]
    )


def degree_centrality(
    graphs: Sequence[ProximityGraph], agent: int, instantaneous: bool = False
) -> np.ndarray:
    """Neighbor count per frame, accumulated over frames unless instantaneous.

    Frames where the agent is absent contribute zero neighbors.
    """
    counts = np.array(
        [
            float((graph.adjacency[graph.index_of(agent)] > 0).sum())
            if agent in graph.node_ids
            else 0.0
            for graph in graphs
        ]
    )
    return counts if instantaneous else np.cumsum(counts)


def closeness_centrality(graph: ProximityGraph, agent: int) -> float:
    """Closeness of one node."""
    return float(closeness_all(graph)[graph.index_of(agent)])


def eigenvector_centrality(graph: ProximityGraph, agent: int) -> float:
    """Eigenvector centrality of one node."""
    return float(eigenvector_all(graph)[graph.index_of(agent)])


def betweenness_centrality(graph: ProximityGraph, agent: int) -> float:
    """Betweenness of one node."""
    return float(betweenness_all(graph)[graph.index_of(agent)])


def power_centrality(graph: ProximityGraph, agent: int, k_max: int = DEFAULT_K_MAX) -> float:
    """Power centrality of one node."""
    return float(power_all(graph, k_max)[graph.index_of(agent)])


def katz_centrality(
    graph: ProximityGraph,
    agent: int,
    k_max: int = DEFAULT_K_MAX,
    alpha_frac: float = DEFAULT_ALPHA_FRAC,
    beta: float = DEFAULT_KATZ_BETA,
) -> float:
    """Katz centrality of one node."""
    return float(katz_all(graph, k_max, alpha_frac, beta)[graph.index_of(agent)])


def behavior_criteria(series: np.ndarray, dt: float, axis: int = 0) -> BehaviorCriteria:
    """Absolute value and backward first/second differences along the time axis.

    Differences are zero-padded at the frames where they are undefined.
    """
    if not dt > 0:
        raise ConfigError(f"dt must be positive, got {dt}")
    values = np.moveaxis(np.asarray(series, dtype=np.float64), axis, 0)
    if values.shape[0] < 1:
        raise InputError("Centrality series is empty")
    first = np.zeros_like(values)
    second = np.zeros_like(values)
    first[1:] = np.diff(values, axis=0) / dt
    second[2:] = np.diff(values, n=2, axis=0) / dt**2
    return BehaviorCriteria(
        np.moveaxis(np.abs(values), 0, axis),
        np.moveaxis(np.abs(first), 0, axis),
        np.moveaxis(np.abs(second), 0, axis),
    )


def scene_centralities(
    scene: TrajectoryScene, config: BehaviorConfig | None = None
) -> np.ndarray:
    """Six centralities per agent and frame: [n + 1, t_h + 1, 6], zero when absent."""
    config = config or BehaviorConfig()
    graphs = graph_series(scene, config.radius_m)
    values = np.zeros((scene.n + 1, len(graphs), len(CENTRALITY_NAMES)))
    for column, graph in enumerate(graphs):
        rows = list(graph.node_ids)
        values[rows, column, 0] = _neighbor_counts(graph)
        values[rows, column, 1:] = frame_centralities(graph, config)
    if not config.instantaneous_degree:
        values[:, :, 0] = np.cumsum(values[:, :, 0], axis=1)
    return values


def behavior_tensor(
    scene: TrajectoryScene,
    config: BehaviorConfig | None = None,
    standardizer: FeatureStandardizer | None = None,
) -> np.ndarray:
    """Behavior features [n + 1, t_h + 1, 18]; rows of absent agent-frames are zero."""
    criteria = behavior_criteria(scene_centralities(scene, config), scene.dt, axis=1)
    features = criteria.stacked()
    present = scene.all_valid()
    features[~present] = 0.0
    if standardizer is not None:
        features = standardizer.transform(features, present)
    return features


class FeatureStandardizer:
    """Per-feature mean/std over present agent-frames, frozen after fitting."""

    def __init__(self, mean: np.ndarray, std: np.ndarray) -> None:
        """Initialize from statistics."""
        mean = np.asarray(mean, dtype=np.float64)
        std = np.asarray(std, dtype=np.float64)
        if mean.shape != (len(BEHAVIOR_FEATURES),) or std.shape != mean.shape:
            raise ShapeError(
                f"standardizer: expected {len(BEHAVIOR_FEATURES)} features, "
                f"got mean {mean.shape} std {std.shape}"
            )
        self.mean = mean
        self.std = np.maximum(std, STANDARDIZER_STD_FLOOR)

    @classmethod
    def identity(cls) -> FeatureStandardizer:
        """Standardizer that leaves features unchanged."""
        size = len(BEHAVIOR_FEATURES)
        return cls(np.zeros(size), np.ones(size))

    @classmethod
    def fit(
        cls, samples: Iterable[tuple[np.ndarray, np.ndarray]]
    ) -> FeatureStandardizer:
        """Fit on (features [agents, frames, 18], present [agents, frames]) pairs."""
        size = len(BEHAVIOR_FEATURES)
        count = 0
        total = np.zeros(size)
        squares = np.zeros(size)
        for features, present in samples:
            rows = features[present]
            count += rows.shape[0]
            total += rows.sum(axis=0)
            squares += (rows**2).sum(axis=0)
        if count == 0:
            _LOGGER.warning("No agent-frames to fit the standardizer; using identity")
            return cls.identity()
        mean = total / count
        variance = np.maximum(squares / count - mean**2, 0.0)
        _LOGGER.debug("Fitted standardizer on %d agent-frames", count)
        return cls(mean, np.sqrt(variance))

    def transform(self, features: np.ndarray, present: np.ndarray) -> np.ndarray:
        """Standardize present rows; absent rows stay zero."""
        result = (features - self.mean) / self.std
        result[~present] = 0.0
        return result

    def state(self) -> dict[str, np.ndarray]:
        """Arrays to persist in a checkpoint."""
        return {"standardizer.mean": self.mean, "standardizer.std": self.std}

    @classmethod
    def from_state(cls, state: dict[str, np.ndarray]) -> FeatureStandardizer:
        """Restore from checkpoint arrays."""
        return cls(state["standardizer.mean"], state["standardizer.std"])

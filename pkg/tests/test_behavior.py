"""Tests for centralities, behavior criteria and the feature standardizer."""

from __future__ import annotations

import itertools
import math

import networkx as nx
import numpy as np
import pytest

from mftraj.behavior import (
    BehaviorConfig,
    FeatureStandardizer,
    behavior_criteria,
    behavior_tensor,
    betweenness_all,
    betweenness_centrality,
    closeness_centrality,
    degree_centrality,
    eigenvector_centrality,
    katz_all,
    katz_centrality,
    leading_eigenvalue,
    power_all,
    power_centrality,
    scene_centralities,
)
from mftraj.const import BEHAVIOR_FEATURES
from mftraj.exceptions import ConfigError, NumericError
from mftraj.graph import build_graph, graph_series

from .conftest import make_scene


def random_graph(seed, size=None, radius=30.0):
    rng = np.random.default_rng(seed)
    size = size or int(rng.integers(2, 9))
    positions = rng.uniform(0.0, 70.0, size=(size, 2))
    return build_graph(positions, np.ones(size, bool), radius_m=radius)


def to_networkx(graph):
    reference = nx.Graph()
    reference.add_nodes_from(range(graph.size))
    rows, columns = np.nonzero(np.triu(graph.adjacency))
    reference.add_edges_from(zip(rows.tolist(), columns.tolist()))
    return reference


def brute_force_betweenness(reference, node):
    total = 0.0
    others = [other for other in reference.nodes if other != node]
    for source, target in itertools.combinations(others, 2):
        if not nx.has_path(reference, source, target):
            continue
        paths = list(nx.all_shortest_paths(reference, source, target))
        total += sum(node in path for path in paths) / len(paths)
    return total


def pair_graph(distance=5.0):
    return build_graph(np.array([[0.0, 0.0], [distance, 0.0]]), np.ones(2, bool))


def test_power_centrality_of_pair():
    assert power_centrality(pair_graph(), 0, k_max=6) == pytest.approx(
        0.5430555555555555, abs=1e-9
    )


def test_katz_on_empty_graph():
    graph = build_graph(np.array([[0.0, 0.0], [100.0, 0.0]]), np.ones(2, bool))
    assert katz_centrality(graph, 0, k_max=6, alpha_frac=0.9, beta=0.5) == 0.984375


def test_katz_of_pair():
    expected = sum(0.9**k + 0.5**k for k in range(1, 7))
    assert katz_centrality(pair_graph(), 1) == pytest.approx(expected, abs=1e-9)


def test_degree_recursion_on_adjacent_pair():
    graphs = [pair_graph() for _ in range(3)]
    np.testing.assert_array_equal(degree_centrality(graphs, 0), [1.0, 2.0, 3.0])
    np.testing.assert_array_equal(degree_centrality(graphs, 0, instantaneous=True), [1.0, 1.0, 1.0])


def test_closeness_of_star_center():
    positions = np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 4.0]])
    graph = build_graph(positions, np.ones(3, bool))
    assert closeness_centrality(graph, 0) == pytest.approx(1.0 / 7.0)


def test_closeness_with_single_neighbor_is_zero():
    assert closeness_centrality(pair_graph(), 0) == 0.0


def test_eigenvector_of_pair():
    assert eigenvector_centrality(pair_graph(), 0) == pytest.approx(1.0)


def test_eigenvector_of_isolated_node():
    graph = build_graph(np.zeros((1, 2)), np.ones(1, bool))
    assert eigenvector_centrality(graph, 0) == 0.0


def test_betweenness_of_path_middle():
    positions = np.array([[0.0, 0.0], [20.0, 0.0], [40.0, 0.0]])
    graph = build_graph(positions, np.ones(3, bool))
    assert betweenness_centrality(graph, 1) == 1.0
    assert betweenness_centrality(graph, 0) == 0.0


@pytest.mark.parametrize("seed", range(100))
def test_betweenness_matches_oracles(seed):
    graph = random_graph(seed)
    reference = to_networkx(graph)
    values = betweenness_all(graph)
    expected = nx.betweenness_centrality(reference, normalized=False)
    for node in range(graph.size):
        assert values[node] == pytest.approx(expected[node], abs=1e-9)
        assert values[node] == pytest.approx(
            brute_force_betweenness(reference, node), abs=1e-9
        )


@pytest.mark.parametrize("seed", range(100))
def test_power_and_katz_match_matrix_powers(seed):
    graph = random_graph(seed)
    binary = graph.binary()
    powers = [np.linalg.matrix_power(binary, k) for k in range(1, 7)]
    power = sum(np.diag(matrix) / math.factorial(k) for k, matrix in enumerate(powers, start=1))
    np.testing.assert_allclose(power_all(graph, 6), power, rtol=0, atol=1e-9)

    eigenvalues = np.linalg.eigvalsh(binary)
    largest = float(np.max(np.abs(eigenvalues)))
    alpha = 0.9 / largest if largest > 1e-9 else 0.0
    katz = sum(alpha**k * matrix.sum(axis=1) + 0.5**k for k, matrix in enumerate(powers, start=1))
    np.testing.assert_allclose(katz_all(graph, 6, 0.9, 0.5), katz, rtol=0, atol=1e-9)


@pytest.mark.parametrize("seed", range(100))
def test_leading_eigenvalue_matches_dense_solver(seed):
    graph = random_graph(seed)
    for matrix in (graph.adjacency, graph.binary()):
        expected = float(np.max(np.abs(np.linalg.eigvalsh(matrix))))
        assert leading_eigenvalue(matrix) == pytest.approx(expected, abs=1e-8)


def test_leading_eigenvalue_of_bipartite_graph():
    # star graph: eigenvalues +-sqrt(3) have equal magnitude
    adjacency = np.zeros((4, 4))
    adjacency[0, 1:] = adjacency[1:, 0] = 1.0
    assert leading_eigenvalue(adjacency) == pytest.approx(math.sqrt(3.0), abs=1e-10)


def test_leading_eigenvalue_non_convergence():
    adjacency = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 2.0], [0.0, 2.0, 0.0]])
    with pytest.raises(NumericError, match="adjacency"):
        leading_eigenvalue(adjacency, max_iterations=1)


def test_behavior_criteria_differences():
    criteria = behavior_criteria(np.array([1.0, 3.0, 6.0]), dt=0.1)
    np.testing.assert_allclose(criteria.bmi, [1.0, 3.0, 6.0])
    np.testing.assert_allclose(criteria.bti, [0.0, 20.0, 30.0])
    np.testing.assert_allclose(criteria.bci, [0.0, 0.0, 100.0])


def test_behavior_criteria_takes_magnitudes():
    criteria = behavior_criteria(np.array([4.0, 2.0]), dt=1.0)
    np.testing.assert_allclose(criteria.bti, [0.0, 2.0])


def test_behavior_criteria_rejects_bad_dt():
    with pytest.raises(ConfigError):
        behavior_criteria(np.ones(3), dt=0.0)


def test_behavior_config_validation():
    with pytest.raises(ConfigError):
        BehaviorConfig(alpha_frac=1.0)
    with pytest.raises(ConfigError):
        BehaviorConfig(k_max=0)


def test_behavior_tensor_shape_and_absent_rows():
    target = np.column_stack([np.arange(6.0), np.zeros(6)])
    agent = [[1.0, 3.0], [2.0, 3.0], [np.nan, np.nan], [4.0, 3.0], [5.0, 3.0], [6.0, 3.0]]
    scene = make_scene(target, agents=[agent])
    features = behavior_tensor(scene)
    assert features.shape == (2, 6, len(BEHAVIOR_FEATURES))
    np.testing.assert_array_equal(features[1, 2], 0.0)
    assert np.isfinite(features).all()


def test_scene_centralities_degree_accumulates():
    target = np.column_stack([np.arange(4.0), np.zeros(4)])
    agent = np.column_stack([np.arange(4.0), np.full(4, 3.0)])
    scene = make_scene(target, agents=[agent])
    values = scene_centralities(scene)
    np.testing.assert_array_equal(values[0, :, 0], [1.0, 2.0, 3.0, 4.0])
    instant = scene_centralities(scene, BehaviorConfig(instantaneous_degree=True))
    np.testing.assert_array_equal(instant[0, :, 0], [1.0, 1.0, 1.0, 1.0])


def test_behavior_tensor_is_translation_invariant():
    target = np.column_stack([np.arange(8.0) * 1.5, np.sin(np.arange(8.0))])
    agent = target + np.array([4.0, 3.0])
    scene = make_scene(target, agents=[agent])
    moved = make_scene(target + 100.0, agents=[agent + 100.0])
    np.testing.assert_allclose(behavior_tensor(scene), behavior_tensor(moved), atol=1e-9)


def test_standardizer_fit_and_transform():
    rng = np.random.default_rng(0)
    features = rng.normal(3.0, 2.0, size=(3, 10, len(BEHAVIOR_FEATURES)))
    present = np.ones((3, 10), bool)
    present[2, :4] = False
    standardizer = FeatureStandardizer.fit([(features, present)])
    result = standardizer.transform(features, present)
    np.testing.assert_allclose(result[present].mean(axis=0), 0.0, atol=1e-10)
    np.testing.assert_allclose(result[present].std(axis=0), 1.0, atol=1e-10)
    np.testing.assert_array_equal(result[~present], 0.0)
    restored = FeatureStandardizer.from_state(standardizer.state())
    np.testing.assert_array_equal(restored.transform(features, present), result)


def test_standardizer_floors_constant_features():
    features = np.ones((1, 4, len(BEHAVIOR_FEATURES)))
    standardizer = FeatureStandardizer.fit([(features, np.ones((1, 4), bool))])
    result = standardizer.transform(features, np.ones((1, 4), bool))
    np.testing.assert_array_equal(result, 0.0)


def test_graph_series_feeds_degree():
    target = np.column_stack([np.arange(3.0), np.zeros(3)])
    agent = [[0.0, 1.0], [np.nan, np.nan], [2.0, 1.0]]
    graphs = graph_series(make_scene(target, agents=[agent]))
    np.testing.assert_array_equal(degree_centrality(graphs, 1), [1.0, 1.0, 2.0])


def test_betweenness_on_four_cycle():
    square = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    graph = build_graph(square, np.ones(4, bool), radius_m=1.0)
    np.testing.assert_allclose(betweenness_all(graph), [0.5, 0.5, 0.5, 0.5])
    assert betweenness_centrality(graph, 1) == pytest.approx(0.5)


def test_eigenvector_of_star():
    positions = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
    graph = build_graph(positions, np.ones(4, bool), radius_m=1.0)
    assert eigenvector_centrality(graph, 0) == pytest.approx(3.0 / math.sqrt(3.0))
    assert eigenvector_centrality(graph, 2) == pytest.approx(1.0 / math.sqrt(3.0))


@pytest.mark.parametrize("seed", range(5))
def test_behavior_tensor_follows_agent_order(seed):
    rng = np.random.default_rng(seed)
    steps = np.arange(8.0)
    target = np.column_stack([steps * 1.2, np.sin(steps / 2.0)])
    agents = [
        target + rng.uniform(-15.0, 15.0, 2) + rng.normal(0.0, 0.3, (8, 2))
        for _ in range(4)
    ]
    order = rng.permutation(4)
    scene = make_scene(target, agents=agents)
    shuffled = make_scene(target, agents=[agents[index] for index in order])

    features = behavior_tensor(scene)
    permuted = behavior_tensor(shuffled)
    np.testing.assert_allclose(permuted[0], features[0], atol=1e-8)
    np.testing.assert_allclose(permuted[1:], features[1:][order], atol=1e-8)

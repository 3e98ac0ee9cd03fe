import numpy as np
import pytest

from linear_fgw.errors import InputError
from linear_fgw.services.graph_core import (
    GraphDataset,
    MeasureGraph,
    ShapeError,
    dataset_statistics,
    mixing_diameter,
    shortest_path_structure,
    wl_propagate,
)
from linear_fgw.services.synthetic import erdos_renyi_graph


@pytest.fixture
def path_graph() -> MeasureGraph:
    adjacency = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
    return MeasureGraph.uniform(features=np.array([[0.0], [1.0], [2.0]]), structure=adjacency, label=1)


def test_uniform_graph_is_read_only(path_graph: MeasureGraph):
    assert path_graph.num_nodes == 3
    assert path_graph.feature_dim == 1
    np.testing.assert_allclose(path_graph.measure, [1 / 3] * 3)
    with pytest.raises(ValueError):
        path_graph.features[0, 0] = 5.0


def test_one_dimensional_features_become_a_column():
    g = MeasureGraph.uniform(features=np.array([1.0, 2.0]), structure=np.zeros((2, 2)))
    assert g.features.shape == (2, 1)


@pytest.mark.parametrize(
    "features, structure, measure, error",
    [
        (np.zeros((3, 1)), np.zeros((2, 2)), np.full(3, 1 / 3), ShapeError),
        (np.zeros((2, 1)), np.zeros((2, 2)), np.full(3, 1 / 3), ShapeError),
        (np.zeros((2, 1)), np.zeros((2, 2)), np.array([0.7, 0.7]), InputError),
        (np.zeros((2, 1)), np.zeros((2, 2)), np.array([1.5, -0.5]), InputError),
        (np.zeros((2, 1)), np.array([[0.0, 1.0], [0.0, 0.0]]), np.array([0.5, 0.5]), InputError),
        (np.array([[np.nan], [0.0]]), np.zeros((2, 2)), np.array([0.5, 0.5]), InputError),
        (np.zeros((0, 1)), np.zeros((0, 0)), np.zeros(0), ShapeError),
    ],
)
def test_invalid_graphs_are_rejected(features, structure, measure, error):
    with pytest.raises(error):
        MeasureGraph(features=features, structure=structure, measure=measure)


def test_edges_and_permutation(path_graph: MeasureGraph):
    assert path_graph.edges() == [(0, 1), (1, 2)]
    permuted = path_graph.permuted([2, 1, 0])
    np.testing.assert_allclose(permuted.features[:, 0], [2.0, 1.0, 0.0])
    np.testing.assert_allclose(permuted.structure, path_graph.structure)
    assert permuted.label == 1


def test_wl_depth_zero_is_identity(path_graph: MeasureGraph):
    assert wl_propagate(path_graph, 0) is path_graph


def test_wl_propagation_averages_neighbours(path_graph: MeasureGraph):
    propagated = wl_propagate(path_graph, 2)
    assert propagated.features.shape == (3, 3)
    np.testing.assert_allclose(propagated.features[:, 0], [0.0, 1.0, 2.0])
    # first round: node 0 sees mean 1, node 1 sees mean 1, node 2 sees mean 1
    np.testing.assert_allclose(propagated.features[:, 1], [0.5, 1.0, 1.5])
    np.testing.assert_allclose(propagated.features[:, 2], [0.75, 1.0, 1.25])


def test_wl_keeps_isolated_nodes():
    g = MeasureGraph.uniform(features=np.array([[3.0], [5.0]]), structure=np.zeros((2, 2)))
    np.testing.assert_allclose(wl_propagate(g, 1).features, [[3.0, 3.0], [5.0, 5.0]])


def test_wl_propagation_commutes_with_relabelling():
    g = erdos_renyi_graph(np.random.default_rng(3), 7, 0.4, feature_dim=2)
    permutation = [4, 6, 0, 2, 5, 1, 3]
    np.testing.assert_allclose(
        wl_propagate(g.permuted(permutation), 3).features, wl_propagate(g, 3).permuted(permutation).features
    )


def test_wl_rejects_negative_depth(path_graph: MeasureGraph):
    with pytest.raises(ValueError):
        wl_propagate(path_graph, -1)


def test_mixing_diameter_weights(path_graph: MeasureGraph):
    # max squared feature distance 4, structure range 1
    assert mixing_diameter(path_graph, 1.0) == pytest.approx(4.0)
    assert mixing_diameter(path_graph, 0.0) == pytest.approx(1.0)
    assert mixing_diameter(path_graph, 0.5) == pytest.approx(2.5)


@pytest.mark.parametrize("alpha", [0.0, 0.4, 1.0])
def test_mixing_diameter_ignores_node_order(alpha: float):
    g = erdos_renyi_graph(np.random.default_rng(4), 6, 0.5, feature_dim=3)
    assert mixing_diameter(g.permuted([5, 3, 1, 0, 2, 4]), alpha) == pytest.approx(mixing_diameter(g, alpha), rel=1e-12)


def test_single_node_diameter_is_zero():
    g = MeasureGraph.uniform(features=np.array([[1.0]]), structure=np.zeros((1, 1)))
    assert mixing_diameter(g, 0.3) == 0.0


def test_shortest_path_structure(path_graph: MeasureGraph):
    np.testing.assert_allclose(
        shortest_path_structure(path_graph).structure, [[0, 1, 2], [1, 0, 1], [2, 1, 0]]
    )


def test_shortest_path_disconnected_pairs_get_diameter_plus_one():
    adjacency = np.zeros((3, 3))
    adjacency[0, 1] = adjacency[1, 0] = 1.0
    g = MeasureGraph.uniform(features=np.zeros((3, 1)), structure=adjacency)
    structure = shortest_path_structure(g).structure
    assert structure[0, 2] == 2.0
    assert structure[0, 1] == 1.0


def test_dataset_validation_and_labels(path_graph: MeasureGraph):
    dataset = GraphDataset(graphs=(path_graph, path_graph.permuted([1, 0, 2])), name="tiny", num_classes=2)
    assert len(dataset) == 2
    assert dataset.is_labeled
    np.testing.assert_array_equal(dataset.labels(), [1, 1])
    with pytest.raises(InputError):
        GraphDataset(graphs=(path_graph,), name="tiny", num_classes=1)
    with pytest.raises(ShapeError):
        GraphDataset(graphs=(path_graph, wl_propagate(path_graph, 1)), name="mixed", num_classes=2)


def test_unlabeled_dataset_has_no_labels():
    g = MeasureGraph.uniform(features=np.zeros((2, 1)), structure=np.zeros((2, 2)))
    dataset = GraphDataset(graphs=(g,), name="plain")
    assert not dataset.is_labeled
    with pytest.raises(InputError):
        dataset.labels()


def test_dataset_statistics(path_graph: MeasureGraph):
    dataset = GraphDataset(graphs=(path_graph,), name="tiny", num_classes=2)
    assert dataset_statistics(dataset) == {
        "name": "tiny",
        "graphs": 1,
        "classes": 2,
        "mean_nodes": 3.0,
        "mean_edges": 2.0,
        "attributes": 1,
    }

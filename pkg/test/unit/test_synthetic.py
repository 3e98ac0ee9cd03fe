import numpy as np
import pytest
from pydantic import ValidationError

from linear_fgw.services.synthetic import (
    SyntheticSpec,
    erdos_renyi_graph,
    random_small_graph,
    random_triples,
    synthetic_dataset,
)


def test_blocks_become_classes():
    spec = SyntheticSpec(graphs_per_class=4, num_nodes=6, edge_probs=[1.0, 0.0], feature_means=[0.0, 5.0])
    dataset = synthetic_dataset(spec)
    assert len(dataset) == 8
    assert dataset.num_classes == 2
    np.testing.assert_array_equal(dataset.labels(), [0] * 4 + [1] * 4)
    assert all(len(g.edges()) == 15 for g in dataset if g.label == 0)
    assert all(len(g.edges()) == 0 for g in dataset if g.label == 1)


def test_same_seed_same_dataset():
    spec = SyntheticSpec(graphs_per_class=3, num_nodes=5, edge_probs=[0.5], feature_means=[1.0], size_jitter=0.4)
    first, second = synthetic_dataset(spec), synthetic_dataset(spec)
    for a, b in zip(first, second):
        np.testing.assert_array_equal(a.structure, b.structure)
        np.testing.assert_array_equal(a.features, b.features)


def test_size_jitter_bounds():
    spec = SyntheticSpec(graphs_per_class=20, num_nodes=10, edge_probs=[0.3], feature_means=[0.0], size_jitter=0.5)
    sizes = [g.num_nodes for g in synthetic_dataset(spec)]
    assert min(sizes) >= 5
    assert max(sizes) <= 15


@pytest.mark.parametrize(
    "edge_probs, feature_means",
    [([0.5, 0.5], [0.0]), ([], []), ([1.5], [0.0])],
)
def test_invalid_blocks(edge_probs, feature_means):
    with pytest.raises(ValidationError):
        SyntheticSpec(graphs_per_class=1, num_nodes=3, edge_probs=edge_probs, feature_means=feature_means)


def test_erdos_renyi_graph_shape():
    g = erdos_renyi_graph(np.random.default_rng(0), 7, 0.5, feature_mean=2.0, feature_dim=3, label=1)
    assert g.num_nodes == 7
    assert g.features.shape == (7, 3)
    assert g.label == 1
    np.testing.assert_array_equal(g.structure, g.structure.T)


def test_random_small_graphs():
    rng = np.random.default_rng(3)
    assert all(1 <= random_small_graph(rng, 4).num_nodes <= 4 for _ in range(20))
    assert all(random_small_graph(rng, 4, min_nodes=4).num_nodes == 4 for _ in range(5))
    triples = random_triples(rng, 5, 3, feature_dim=2)
    assert len(triples) == 5
    assert all(len(triple) == 3 and triple[0].feature_dim == 2 for triple in triples)

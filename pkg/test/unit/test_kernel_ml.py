import numpy as np
import pytest
from scipy.spatial.distance import pdist, squareform

from linear_fgw.config import SolverConfig
from linear_fgw.errors import InputError, UsageError
from linear_fgw.services.graph_core import GraphDataset, ShapeError
from linear_fgw.services.kernel_ml import (
    DegenerateAffinityError,
    GramMatrix,
    adjusted_rand_index,
    canonical_labels,
    clustering_accuracy,
    gram_from_distances,
    kmeans_embeddings,
    spectral_clustering,
)
from linear_fgw.services.linear_fgw import distances_from_embeddings, embed_dataset
from linear_fgw.services.synthetic import random_small_graph


@pytest.fixture
def two_blobs() -> np.ndarray:
    return np.array([[0.0, 0.0], [0.1, 0.0], [0.0, 0.2], [10.0, 10.0], [10.1, 10.0], [10.0, 10.2]])


def test_gram_from_distances(two_blobs: np.ndarray):
    D = squareform(pdist(two_blobs, "sqeuclidean"))
    gram = gram_from_distances(D, 0.5)
    np.testing.assert_allclose(gram.values, np.exp(-0.5 * D))
    np.testing.assert_allclose(np.diag(gram.values), 1.0)
    assert gram.is_psd()
    assert gram.min_eigen_ratio() >= -1e-8
    assert gram.size == 6


@pytest.mark.parametrize("gamma", [0.01, 0.1, 1.0])
def test_linear_fgw_gram_is_psd(gamma: float):
    rng = np.random.default_rng(11)
    dataset = GraphDataset(graphs=tuple(random_small_graph(rng, 6, min_nodes=3) for _ in range(30)), name="random")
    reference = random_small_graph(rng, 4, min_nodes=4)
    embeddings = embed_dataset(dataset, reference, SolverConfig(alpha=0.5))
    gram = gram_from_distances(distances_from_embeddings(embeddings), gamma)
    assert gram.eigenvalues[0] >= -1e-8 * gram.eigenvalues[-1]
    assert gram.is_psd()


@pytest.mark.parametrize(
    "D, error",
    [
        (np.array([[0.0, -1.0], [-1.0, 0.0]]), InputError),
        (np.array([[0.0, np.inf], [np.inf, 0.0]]), InputError),
        (np.zeros((2, 3)), ShapeError),
    ],
)
def test_invalid_distances(D: np.ndarray, error):
    with pytest.raises(error):
        gram_from_distances(D, 1.0)


def test_gamma_must_be_positive():
    with pytest.raises(ValueError):
        gram_from_distances(np.zeros((2, 2)), 0.0)


def test_gram_matrix_must_be_symmetric():
    with pytest.raises(InputError):
        GramMatrix(values=np.array([[1.0, 0.5], [0.2, 1.0]]), gamma=1.0, source="linearFGW")


def test_clipping_an_indefinite_matrix():
    gram = GramMatrix(values=np.array([[1.0, 2.0], [2.0, 1.0]]), gamma=1.0, source="FGW")
    assert not gram.is_psd()
    assert gram.min_eigen_ratio() == pytest.approx(-1 / 3)
    clipped = gram.clipped()
    assert clipped.is_psd()
    np.testing.assert_allclose(clipped.values, [[1.5, 1.5], [1.5, 1.5]])
    report = gram.psd_report()
    assert report["is_psd"] is False
    assert report["min_eigenvalue"] == pytest.approx(-1.0)


def test_clipping_a_psd_matrix_is_a_no_op():
    gram = GramMatrix(values=np.eye(3), gamma=1.0, source="linearFGW")
    assert gram.clipped() is gram


def test_canonical_labels():
    np.testing.assert_array_equal(canonical_labels(np.array([5, 5, 2, 7, 2])), [0, 0, 1, 2, 1])


def test_kmeans_separates_blobs(two_blobs: np.ndarray):
    np.testing.assert_array_equal(kmeans_embeddings(two_blobs, 2), [0, 0, 0, 1, 1, 1])
    np.testing.assert_array_equal(kmeans_embeddings(two_blobs, 1), np.zeros(6))
    np.testing.assert_array_equal(kmeans_embeddings(two_blobs, 2, seed=3), kmeans_embeddings(two_blobs, 2, seed=3))


def test_kmeans_cluster_count_checks(two_blobs: np.ndarray):
    with pytest.raises(UsageError):
        kmeans_embeddings(two_blobs, 7)
    with pytest.raises(UsageError):
        kmeans_embeddings(two_blobs, 0)


def test_spectral_clustering_separates_blocks(two_blobs: np.ndarray):
    gram = gram_from_distances(squareform(pdist(two_blobs, "sqeuclidean")), 1.0)
    np.testing.assert_array_equal(spectral_clustering(gram, 2), [0, 0, 0, 1, 1, 1])
    np.testing.assert_array_equal(spectral_clustering(gram, 1), np.zeros(6))
    with pytest.raises(UsageError):
        spectral_clustering(gram, 7)


def test_spectral_clustering_rejects_isolated_rows():
    gram = GramMatrix(values=np.array([[0.0, 0.0], [0.0, 1.0]]), gamma=1.0, source="linearFGW")
    with pytest.raises(DegenerateAffinityError):
        spectral_clustering(gram, 2)


def test_clustering_scores():
    truth = np.array([0, 0, 1, 1])
    assert clustering_accuracy(truth, np.array([1, 1, 0, 0])) == 1.0
    assert clustering_accuracy(truth, np.array([0, 1, 0, 1])) == 0.5
    assert adjusted_rand_index(truth, np.array([1, 1, 0, 0])) == pytest.approx(1.0)
    with pytest.raises(ShapeError):
        clustering_accuracy(truth, np.array([0, 1]))

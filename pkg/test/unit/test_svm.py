import numpy as np
import pytest
from scipy.spatial.distance import cdist

from linear_fgw.errors import UsageError
from linear_fgw.services.graph_core import ShapeError
from linear_fgw.services.kernel_ml import GramMatrix
from linear_fgw.services.svm import PrecomputedKernelSVC, solve_binary_dual, svm_classify


def rbf(a: np.ndarray, b: np.ndarray, gamma: float = 0.5) -> np.ndarray:
    return np.exp(-gamma * cdist(a, b, "sqeuclidean"))


@pytest.fixture
def blobs(rng) -> tuple[np.ndarray, np.ndarray]:
    centers = np.array([[0.0, 0.0], [6.0, 0.0], [0.0, 6.0]])
    points = np.vstack([center + 0.5 * rng.normal(size=(8, 2)) for center in centers])
    return points, np.repeat([0, 1, 2], 8)


def test_dual_solution_is_feasible(blobs):
    points, labels = blobs
    binary = labels < 2
    y = np.where(labels[binary] == 1, 1.0, -1.0)
    dual = solve_binary_dual(rbf(points[binary], points[binary]), y, C=1.0)
    alpha = dual.coefficients * y
    assert dual.converged
    assert np.all(alpha >= -1e-12)
    assert np.all(alpha <= 1.0 + 1e-12)
    assert dual.coefficients.sum() == pytest.approx(0.0, abs=1e-9)


def test_binary_classification(blobs):
    points, labels = blobs
    binary = labels < 2
    K = rbf(points[binary], points[binary])
    model = PrecomputedKernelSVC(C=10.0).fit(K, labels[binary])
    np.testing.assert_array_equal(model.predict(K), labels[binary])
    assert model.decision_function(K).shape == (16, 1)


def test_one_vs_rest_classification(blobs):
    points, labels = blobs
    train = np.arange(24) % 4 != 0
    predictions = svm_classify(rbf(points[train], points[train]), labels[train], rbf(points[~train], points[train]), 10.0)
    np.testing.assert_array_equal(predictions, labels[~train])


def test_single_class_predicts_that_class():
    K = np.eye(3)
    model = PrecomputedKernelSVC().fit(K, np.array([4, 4, 4]))
    np.testing.assert_array_equal(model.predict(np.ones((2, 3))), [4, 4])


def test_identical_kernel_rows_predict_the_majority():
    model = PrecomputedKernelSVC().fit(np.ones((5, 5)), np.array([1, 0, 1, 1, 0]))
    np.testing.assert_array_equal(model.predict(np.ones((3, 5))), [1, 1, 1])


def test_unfitted_model_refuses_to_predict():
    with pytest.raises(UsageError):
        PrecomputedKernelSVC().predict(np.ones((1, 1)))


def test_training_shape_checks():
    with pytest.raises(ShapeError):
        PrecomputedKernelSVC().fit(np.eye(3), np.array([0, 1]))
    with pytest.raises(ShapeError):
        svm_classify(np.eye(2), np.array([0, 1]), np.ones((1, 3)), 1.0)


def test_indefinite_training_kernels_are_clipped(blobs):
    points, labels = blobs
    binary = labels < 2
    K = rbf(points[binary], points[binary])
    # a small indefinite perturbation
    K_indefinite = K - 0.05 * np.eye(K.shape[0])
    gram = GramMatrix(values=K_indefinite, gamma=0.5, source="FGW")
    predictions = svm_classify(gram, labels[binary], K, 10.0)
    np.testing.assert_array_equal(predictions, labels[binary])

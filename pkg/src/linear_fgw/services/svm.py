# Copyright 2024 linear-fgw developers
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import logging
from dataclasses import dataclass

import numpy as np
from pydantic import InstanceOf, validate_call

from linear_fgw.errors import UsageError
from linear_fgw.services.graph_core import ShapeError
from linear_fgw.services.kernel_ml import GramMatrix
from linear_fgw.utils.validation import ARRAYS_ALLOWED, PositiveFloat

logger = logging.getLogger("kernel_ml")

# stopping tolerance on the maximal KKT violation m(alpha) - M(alpha)
SMO_TOL = 1e-3
SMO_MAX_ITER = 100_000
# curvature floor for working pairs on non-PSD kernels
TAU = 1e-12


@dataclass(frozen=True)
class BinaryDual:
    # coefficients alpha_t y_t of the decision function sum_t alpha_t y_t K(t, x) - rho
    coefficients: np.ndarray
    rho: float
    iterations: int
    converged: bool


def solve_binary_dual(
    K: np.ndarray, y: np.ndarray, C: float, tol: float = SMO_TOL, max_iter: int = SMO_MAX_ITER
) -> BinaryDual:
    """
    min 1/2 a^T Q a - e^T a  s.t.  0 <= a <= C, y^T a = 0, with Q = (y y^T) * K, by sequential minimal
    optimization: each step moves the maximal violating pair chosen with second-order information.
    """
    n = y.shape[0]
    alpha = np.zeros(n)
    gradient = -np.ones(n)
    diagonal = np.diag(K)
    positive = y > 0
    iterations = 0
    converged = False

    while iterations < max_iter:
        at_upper = alpha >= C
        at_lower = alpha <= 0
        in_up = np.where(positive, ~at_upper, ~at_lower)
        in_low = np.where(positive, ~at_lower, ~at_upper)
        scores = -y * gradient
        if not in_up.any() or not in_low.any():
            converged = True
            break
        i = int(np.argmax(np.where(in_up, scores, -np.inf)))
        m_up = scores[i]
        m_low = np.min(np.where(in_low, scores, np.inf))
        if m_up - m_low < tol:
            converged = True
            break

        candidates = in_low & (scores < m_up)
        gain = m_up - scores
        curvature = diagonal[i] + diagonal - 2.0 * K[i]
        curvature = np.where(curvature > 0, curvature, TAU)
        j = int(np.argmin(np.where(candidates, -(gain**2) / curvature, np.inf)))

        # step along alpha_i += y_i t, alpha_j -= y_j t
        step = gain[j] / curvature[j]
        step = min(step, C - alpha[i] if positive[i] else alpha[i])
        step = min(step, alpha[j] if positive[j] else C - alpha[j])
        alpha[i] = np.clip(alpha[i] + y[i] * step, 0.0, C)
        alpha[j] = np.clip(alpha[j] - y[j] * step, 0.0, C)
        gradient += step * y * (K[:, i] - K[:, j])
        iterations += 1

    if not converged:
        logger.warning("SMO stopped after %s iterations without meeting tol %s", max_iter, tol)

    y_gradient = y * gradient
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = float(y_gradient[free].mean())
    else:
        at_upper = alpha >= C
        lower_bound = np.where(positive, at_upper, ~at_upper)
        upper_bound = ~lower_bound
        # both sets are nonempty whenever both classes are present
        rho = float(0.5 * (y_gradient[upper_bound].min() + y_gradient[lower_bound].max()))
    return BinaryDual(coefficients=alpha * y, rho=rho, iterations=iterations, converged=converged)


class PrecomputedKernelSVC:
    """
    C-SVM on a precomputed kernel. Two classes train one dual problem, more classes train one-vs-rest problems;
    predictions take the largest decision value, and ties go to the lowest class index.
    """

    @validate_call
    def __init__(self, C: PositiveFloat = 1.0, tol: PositiveFloat = SMO_TOL, max_iter: int = SMO_MAX_ITER):
        self.C = C
        self.tol = tol
        self.max_iter = max_iter
        self.classes_: np.ndarray | None = None
        self._duals: list[BinaryDual] = []
        self._constant_class: int | None = None

    def fit(self, K: np.ndarray, y: np.ndarray) -> "PrecomputedKernelSVC":
        K = np.asarray(K, dtype=np.float64)
        y = np.asarray(y)
        if K.shape != (y.shape[0], y.shape[0]):
            raise ShapeError(f"Training kernel has shape {K.shape} for {y.shape[0]} labels")
        self.classes_, counts = np.unique(y, return_counts=True)
        self._duals = []
        self._constant_class = None

        # a single class, or a kernel that cannot tell samples apart, predicts the majority class
        if self.classes_.shape[0] == 1 or np.allclose(K, K[:1, :], rtol=0.0, atol=1e-12):
            self._constant_class = int(np.argmax(counts))
            return self

        targets = [self.classes_[1]] if self.classes_.shape[0] == 2 else list(self.classes_)
        for target in targets:
            signs = np.where(y == target, 1.0, -1.0)
            self._duals.append(solve_binary_dual(K, signs, self.C, self.tol, self.max_iter))
        return self

    def decision_function(self, K_test: np.ndarray) -> np.ndarray:
        """Decision values, one column per one-vs-rest problem (a single column for two classes)."""
        if self.classes_ is None:
            raise UsageError("The classifier has not been fitted")
        K_test = np.asarray(K_test, dtype=np.float64)
        return np.column_stack([K_test @ dual.coefficients - dual.rho for dual in self._duals])

    def predict(self, K_test: np.ndarray) -> np.ndarray:
        if self.classes_ is None:
            raise UsageError("The classifier has not been fitted")
        K_test = np.asarray(K_test, dtype=np.float64)
        if self._constant_class is not None:
            return np.full(K_test.shape[0], self.classes_[self._constant_class])
        decision = self.decision_function(K_test)
        if len(self._duals) == 1:
            return np.where(decision[:, 0] > 0, self.classes_[1], self.classes_[0])
        return self.classes_[np.argmax(decision, axis=1)]


@validate_call(config=ARRAYS_ALLOWED)
def svm_classify(
    K_train: InstanceOf[GramMatrix] | InstanceOf[np.ndarray],
    y_train: InstanceOf[np.ndarray],
    K_test: InstanceOf[np.ndarray],
    C: PositiveFloat,
) -> np.ndarray:
    """
    Train on K_train (n x n) and predict the rows of K_test (m x n). Indefinite training kernels, as produced from
    plain FGW distances, have their negative eigenvalues clipped first.
    """
    gram = K_train if isinstance(K_train, GramMatrix) else GramMatrix(values=K_train, gamma=1.0, source="FGW")
    if not gram.is_psd():
        gram = gram.clipped()
    if K_test.ndim != 2 or K_test.shape[1] != gram.size:
        raise ShapeError(f"Test kernel has shape {K_test.shape}, expected ({K_test.shape[0]}, {gram.size})")
    return PrecomputedKernelSVC(C=C).fit(gram.values, y_train).predict(K_test)

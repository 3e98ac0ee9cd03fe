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
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Literal, Sequence

import numpy as np
from pydantic import InstanceOf, validate_call
from scipy.linalg import eigh, eigvalsh
from scipy.optimize import linear_sum_assignment
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning
from sklearn.metrics import adjusted_rand_score
from sklearn.metrics.cluster import contingency_matrix

from linear_fgw.errors import InputError, NumericalError, UsageError
from linear_fgw.services.graph_core import ShapeError
from linear_fgw.services.linear_fgw import GraphEmbedding, embedding_matrix
from linear_fgw.utils.validation import ARRAYS_ALLOWED, PositiveFloat, PositiveInt

logger = logging.getLogger("kernel_ml")

GRAM_SYMMETRY_TOL = 1e-12
PSD_TOL = 1e-8
KMEANS_RESTARTS = 50

DistanceSource = Literal["linearFGW", "FGW"]


class DegenerateAffinityError(NumericalError):
    pass


@dataclass(frozen=True, eq=False)
class GramMatrix:
    values: np.ndarray
    gamma: float
    source: DistanceSource

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ShapeError(f"A Gram matrix is square, got shape {values.shape}")
        if np.max(np.abs(values - values.T), initial=0.0) > GRAM_SYMMETRY_TOL:
            raise InputError("Gram matrix is not symmetric")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def size(self) -> int:
        return self.values.shape[0]

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        return eigvalsh(self.values)

    def min_eigen_ratio(self) -> float:
        """lambda_min / lambda_max; PSD matrices give a ratio >= 0 up to round-off."""
        largest = self.eigenvalues[-1]
        if largest <= 0:
            return -np.inf if self.eigenvalues[0] < 0 else 0.0
        return float(self.eigenvalues[0] / largest)

    def is_psd(self, tol: float = PSD_TOL) -> bool:
        return bool(self.eigenvalues[0] >= -tol * max(self.eigenvalues[-1], 0.0))

    def clipped(self) -> "GramMatrix":
        """Zero the negative eigenvalues. Returns self when there are none."""
        eigenvalues, eigenvectors = eigh(self.values)
        negative = eigenvalues < 0
        if not negative.any():
            return self
        logger.warning(
            "Clipping %s negative eigenvalues (smallest %.3g) of a %s Gram matrix",
            int(negative.sum()),
            eigenvalues[0],
            self.source,
        )
        values = (eigenvectors * np.maximum(eigenvalues, 0.0)) @ eigenvectors.T
        return GramMatrix(values=0.5 * (values + values.T), gamma=self.gamma, source=self.source)

    def psd_report(self) -> dict:
        return {
            "size": self.size,
            "gamma": self.gamma,
            "source": self.source,
            "min_eigenvalue": float(self.eigenvalues[0]) if self.size else 0.0,
            "max_eigenvalue": float(self.eigenvalues[-1]) if self.size else 0.0,
            "min_eigen_ratio": self.min_eigen_ratio() if self.size else 0.0,
            "is_psd": self.is_psd() if self.size else True,
        }


@validate_call(config=ARRAYS_ALLOWED)
def gram_from_distances(
    D: InstanceOf[np.ndarray], gamma: PositiveFloat, source: DistanceSource = "linearFGW"
) -> GramMatrix:
    """K = exp(-gamma D), elementwise."""
    D = np.asarray(D, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ShapeError(f"A distance matrix is square, got shape {D.shape}")
    if np.any(D < 0):
        raise InputError("Distance matrix has negative entries")
    if not np.all(np.isfinite(D)):
        raise InputError("Distance matrix has non-finite entries")
    return GramMatrix(values=np.exp(-gamma * D), gamma=gamma, source=source)


def canonical_labels(labels: np.ndarray) -> np.ndarray:
    """Renumber clusters in order of first appearance, so equal partitions give equal label vectors."""
    _, first_index, inverse = np.unique(labels, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first_index))
    return order[inverse].astype(np.int64)


def _kmeans(points: np.ndarray, k: int, seed: int, restarts: int) -> np.ndarray:
    with warnings.catch_warnings():
        # singleton or duplicate points may leave fewer distinct clusters than k
        warnings.simplefilter("ignore", ConvergenceWarning)
        kmeans = KMeans(n_clusters=k, init="k-means++", n_init=restarts, random_state=seed)
        return canonical_labels(kmeans.fit_predict(points))


def kmeans_embeddings(
    embeddings: Sequence[GraphEmbedding] | np.ndarray,
    k: int,
    seed: int = 0,
    restarts: int = KMEANS_RESTARTS,
) -> np.ndarray:
    """
    Lloyd's algorithm with k-means++ seeding on the sqrt(sigma)-scaled embeddings, keeping the best inertia of
    `restarts` runs. Accepts embeddings or an already stacked embedding matrix.
    """
    points = embeddings if isinstance(embeddings, np.ndarray) else embedding_matrix(embeddings)
    if not 1 <= k <= points.shape[0]:
        raise UsageError(f"Cannot form {k} clusters from {points.shape[0]} graphs")
    if k == 1:
        return np.zeros(points.shape[0], dtype=np.int64)
    return _kmeans(points, k, seed, restarts)


@validate_call(config=ARRAYS_ALLOWED)
def spectral_clustering(K: InstanceOf[GramMatrix], k: PositiveInt, seed: int = 0) -> np.ndarray:
    """
    Normalized-cut spectral clustering: the top-k eigenvectors of D^-1/2 K D^-1/2, rows scaled to unit norm, then
    k-means on the rows.
    """
    if k > K.size:
        raise UsageError(f"Cannot form {k} clusters from {K.size} graphs")
    if K.source == "FGW" and not K.is_psd():
        K = K.clipped()
    affinity = K.values
    degree = affinity.sum(axis=1)
    if np.any(degree <= 0) or np.any(np.all(affinity == 0, axis=1)):
        raise DegenerateAffinityError("Affinity matrix has rows without positive mass")
    if k == 1:
        return np.zeros(K.size, dtype=np.int64)

    inverse_sqrt = 1.0 / np.sqrt(degree)
    normalized = inverse_sqrt[:, None] * affinity * inverse_sqrt[None, :]
    _, vectors = eigh(0.5 * (normalized + normalized.T), subset_by_index=[K.size - k, K.size - 1])
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    rows = np.divide(vectors, norms, out=np.zeros_like(vectors), where=norms > 0)
    return _kmeans(rows, k, seed, restarts=10)


def clustering_accuracy(true_labels: np.ndarray, predicted: np.ndarray) -> float:
    """Accuracy under the best one-to-one matching of clusters to classes (Hungarian assignment)."""
    true_labels, predicted = np.asarray(true_labels), np.asarray(predicted)
    if true_labels.shape != predicted.shape:
        raise ShapeError(f"Label vectors differ in length: {true_labels.shape} vs {predicted.shape}")
    if true_labels.size == 0:
        return 1.0
    contingency = contingency_matrix(true_labels, predicted)
    rows, cols = linear_sum_assignment(contingency, maximize=True)
    return float(contingency[rows, cols].sum() / true_labels.size)


def adjusted_rand_index(true_labels: np.ndarray, predicted: np.ndarray) -> float:
    return float(adjusted_rand_score(true_labels, predicted))

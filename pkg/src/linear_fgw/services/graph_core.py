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
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import networkx as nx
import numpy as np
from pydantic import InstanceOf, validate_call
from scipy.spatial.distance import pdist

from linear_fgw.errors import InputError
from linear_fgw.utils.validation import ARRAYS_ALLOWED, Alpha, NonNegativeInt

logger = logging.getLogger("graph_core")

MEASURE_TOL = 1e-12
SYMMETRY_TOL = 1e-12


class ShapeError(InputError):
    pass


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=np.float64, copy=True)
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class MeasureGraph:
    """
    A graph equipped with node features X (m x d), a structure matrix A (m x m) and a probability measure mu over
    its nodes. Instances are immutable: the arrays are copied and marked read-only on construction.
    """

    features: np.ndarray
    structure: np.ndarray
    measure: np.ndarray
    label: int | None = None

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim == 1:
            features = features.reshape(-1, 1)
        structure = np.asarray(self.structure, dtype=np.float64)
        measure = np.asarray(self.measure, dtype=np.float64)

        m = measure.shape[0] if measure.ndim == 1 else -1
        if m < 1:
            raise ShapeError("A measure graph needs a 1-d measure over at least one node")
        if features.ndim != 2 or features.shape[0] != m:
            raise ShapeError(f"Features must have {m} rows, got shape {features.shape}")
        if structure.shape != (m, m):
            raise ShapeError(f"Structure must be {m}x{m}, got shape {structure.shape}")
        if not (np.all(np.isfinite(features)) and np.all(np.isfinite(structure))):
            raise InputError("Features and structure must be finite")
        if np.any(measure < 0) or abs(measure.sum() - 1.0) > MEASURE_TOL:
            raise InputError(f"Measure must be nonnegative and sum to 1, sums to {measure.sum()!r}")
        if np.max(np.abs(structure - structure.T), initial=0.0) > SYMMETRY_TOL:
            raise InputError("Structure must be symmetric (undirected graphs only)")

        object.__setattr__(self, "features", _frozen(features))
        object.__setattr__(self, "structure", _frozen(structure))
        object.__setattr__(self, "measure", _frozen(measure))

    @classmethod
    def uniform(cls, features: np.ndarray, structure: np.ndarray, label: int | None = None) -> "MeasureGraph":
        m = np.asarray(structure).shape[0]
        return cls(features=features, structure=structure, measure=np.full(m, 1.0 / m), label=label)

    @property
    def num_nodes(self) -> int:
        return self.measure.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def edges(self) -> list[tuple[int, int]]:
        """Undirected edges (i < j) read off the nonzero off-diagonal structure entries."""
        rows, cols = np.nonzero(np.triu(self.structure, k=1))
        return [(int(i), int(j)) for i, j in zip(rows, cols)]

    def permuted(self, permutation: Sequence[int]) -> "MeasureGraph":
        """Relabel nodes so that new node i is old node permutation[i]."""
        p = np.asarray(permutation)
        return MeasureGraph(
            features=self.features[p],
            structure=self.structure[np.ix_(p, p)],
            measure=self.measure[p],
            label=self.label,
        )

    def with_features(self, features: np.ndarray) -> "MeasureGraph":
        return MeasureGraph(features=features, structure=self.structure, measure=self.measure, label=self.label)

    def with_structure(self, structure: np.ndarray) -> "MeasureGraph":
        return MeasureGraph(features=self.features, structure=structure, measure=self.measure, label=self.label)


@dataclass(frozen=True, eq=False)
class GraphDataset:
    graphs: tuple[MeasureGraph, ...]
    name: str
    num_classes: int = 1
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "graphs", tuple(self.graphs))
        if self.num_classes < 1:
            raise InputError("A dataset has at least one class")
        dims = {g.feature_dim for g in self.graphs}
        if len(dims) > 1:
            raise ShapeError(f"Graphs of dataset {self.name} have mixed feature dimensions {sorted(dims)}")
        for g in self.graphs:
            if g.label is not None and not 0 <= g.label < self.num_classes:
                raise InputError(f"Label {g.label} outside [0, {self.num_classes}) in dataset {self.name}")

    def __len__(self) -> int:
        return len(self.graphs)

    def __iter__(self) -> Iterator[MeasureGraph]:
        return iter(self.graphs)

    def __getitem__(self, index: int) -> MeasureGraph:
        return self.graphs[index]

    @property
    def feature_dim(self) -> int:
        return self.graphs[0].feature_dim if self.graphs else 0

    @property
    def is_labeled(self) -> bool:
        return bool(self.graphs) and all(g.label is not None for g in self.graphs)

    def labels(self) -> np.ndarray:
        if not self.is_labeled:
            raise InputError(f"Dataset {self.name} is not labeled")
        return np.array([g.label for g in self.graphs], dtype=np.int64)

    def map_graphs(self, fn) -> "GraphDataset":
        return GraphDataset(
            graphs=tuple(fn(g) for g in self.graphs),
            name=self.name,
            num_classes=self.num_classes,
            metadata=self.metadata,
        )


@validate_call(config=ARRAYS_ALLOWED)
def wl_propagate(g: InstanceOf[MeasureGraph], depth: NonNegativeInt) -> MeasureGraph:
    """
    Continuous Weisfeiler-Lehman propagation: x_h(v) = (x_{h-1}(v) + mean of x_{h-1} over neighbours of v) / 2,
    concatenated over h = 0..depth. Isolated nodes use their own feature as the neighbour mean.
    """
    if depth == 0:
        return g
    if g.feature_dim < 1:
        raise ShapeError("WL propagation needs at least one feature column")

    neighbours = (g.structure != 0).astype(np.float64)
    np.fill_diagonal(neighbours, 0.0)
    degree = neighbours.sum(axis=1)
    isolated = degree == 0

    current = g.features
    blocks = [current]
    for _ in range(depth):
        summed = neighbours @ current
        neighbour_mean = np.where(
            isolated[:, None], current, summed / np.where(isolated, 1.0, degree)[:, None]
        )
        current = 0.5 * (current + neighbour_mean)
        blocks.append(current)
    return g.with_features(np.hstack(blocks))


@validate_call(config=ARRAYS_ALLOWED)
def mixing_diameter(g: InstanceOf[MeasureGraph], alpha: Alpha) -> float:
    """
    alpha * max ||x_i - x_j||^2 + (1 - alpha) * max |A_ij - A_i'j'|^2.

    The feature term carries alpha, the mirror image of the FGW objective weighting. This is the quantity that
    bounds the linearization error.
    """
    feature_diameter = float(pdist(g.features, "sqeuclidean").max()) if g.num_nodes > 1 else 0.0
    structure_diameter = float(np.ptp(g.structure)) ** 2
    return alpha * feature_diameter + (1.0 - alpha) * structure_diameter


def shortest_path_structure(g: MeasureGraph) -> MeasureGraph:
    """
    Replace the structure with hop distances between nodes. Pairs in different components get one more than the
    largest finite distance.
    """
    nx_graph = nx.from_numpy_array((g.structure != 0).astype(np.int8))
    distances = nx.floyd_warshall_numpy(nx_graph)
    finite = np.isfinite(distances)
    if not finite.all():
        distances[~finite] = distances[finite].max() + 1.0
    return g.with_structure(distances)


def dataset_statistics(dataset: GraphDataset) -> dict:
    node_counts = np.array([g.num_nodes for g in dataset], dtype=np.float64)
    edge_counts = np.array([len(g.edges()) for g in dataset], dtype=np.float64)
    return {
        "name": dataset.name,
        "graphs": len(dataset),
        "classes": dataset.num_classes,
        "mean_nodes": float(node_counts.mean()) if len(dataset) else 0.0,
        "mean_edges": float(edge_counts.mean()) if len(dataset) else 0.0,
        "attributes": dataset.feature_dim,
    }

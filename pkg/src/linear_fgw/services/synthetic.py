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

from typing import Sequence

import networkx as nx
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from linear_fgw.services.graph_core import GraphDataset, MeasureGraph


class SyntheticSpec(BaseModel):
    """One Erdős–Rényi block per class: edge probability and Gaussian feature mean."""

    model_config = ConfigDict(frozen=True)

    graphs_per_class: int = Field(ge=1)
    num_nodes: int = Field(ge=1)
    edge_probs: list[float]
    feature_means: list[float]
    feature_dim: int = Field(default=1, ge=1)
    feature_std: float = Field(default=1.0, ge=0.0)
    # node counts are drawn uniformly from num_nodes * (1 +- size_jitter)
    size_jitter: float = Field(default=0.0, ge=0.0, lt=1.0)
    seed: int = 0
    name: str = "synthetic"

    @model_validator(mode="after")
    def check_blocks(self) -> "SyntheticSpec":
        if len(self.edge_probs) != len(self.feature_means) or not self.edge_probs:
            raise ValueError("edge_probs and feature_means need one entry per class")
        if any(not 0.0 <= p <= 1.0 for p in self.edge_probs):
            raise ValueError("edge probabilities lie in [0, 1]")
        return self


def erdos_renyi_graph(
    rng: np.random.Generator,
    num_nodes: int,
    edge_prob: float,
    feature_mean: float = 0.0,
    feature_dim: int = 1,
    feature_std: float = 1.0,
    label: int | None = None,
) -> MeasureGraph:
    nx_graph = nx.gnp_random_graph(num_nodes, edge_prob, seed=int(rng.integers(2**31)))
    adjacency = nx.to_numpy_array(nx_graph, nodelist=range(num_nodes))
    features = rng.normal(feature_mean, feature_std, size=(num_nodes, feature_dim))
    return MeasureGraph.uniform(features=features, structure=adjacency, label=label)


def synthetic_dataset(spec: SyntheticSpec) -> GraphDataset:
    rng = np.random.default_rng(spec.seed)
    low = max(1, int(round(spec.num_nodes * (1.0 - spec.size_jitter))))
    high = max(low, int(round(spec.num_nodes * (1.0 + spec.size_jitter))))
    graphs = [
        erdos_renyi_graph(
            rng,
            int(rng.integers(low, high + 1)),
            edge_prob,
            feature_mean,
            spec.feature_dim,
            spec.feature_std,
            label=label,
        )
        for label, (edge_prob, feature_mean) in enumerate(zip(spec.edge_probs, spec.feature_means))
        for _ in range(spec.graphs_per_class)
    ]
    return GraphDataset(graphs=tuple(graphs), name=spec.name, num_classes=len(spec.edge_probs))


def random_small_graph(
    rng: np.random.Generator,
    max_nodes: int,
    feature_dim: int = 1,
    min_nodes: int = 1,
    edge_prob: float = 0.5,
) -> MeasureGraph:
    """A tiny random graph with uniform measure, for brute-force checks."""
    return erdos_renyi_graph(rng, int(rng.integers(min_nodes, max_nodes + 1)), edge_prob, 0.0, feature_dim)


def random_triples(rng: np.random.Generator, count: int, max_nodes: int, feature_dim: int = 1) -> Sequence:
    return [
        tuple(random_small_graph(rng, max_nodes, feature_dim) for _ in range(3))
        for _ in range(count)
    ]

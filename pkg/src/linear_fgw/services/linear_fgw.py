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
from functools import partial
from itertools import combinations
from typing import Sequence

import numpy as np
from pydantic import InstanceOf, validate_call
from scipy.spatial.distance import pdist, squareform

from linear_fgw.config import SolverConfig
from linear_fgw.errors import NumericalError, UsageError
from linear_fgw.services.graph_core import GraphDataset, MeasureGraph, ShapeError, mixing_diameter
from linear_fgw.services.ot_solvers import FgwResult, TransportPlan, solve_fgw
from linear_fgw.services.storage import content_hash
from linear_fgw.services.tu_format import canonical_json, graph_to_dict
from linear_fgw.services.worker_pool import WorkerPool, pool_map
from linear_fgw.utils.validation import ARRAYS_ALLOWED

logger = logging.getLogger("linear_fgw")


class DegenerateReferenceError(NumericalError):
    pass


class ReferenceMismatchError(UsageError):
    pass


@dataclass(frozen=True, eq=False)
class SurrogateGraph:
    """The reference-shaped image of a graph under the barycentric projections of a plan."""

    projected_features: np.ndarray
    projected_structure: np.ndarray
    reference_measure: np.ndarray

    def as_measure_graph(self) -> MeasureGraph:
        return MeasureGraph(
            features=self.projected_features,
            structure=0.5 * (self.projected_structure + self.projected_structure.T),
            measure=self.reference_measure,
        )


@dataclass(frozen=True, eq=False)
class GraphEmbedding:
    """
    Phi = (sqrt(1 - alpha) T_n(z_1), ..., sqrt(1 - alpha) T_n(z_K), sqrt(alpha) T_e(C_kl), ...).

    Blocks are stored unweighted by sigma; `weighted_vector` applies the sqrt(sigma) scaling under which plain
    squared Euclidean distance equals linearFGW.
    """

    node_block: np.ndarray
    edge_block: np.ndarray
    alpha: float
    reference_id: str
    reference_measure: np.ndarray
    # FGW value of the reference-to-graph solve this embedding came from
    fgw_value: float = float("nan")

    @property
    def num_reference_nodes(self) -> int:
        return self.reference_measure.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.node_block.shape[0] // self.num_reference_nodes

    def vector(self) -> np.ndarray:
        return np.concatenate([self.node_block, self.edge_block])

    def weighted_vector(self) -> np.ndarray:
        sigma = self.reference_measure
        node_weights = np.repeat(np.sqrt(sigma), self.feature_dim)
        edge_weights = np.sqrt(np.outer(sigma, sigma)).ravel()
        return np.concatenate([node_weights * self.node_block, edge_weights * self.edge_block])


def reference_id(reference: MeasureGraph) -> str:
    return content_hash(canonical_json(graph_to_dict(reference)))


@validate_call(config=ARRAYS_ALLOWED)
def barycentric_project(
    reference: InstanceOf[MeasureGraph], source: InstanceOf[MeasureGraph], plan: InstanceOf[TransportPlan]
) -> SurrogateGraph:
    """
    T_n(z_k) = (1 / sigma_k) sum_i pi_ki x_i and T_e(C_kl) = (1 / (sigma_k sigma_l)) sum_ij pi_ki pi_lj A_ij.
    """
    sigma = reference.measure
    P = plan.coupling
    if P.shape != (reference.num_nodes, source.num_nodes):
        raise ShapeError(f"Plan shape {P.shape} does not map {reference.num_nodes} onto {source.num_nodes} nodes")
    if np.any(sigma <= 0):
        raise DegenerateReferenceError("Reference measure has zero-mass nodes; barycentric projection is undefined")
    return SurrogateGraph(
        projected_features=(P @ source.features) / sigma[:, None],
        projected_structure=(P @ source.structure @ P.T) / np.outer(sigma, sigma),
        reference_measure=sigma,
    )


def embedding_from_surrogate(
    surrogate: SurrogateGraph, alpha: float, reference_key: str, fgw_value: float = float("nan")
) -> GraphEmbedding:
    return GraphEmbedding(
        node_block=np.sqrt(1.0 - alpha) * surrogate.projected_features.ravel(),
        edge_block=np.sqrt(alpha) * surrogate.projected_structure.ravel(),
        alpha=alpha,
        reference_id=reference_key,
        reference_measure=surrogate.reference_measure,
        fgw_value=fgw_value,
    )


def embed_with_plan(
    reference: MeasureGraph, g: MeasureGraph, cfg: SolverConfig, reference_key: str | None = None
) -> tuple[GraphEmbedding, FgwResult]:
    if reference.feature_dim != g.feature_dim:
        raise ShapeError(f"Reference has {reference.feature_dim} features, graph has {g.feature_dim}")
    result = solve_fgw(reference, g, cfg)
    surrogate = barycentric_project(reference, g, result.plan)
    embedding = embedding_from_surrogate(
        surrogate, cfg.alpha, reference_key or reference_id(reference), fgw_value=result.value
    )
    return embedding, result


@validate_call(config=ARRAYS_ALLOWED)
def embed(
    reference: InstanceOf[MeasureGraph],
    g: InstanceOf[MeasureGraph],
    cfg: SolverConfig,
    reference_key: str | None = None,
) -> GraphEmbedding:
    """Solve FGW from the reference to `g`, project, and flatten into the Euclidean embedding."""
    return embed_with_plan(reference, g, cfg, reference_key)[0]


def linear_fgw_distance(e1: GraphEmbedding, e2: GraphEmbedding, sigma: np.ndarray | None = None) -> float:
    """
    (1 - alpha) sum_k sigma_k ||dT_n(z_k)||^2 + alpha sum_kl sigma_k sigma_l |dT_e(C_kl)|^2, read off the
    embeddings (whose blocks already carry the sqrt(1 - alpha) and sqrt(alpha) factors).
    """
    if e1.reference_id != e2.reference_id or e1.alpha != e2.alpha:
        raise ReferenceMismatchError(
            "linearFGW compares embeddings against the same reference and alpha "
            f"({e1.reference_id[:12]}@{e1.alpha} vs {e2.reference_id[:12]}@{e2.alpha})"
        )
    sigma = e1.reference_measure if sigma is None else np.asarray(sigma, dtype=np.float64)
    K = sigma.shape[0]
    node_delta = (e1.node_block - e2.node_block).reshape(K, -1)
    edge_delta = (e1.edge_block - e2.edge_block).reshape(K, K)
    return float(sigma @ (node_delta**2).sum(axis=1) + sigma @ (edge_delta**2) @ sigma)


def embedding_matrix(embeddings: Sequence[GraphEmbedding]) -> np.ndarray:
    """Rows of sqrt(sigma)-scaled flat embeddings; squared Euclidean distances between rows are linearFGW."""
    if not embeddings:
        return np.zeros((0, 0))
    if len({(e.reference_id, e.alpha) for e in embeddings}) > 1:
        raise ReferenceMismatchError("Embeddings were computed against different references or alphas")
    return np.vstack([e.weighted_vector() for e in embeddings])


def embed_dataset(
    dataset: GraphDataset,
    reference: MeasureGraph,
    cfg: SolverConfig,
    pool: WorkerPool | None = None,
) -> list[GraphEmbedding]:
    key = reference_id(reference)
    logger.info("Embedding %s graphs of %s against reference %s", len(dataset), dataset.name, key[:12])
    return pool_map(pool, partial(embed, reference, cfg=cfg, reference_key=key), dataset.graphs)


def distances_from_embeddings(embeddings: Sequence[GraphEmbedding]) -> np.ndarray:
    if len(embeddings) <= 1:
        return np.zeros((len(embeddings), len(embeddings)))
    return squareform(pdist(embedding_matrix(embeddings), "sqeuclidean"))


def pairwise_linear_fgw(
    dataset: GraphDataset,
    reference: MeasureGraph,
    cfg: SolverConfig,
    pool: WorkerPool | None = None,
) -> np.ndarray:
    """N embeddings (one FGW solve each), then all N^2 linearFGW distances by vector arithmetic."""
    return distances_from_embeddings(embed_dataset(dataset, reference, cfg, pool))


def pairwise_fgw(dataset: GraphDataset, cfg: SolverConfig, pool: WorkerPool | None = None) -> np.ndarray:
    """Direct FGW between every pair (N(N - 1)/2 solves). The diagonal is 0 by definition."""
    pairs = list(combinations(range(len(dataset)), 2))
    values = pool_map(pool, lambda pair: solve_fgw(dataset[pair[0]], dataset[pair[1]], cfg).value, pairs)
    distances = np.zeros((len(dataset), len(dataset)))
    for (i, j), value in zip(pairs, values):
        distances[i, j] = distances[j, i] = value
    return distances


@dataclass(frozen=True)
class ApproximationBoundReport:
    lhs: float
    rhs: float
    barycenter_term: float
    diameter_term: float
    ok: bool


def total_approximation_bound(
    dataset: GraphDataset,
    reference: MeasureGraph,
    cfg: SolverConfig,
    pool: WorkerPool | None = None,
    fgw_distances: np.ndarray | None = None,
    tol: float = 1e-6,
) -> ApproximationBoundReport:
    """
    sum_{i<j} |FGW(G_i, G_j) - linearFGW(G_i, G_j)| <= 4 sum_i FGW(G_i, ref) + 4 sum_i diam(G_i).
    """
    embeddings = embed_dataset(dataset, reference, cfg, pool)
    linear = distances_from_embeddings(embeddings)
    direct = pairwise_fgw(dataset, cfg, pool) if fgw_distances is None else fgw_distances
    upper = np.triu_indices(len(dataset), k=1)
    lhs = float(np.abs(direct[upper] - linear[upper]).sum())
    barycenter_term = 4.0 * float(sum(e.fgw_value for e in embeddings))
    diameter_term = 4.0 * float(sum(mixing_diameter(g, cfg.alpha) for g in dataset))
    rhs = barycenter_term + diameter_term
    return ApproximationBoundReport(
        lhs=lhs,
        rhs=rhs,
        barycenter_term=barycenter_term,
        diameter_term=diameter_term,
        ok=lhs <= rhs + tol * max(1.0, rhs),
    )

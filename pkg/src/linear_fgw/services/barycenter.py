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
from functools import partial

import numpy as np
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning

from linear_fgw.config import BarycenterConfig, SolverConfig
from linear_fgw.errors import InputError
from linear_fgw.services.graph_core import GraphDataset, MeasureGraph
from linear_fgw.services.linear_fgw import barycentric_project
from linear_fgw.services.ot_solvers import FgwResult, TransportPlan, evaluate_fgw_objective, solve_fgw
from linear_fgw.services.worker_pool import WorkerPool, pool_map

logger = logging.getLogger("barycenter")


@dataclass(frozen=True, eq=False)
class BarycenterResult:
    reference: MeasureGraph
    # weighted objective sum_i w_i FGW(reference, G_i) evaluated at the start of every round
    objective_history: tuple[float, ...]
    converged: bool


def _uniform_reference(features: np.ndarray, structure: np.ndarray) -> MeasureGraph:
    return MeasureGraph.uniform(features=features, structure=0.5 * (structure + structure.T))


def _feature_centroids(dataset: GraphDataset, num_nodes: int, seed: int) -> np.ndarray:
    pooled = np.vstack([g.features for g in dataset])
    if pooled.shape[0] <= num_nodes:
        return pooled[np.arange(num_nodes) % pooled.shape[0]]
    with warnings.catch_warnings():
        # duplicate centroids are allowed
        warnings.simplefilter("ignore", ConvergenceWarning)
        kmeans = KMeans(n_clusters=num_nodes, n_init=10, random_state=seed).fit(pooled)
    return kmeans.cluster_centers_


def initial_reference(dataset: GraphDataset, cfg_b: BarycenterConfig, cfg_s: SolverConfig) -> MeasureGraph:
    """
    feature-kmeans: K centroids of the pooled node features, with the structure projected from one randomly
    chosen graph through a features-only plan. random-sample-graph: K nodes of one randomly chosen graph,
    cycled when the graph is smaller than K.
    """
    rng = np.random.default_rng(cfg_b.seed)
    K = cfg_b.num_nodes
    seed_graph = dataset[int(rng.integers(len(dataset)))]

    if cfg_b.init == "random-sample-graph":
        m = seed_graph.num_nodes
        nodes = np.sort(rng.choice(m, size=K, replace=False)) if m >= K else np.arange(K) % m
        return _uniform_reference(seed_graph.features[nodes], seed_graph.structure[np.ix_(nodes, nodes)])

    centroids = _feature_centroids(dataset, K, cfg_b.seed)
    features_only = MeasureGraph.uniform(features=centroids, structure=np.zeros((K, K)))
    plan = solve_fgw(features_only, seed_graph, cfg_s.model_copy(update={"alpha": 0.0})).plan
    structure = barycentric_project(features_only, seed_graph, plan).projected_structure
    return _uniform_reference(centroids, structure)


def fit_barycenter(
    dataset: GraphDataset,
    cfg_b: BarycenterConfig,
    cfg_s: SolverConfig,
    pool: WorkerPool | None = None,
) -> BarycenterResult:
    """
    Block-coordinate descent on sum_i w_i FGW(reference, G_i) with uniform weights w_i = 1 / N:
    solve the N plans from the current reference, then replace its features and structure with the weighted
    average of the node and edge barycentric projections. A graph keeps its previous plan when that plan scores
    better against the updated reference than a fresh solve, so the objective history never increases. The best
    evaluated reference is returned.
    """
    if len(dataset) == 0:
        raise InputError("Cannot compute the barycenter of an empty dataset")
    weights = np.full(len(dataset), 1.0 / len(dataset))
    current = initial_reference(dataset, cfg_b, cfg_s)
    best, best_objective = current, np.inf
    history: list[float] = []
    converged = False
    plans: list[TransportPlan] | None = None

    for round_index in range(cfg_b.outer_iters):
        results: list[FgwResult] = pool_map(pool, partial(solve_fgw, current, cfg=cfg_s), dataset.graphs)
        values = [result.value for result in results]
        if plans is None:
            plans = [result.plan for result in results]
        else:
            # last round's plans are still feasible for the updated reference
            for index, (g, result) in enumerate(zip(dataset, results)):
                carried = evaluate_fgw_objective(current, g, plans[index], cfg_s.alpha)
                if result.value <= carried:
                    plans[index] = result.plan
                else:
                    values[index] = carried
        objective = float(weights @ np.array(values))
        history.append(objective)
        logger.info("Barycenter round %s/%s: objective %.6g", round_index + 1, cfg_b.outer_iters, objective)
        if objective < best_objective:
            best, best_objective = current, objective

        if round_index > 0:
            decrease = history[-2] - objective
            if decrease < 0:
                logger.warning("Barycenter objective increased from %.6g to %.6g", history[-2], objective)
            elif decrease <= cfg_b.tol * abs(history[-2]):
                converged = True
                break
        if round_index == cfg_b.outer_iters - 1:
            break

        surrogates = [barycentric_project(current, g, plan) for g, plan in zip(dataset, plans)]
        features = sum(w * s.projected_features for w, s in zip(weights, surrogates))
        structure = sum(w * s.projected_structure for w, s in zip(weights, surrogates))
        current = _uniform_reference(features, structure)

    if not converged:
        logger.warning("Barycenter stopped after %s rounds without reaching tol %s", cfg_b.outer_iters, cfg_b.tol)
    return BarycenterResult(reference=best, objective_history=tuple(history), converged=converged)


def compute_barycenter(
    dataset: GraphDataset,
    cfg_b: BarycenterConfig,
    cfg_s: SolverConfig,
    pool: WorkerPool | None = None,
) -> MeasureGraph:
    return fit_barycenter(dataset, cfg_b, cfg_s, pool).reference


def barycenter_objective(
    reference: MeasureGraph,
    dataset: GraphDataset,
    cfg_s: SolverConfig,
    pool: WorkerPool | None = None,
) -> float:
    """Unweighted sum_i FGW(reference, G_i), solved in the same direction as the embeddings."""
    values = pool_map(pool, lambda g: solve_fgw(reference, g, cfg_s).value, dataset.graphs)
    return float(sum(values))

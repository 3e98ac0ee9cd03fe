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

import json
import logging
import math
import re
import time
import uuid
from contextvars import ContextVar
from functools import cached_property
from pathlib import Path

import anyio.to_thread
import numpy as np

from linear_fgw.config import PipelineConfig, SolverConfig
from linear_fgw.errors import InputError, UsageError, VerificationFailure
from linear_fgw.services.artifacts import (
    ArtifactWriter,
    embeddings_csv,
    gram_binary,
    matrix_csv,
    provenance,
)
from linear_fgw.services.barycenter import BarycenterResult, fit_barycenter
from linear_fgw.services.graph_core import (
    GraphDataset,
    MeasureGraph,
    ShapeError,
    dataset_statistics,
    shortest_path_structure,
    wl_propagate,
)
from linear_fgw.services.kernel_ml import (
    adjusted_rand_index,
    clustering_accuracy,
    gram_from_distances,
    kmeans_embeddings,
    spectral_clustering,
)
from linear_fgw.services.lemma_checks import verification_suite
from linear_fgw.services.linear_fgw import (
    GraphEmbedding,
    distances_from_embeddings,
    embed_dataset,
    embedding_matrix,
    pairwise_fgw,
    reference_id,
)
from linear_fgw.services.model_selection import ParamGrid, cross_validate
from linear_fgw.services.storage import Storage, content_hash
from linear_fgw.services.synthetic import SyntheticSpec, synthetic_dataset
from linear_fgw.services.tu_format import (
    DatasetFormatError,
    canonical_json,
    dataset_to_dict,
    graph_from_dict,
    graph_to_dict,
    load_dataset_json,
    load_tu_dataset,
    write_tu_dataset,
)
from linear_fgw.services.worker_pool import WorkerPool

logger = logging.getLogger("pipeline_runner")

# alpha used by `verify` when none is configured
VERIFY_ALPHA = 0.5

COMMANDS = ("barycenter", "embed", "gram", "classify", "cluster", "bench", "verify", "generate")

# a reference id as written to reference.json and embeddings.json
REFERENCE_ID_PATTERN = re.compile(r"[0-9a-f]{64}")

# `cluster` propagates features one WL round unless --wl-depth is given
CLUSTER_WL_DEPTH = 1


class PipelineRunner:
    """
    Orchestrates one CLI command: loads the dataset, obtains the reference, runs the numerical services on worker
    threads and writes every artifact with a provenance block.
    """

    def __init__(
        self,
        config: PipelineConfig,
        object_storage: Storage,
        worker_pool: WorkerPool,
        run_id_context_var: ContextVar,
    ) -> None:
        self.config = config
        self.object_storage = object_storage
        self.worker_pool = worker_pool
        self.run_id_context_var = run_id_context_var
        self.artifacts = ArtifactWriter(config.output_dir)

    async def run(self, command: str) -> list[str]:
        """Run `command` and return the paths it wrote."""
        if command not in COMMANDS:
            raise UsageError(f"Unknown command {command!r}, expected one of {', '.join(COMMANDS)}")
        self.run_id_context_var.set(self.run_id(command))
        logger.info("Running %s", command)
        await getattr(self, f"cmd_{command}")()
        logger.info("Finished %s, wrote %s", command, ", ".join(self.artifacts.written))
        return self.artifacts.written

    def run_id(self, command: str) -> str:
        """Derived from the command and the configuration, so identical runs write identical artifacts."""
        document = canonical_json({"command": command, "config": self.config_document})
        return str(uuid.uuid5(uuid.NAMESPACE_OID, document.decode()))

    @cached_property
    def config_document(self) -> dict:
        return self.config.model_dump(mode="json")

    def provenance(self, input_hash: str) -> dict:
        return provenance(self.config_document, input_hash, self.run_id_context_var.get() or "")

    def solver_config(self) -> SolverConfig:
        if self.config.alpha is None:
            raise UsageError("This command needs an explicit alpha (--alpha or LFGW_ALPHA)")
        return self.config.solver_config()

    # datasets and references

    def load_raw_dataset(self) -> GraphDataset:
        config = self.config
        if config.synthetic:
            classes = len(config.synthetic_edge_probs)
            return synthetic_dataset(
                SyntheticSpec(
                    graphs_per_class=math.ceil(config.num_graphs / classes),
                    num_nodes=config.synthetic_nodes,
                    edge_probs=config.synthetic_edge_probs,
                    feature_means=config.synthetic_feature_means,
                    feature_dim=config.synthetic_feature_dim,
                    seed=config.seed,
                )
            )
        if config.dataset_json is not None:
            return load_dataset_json(Path(config.dataset_json))
        if config.dataset_name is not None:
            return load_tu_dataset(Path(config.dataset_root), config.dataset_name)
        raise UsageError("No dataset given: set --dataset-name, --dataset-json or --synthetic")

    def prepare(self, dataset: GraphDataset, wl_depth: int) -> GraphDataset:
        # WL reads neighbours from the adjacency, so it runs before the shortest-path swap
        dataset = dataset.map_graphs(lambda g: wl_propagate(g, wl_depth))
        if self.config.structure == "shortest-path":
            dataset = dataset.map_graphs(shortest_path_structure)
        return dataset

    @cached_property
    def raw_dataset(self) -> GraphDataset:
        dataset = self.load_raw_dataset()
        if len(dataset) == 0:
            raise InputError(f"Dataset {dataset.name} has no graphs")
        logger.info("Dataset %s", dataset_statistics(dataset))
        return dataset

    @cached_property
    def input_hash(self) -> str:
        return content_hash(canonical_json(dataset_to_dict(self.raw_dataset)))

    def default_reference_size(self, dataset: GraphDataset) -> int:
        return max(1, int(round(float(np.median([g.num_nodes for g in dataset])))))

    async def load_reference(self, path: str) -> MeasureGraph:
        """Read a reference from a JSON file, or from the object store when `path` is a stored reference id."""
        reference_file = anyio.Path(path)
        if await reference_file.is_file():
            text = await reference_file.read_text()
        elif REFERENCE_ID_PATTERN.fullmatch(path) and await self.object_storage.exists(path):
            logger.info("Using stored reference %s", path[:12])
            text = (await self.object_storage.read(path)).decode()
        else:
            raise DatasetFormatError(f"Reference not found as a file or a stored reference id: {path}")
        try:
            document = json.loads(text)
        except json.JSONDecodeError as e:
            raise DatasetFormatError(f"{path} is not valid JSON: {e}")
        if not isinstance(document, dict):
            raise DatasetFormatError(f"{path} does not hold a reference graph")
        return graph_from_dict(document.get("reference", document))

    async def fit_reference(self, dataset: GraphDataset, cfg: SolverConfig) -> BarycenterResult:
        cfg_b = self.config.barycenter_config(self.default_reference_size(dataset))
        logger.info("Computing a %s-node barycenter of %s graphs", cfg_b.num_nodes, len(dataset))
        return await anyio.to_thread.run_sync(lambda: fit_barycenter(dataset, cfg_b, cfg, self.worker_pool))

    async def reference_for(self, dataset: GraphDataset, cfg: SolverConfig) -> MeasureGraph:
        if self.config.reference_path is not None:
            reference = await self.load_reference(self.config.reference_path)
        else:
            reference = (await self.fit_reference(dataset, cfg)).reference
        if reference.feature_dim != dataset.feature_dim:
            raise ShapeError(
                f"Reference has {reference.feature_dim} features but the prepared dataset has {dataset.feature_dim}"
            )
        await self.object_storage.write(canonical_json(graph_to_dict(reference)))
        return reference

    async def embeddings_for(
        self, dataset: GraphDataset, cfg: SolverConfig
    ) -> tuple[MeasureGraph, list[GraphEmbedding]]:
        reference = await self.reference_for(dataset, cfg)
        embeddings = await anyio.to_thread.run_sync(
            lambda: embed_dataset(dataset, reference, cfg, self.worker_pool)
        )
        return reference, embeddings

    async def distances_for(self, dataset: GraphDataset, cfg: SolverConfig) -> np.ndarray:
        if self.config.distance == "fgw":
            return await anyio.to_thread.run_sync(lambda: pairwise_fgw(dataset, cfg, self.worker_pool))
        _, embeddings = await self.embeddings_for(dataset, cfg)
        return distances_from_embeddings(embeddings)

    # commands

    async def cmd_barycenter(self) -> None:
        cfg = self.solver_config()
        dataset = self.prepare(self.raw_dataset, self.config.wl_depth)
        result = await self.fit_reference(dataset, cfg)
        reference_hash = await self.object_storage.write(canonical_json(graph_to_dict(result.reference)))
        await self.artifacts.write_report(
            "reference.json",
            {
                "reference": graph_to_dict(result.reference),
                "reference_id": reference_hash,
                "objective_history": list(result.objective_history),
                "converged": result.converged,
            },
            self.provenance(self.input_hash),
        )

    async def cmd_embed(self) -> None:
        cfg = self.solver_config()
        dataset = self.prepare(self.raw_dataset, self.config.wl_depth)
        reference, embeddings = await self.embeddings_for(dataset, cfg)
        await self.artifacts.write_text("embeddings.csv", embeddings_csv(embeddings, dataset))
        await self.artifacts.write_report(
            "embeddings.json",
            {
                "num_graphs": len(embeddings),
                "reference_nodes": reference.num_nodes,
                "feature_dim": reference.feature_dim,
                "alpha": cfg.alpha,
                "eta": cfg.eta,
                "outer_iters": cfg.outer_iters,
                "reference_id": reference_id(reference),
            },
            self.provenance(self.input_hash),
        )

    async def cmd_gram(self) -> None:
        cfg = self.solver_config()
        dataset = self.prepare(self.raw_dataset, self.config.wl_depth)
        distances = await self.distances_for(dataset, cfg)
        gram = gram_from_distances(distances, self.config.gamma, "FGW" if self.config.distance == "fgw" else "linearFGW")
        await self.artifacts.write_text("gram.csv", matrix_csv(gram.values))
        await self.artifacts.write_bytes("gram.bin", gram_binary(gram.values))
        await self.artifacts.write_report("gram.json", gram.psd_report(), self.provenance(self.input_hash))
        if not gram.is_psd():
            logger.warning("Gram matrix is indefinite: min/max eigenvalue ratio %.3g", gram.min_eigen_ratio())

    async def cmd_classify(self) -> None:
        config = self.config
        if not self.raw_dataset.is_labeled:
            raise InputError(f"Dataset {self.raw_dataset.name} has no graph labels to classify")
        alphas = [config.alpha] if config.alpha is not None else config.alpha_grid
        grid = ParamGrid(C=config.c_grid, gamma=config.gamma_grid, alpha=alphas, wl_depth=config.wl_grid)
        if config.reference_path is not None and len(alphas) * len(config.wl_grid) > 1:
            raise UsageError("A fixed reference only fits a single (alpha, wl_depth) configuration")

        distances = {}
        for alpha in grid.alpha:
            for wl_depth in grid.wl_depth:
                logger.info("Distances for alpha=%s, wl_depth=%s", alpha, wl_depth)
                dataset = self.prepare(self.raw_dataset, wl_depth)
                distances[alpha, wl_depth] = await self.distances_for(dataset, config.solver_config(alpha))

        report = await anyio.to_thread.run_sync(
            lambda: cross_validate(
                distances,
                self.raw_dataset.labels(),
                grid,
                folds=config.folds,
                repeats=config.repeats,
                inner_folds=config.inner_folds,
                seed=config.seed,
                source="FGW" if config.distance == "fgw" else "linearFGW",
                pool=self.worker_pool,
            )
        )
        logger.info("Accuracy %.4f +- %.4f", report.mean_accuracy, report.std_accuracy)
        await self.artifacts.write_report("classify.json", report.as_dict(), self.provenance(self.input_hash))

    async def cmd_cluster(self) -> None:
        config = self.config
        cfg = self.solver_config()
        wl_depth = config.wl_depth if "wl_depth" in config.model_fields_set else CLUSTER_WL_DEPTH
        dataset = self.prepare(self.raw_dataset, wl_depth)
        k = config.clusters or dataset.num_classes
        _, embeddings = await self.embeddings_for(dataset, cfg)
        points = embedding_matrix(embeddings)
        kmeans_labels = kmeans_embeddings(points, k, seed=config.seed)
        gram = gram_from_distances(distances_from_embeddings(embeddings), config.gamma)
        spectral_labels = spectral_clustering(gram, k, seed=config.seed)

        def scores(labels: np.ndarray) -> dict:
            result = {"labels": labels.tolist()}
            if dataset.is_labeled:
                result["ari"] = adjusted_rand_index(dataset.labels(), labels)
                result["accuracy"] = clustering_accuracy(dataset.labels(), labels)
            return result

        report = {
            "clusters": k,
            "wl_depth": wl_depth,
            "kmeans": scores(kmeans_labels),
            "spectral": scores(spectral_labels),
        }
        if dataset.is_labeled:
            logger.info("ARI k-means %.4f, spectral %.4f", report["kmeans"]["ari"], report["spectral"]["ari"])
        await self.artifacts.write_report("cluster.json", report, self.provenance(self.input_hash))

    async def cmd_bench(self) -> None:
        cfg = self.solver_config()
        dataset = self.prepare(self.raw_dataset, self.config.wl_depth)
        pool = self.worker_pool

        def fgw_path() -> np.ndarray:
            return pairwise_fgw(dataset, cfg, pool)

        def linear_path() -> np.ndarray:
            cfg_b = self.config.barycenter_config(self.default_reference_size(dataset))
            reference = fit_barycenter(dataset, cfg_b, cfg, pool).reference
            return distances_from_embeddings(embed_dataset(dataset, reference, cfg, pool))

        start = time.perf_counter()
        fgw_distances = await anyio.to_thread.run_sync(fgw_path)
        t_fgw = time.perf_counter() - start
        start = time.perf_counter()
        linear_distances = await anyio.to_thread.run_sync(linear_path)
        t_linear = time.perf_counter() - start

        upper = np.triu_indices(len(dataset), k=1)
        mean_abs_diff = float(np.abs(fgw_distances[upper] - linear_distances[upper]).mean()) if len(dataset) > 1 else 0.0
        report = {
            "n_graphs": len(dataset),
            "threads": pool.threads,
            "t_fgw": t_fgw,
            "t_linear": t_linear,
            "speedup": t_fgw / t_linear if t_linear > 0 else math.inf,
            "mean_abs_diff": mean_abs_diff,
        }
        logger.info("FGW %.2fs, linearFGW %.2fs, speedup %.1fx", t_fgw, t_linear, report["speedup"])
        await self.artifacts.write_report("bench.json", report, self.provenance(self.input_hash))

    async def cmd_verify(self) -> None:
        config = self.config
        cfg = config.solver_config(config.alpha if config.alpha is not None else VERIFY_ALPHA)
        summary = await anyio.to_thread.run_sync(
            lambda: verification_suite(
                trials=config.trials,
                max_nodes=config.max_nodes,
                cfg=cfg,
                seed=config.seed,
                tol=config.tol,
                pool=self.worker_pool,
            )
        )
        await self.artifacts.write_report("verify.json", summary.as_dict(), self.provenance(input_hash=""))
        if summary.failed_checks:
            raise VerificationFailure(
                f"{summary.failed_checks} of the randomized checks failed, see verify.json",
                failed_checks=summary.failed_checks,
            )

    async def cmd_generate(self) -> None:
        dataset = self.raw_dataset
        await self.artifacts.write_json(f"{dataset.name}.json", dataset_to_dict(dataset))
        await anyio.to_thread.run_sync(
            lambda: write_tu_dataset(dataset, Path(self.config.output_dir) / dataset.name)
        )
        await self.artifacts.write_report(
            f"{dataset.name}.stats.json", dataset_statistics(dataset), self.provenance(self.input_hash)
        )

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
from pathlib import Path

import numpy as np
from pydantic import validate_call

from linear_fgw.errors import InputError
from linear_fgw.services.graph_core import GraphDataset, MeasureGraph
from linear_fgw.utils.validation import DatasetName

logger = logging.getLogger("graph_core")


class DatasetFormatError(InputError):
    pass


class DatasetCorruptionError(InputError):
    pass


def _read_matrix(path: Path, dtype) -> np.ndarray:
    try:
        return np.loadtxt(path, delimiter=",", dtype=dtype, ndmin=2)
    except ValueError as e:
        raise DatasetCorruptionError(f"Cannot parse {path.name}: {e}")


@validate_call
def load_tu_dataset(root_dir: Path, name: DatasetName) -> GraphDataset:
    """
    Load a dataset in the TU-Dortmund benchmark text format from `root_dir` (either the directory holding the
    `{name}_*.txt` files or its parent).

    Continuous node attributes become the features. Without them, discrete node labels are one-hot encoded, and
    without either every node gets the constant feature 1.0. All measures are uniform.
    """
    directory = root_dir / name if (root_dir / name).is_dir() else root_dir
    if not directory.is_dir():
        raise DatasetFormatError(f"Dataset directory not found: {directory}")

    def part(suffix: str) -> Path:
        return directory / f"{name}_{suffix}.txt"

    for mandatory in ("A", "graph_indicator"):
        if not part(mandatory).is_file():
            raise DatasetFormatError(f"Missing mandatory file {part(mandatory).name} in {directory}")

    graph_indicator = _read_matrix(part("graph_indicator"), np.int64)[:, 0]
    num_nodes = graph_indicator.shape[0]
    if num_nodes == 0:
        raise DatasetCorruptionError(f"{part('graph_indicator').name} lists no nodes")
    if graph_indicator.min() < 1:
        raise DatasetCorruptionError(f"Graph ids must start at 1 in {part('graph_indicator').name}")
    graph_ids = np.arange(1, graph_indicator.max() + 1)
    nodes_per_graph = np.bincount(graph_indicator, minlength=graph_ids.shape[0] + 1)[1:]
    if np.any(nodes_per_graph == 0):
        raise DatasetCorruptionError(f"Graphs without nodes in {name}: {graph_ids[nodes_per_graph == 0].tolist()}")

    edges = _read_matrix(part("A"), np.int64) if part("A").stat().st_size else np.zeros((0, 2), np.int64)
    if edges.shape[1] != 2:
        raise DatasetCorruptionError(f"{part('A').name} must hold comma-separated node pairs")
    if edges.size and (edges.min() < 1 or edges.max() > num_nodes):
        raise DatasetCorruptionError(f"Node index out of range [1, {num_nodes}] in {part('A').name}")
    edges = edges - 1
    if np.any(graph_indicator[edges[:, 0]] != graph_indicator[edges[:, 1]]):
        raise DatasetCorruptionError(f"{part('A').name} has edges between different graphs")

    if part("node_attributes").is_file():
        features = _read_matrix(part("node_attributes"), np.float64)
    elif part("node_labels").is_file():
        node_labels = _read_matrix(part("node_labels"), np.int64)[:, 0]
        values, codes = np.unique(node_labels, return_inverse=True)
        features = np.eye(values.shape[0])[codes]
    else:
        features = np.ones((num_nodes, 1))
    if features.shape[0] != num_nodes:
        raise DatasetCorruptionError(f"{features.shape[0]} feature rows for {num_nodes} nodes in {name}")

    labels: np.ndarray | None = None
    num_classes = 1
    if part("graph_labels").is_file():
        raw_labels = _read_matrix(part("graph_labels"), np.int64)[:, 0]
        if raw_labels.shape[0] != graph_ids.shape[0]:
            raise DatasetCorruptionError(f"{raw_labels.shape[0]} graph labels for {graph_ids.shape[0]} graphs")
        classes, labels = np.unique(raw_labels, return_inverse=True)
        num_classes = classes.shape[0]

    # local index of every node inside its own graph
    order = np.argsort(graph_indicator, kind="stable")
    local_index = np.empty(num_nodes, dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(nodes_per_graph)])
    for g in range(graph_ids.shape[0]):
        local_index[order[offsets[g] : offsets[g + 1]]] = np.arange(nodes_per_graph[g])

    edge_graph = graph_indicator[edges[:, 0]] - 1
    graphs = []
    for g in range(graph_ids.shape[0]):
        members = order[offsets[g] : offsets[g + 1]]
        adjacency = np.zeros((nodes_per_graph[g], nodes_per_graph[g]))
        own = edges[edge_graph == g]
        adjacency[local_index[own[:, 0]], local_index[own[:, 1]]] = 1.0
        adjacency[local_index[own[:, 1]], local_index[own[:, 0]]] = 1.0
        graphs.append(
            MeasureGraph.uniform(
                features=features[members],
                structure=adjacency,
                label=None if labels is None else int(labels[g]),
            )
        )

    dataset = GraphDataset(graphs=tuple(graphs), name=name, num_classes=num_classes)
    logger.info(
        "Loaded dataset %s: %s graphs, %s classes, %s features",
        name,
        len(dataset),
        num_classes,
        dataset.feature_dim,
    )
    return dataset


def write_tu_dataset(dataset: GraphDataset, directory: Path) -> None:
    """
    Write a dataset back out in the TU-Dortmund text format. Structures are written as edge lists, so only the
    nonzero pattern of each structure matrix survives.
    """
    directory.mkdir(parents=True, exist_ok=True)
    name = dataset.name
    edge_lines, indicator_lines, attribute_lines = [], [], []
    offset = 0
    for graph_id, g in enumerate(dataset, start=1):
        for i, j in g.edges():
            edge_lines.append(f"{offset + i + 1}, {offset + j + 1}")
            edge_lines.append(f"{offset + j + 1}, {offset + i + 1}")
        indicator_lines.extend(str(graph_id) for _ in range(g.num_nodes))
        attribute_lines.extend(", ".join(repr(float(v)) for v in row) for row in g.features)
        offset += g.num_nodes

    (directory / f"{name}_A.txt").write_text("".join(line + "\n" for line in edge_lines))
    (directory / f"{name}_graph_indicator.txt").write_text("".join(line + "\n" for line in indicator_lines))
    (directory / f"{name}_node_attributes.txt").write_text("".join(line + "\n" for line in attribute_lines))
    if dataset.is_labeled:
        (directory / f"{name}_graph_labels.txt").write_text("".join(f"{g.label}\n" for g in dataset))


def graph_to_dict(g: MeasureGraph) -> dict:
    """Dense form of a measure graph, used for reference barycenters."""
    return {
        "num_nodes": g.num_nodes,
        "features": g.features.tolist(),
        "structure": g.structure.tolist(),
        "measure": g.measure.tolist(),
        "label": g.label,
    }


def graph_from_dict(data: dict) -> MeasureGraph:
    try:
        return MeasureGraph(
            features=np.array(data["features"], dtype=np.float64).reshape(data["num_nodes"], -1),
            structure=np.array(data["structure"], dtype=np.float64),
            measure=np.array(data["measure"], dtype=np.float64),
            label=data.get("label"),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise DatasetFormatError(f"Malformed measure graph document: {e}")


def dataset_to_dict(dataset: GraphDataset) -> dict:
    return {
        "name": dataset.name,
        "num_classes": dataset.num_classes,
        "graphs": [
            {
                "num_nodes": g.num_nodes,
                "edges": [list(edge) for edge in g.edges()],
                "features": g.features.tolist(),
                "label": g.label,
            }
            for g in dataset
        ],
    }


def dataset_from_dict(data: dict) -> GraphDataset:
    graphs = []
    try:
        for entry in data["graphs"]:
            m = entry["num_nodes"]
            if m < 1:
                raise DatasetCorruptionError("Graph with zero nodes in dataset document")
            adjacency = np.zeros((m, m))
            for i, j in entry["edges"]:
                if not (0 <= i < m and 0 <= j < m):
                    raise DatasetCorruptionError(f"Edge ({i}, {j}) out of range for a {m}-node graph")
                adjacency[i, j] = adjacency[j, i] = 1.0
            features = np.array(entry["features"], dtype=np.float64).reshape(m, -1)
            graphs.append(MeasureGraph.uniform(features=features, structure=adjacency, label=entry.get("label")))
        return GraphDataset(graphs=tuple(graphs), name=data["name"], num_classes=data.get("num_classes", 1))
    except (KeyError, TypeError, ValueError) as e:
        raise DatasetFormatError(f"Malformed dataset document: {e}")


def canonical_json(document: dict) -> bytes:
    """Deterministic JSON bytes, the basis of every content hash."""
    return json.dumps(document, sort_keys=True, separators=(",", ":")).encode()


def load_dataset_json(path: Path) -> GraphDataset:
    if not path.is_file():
        raise DatasetFormatError(f"Dataset file not found: {path}")
    try:
        document = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise DatasetFormatError(f"{path} is not valid JSON: {e}")
    return dataset_from_dict(document)

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
import struct
from typing import Mapping, Sequence

import numpy as np
from anyio import Path
from frozendict import frozendict

from linear_fgw.errors import InputError
from linear_fgw.services.graph_core import GraphDataset
from linear_fgw.services.linear_fgw import GraphEmbedding

logger = logging.getLogger("artifacts")

# little-endian unsigned 64-bit matrix size
GRAM_HEADER = struct.Struct("<Q")


def json_bytes(document: Mapping) -> bytes:
    """Pretty, key-sorted JSON; identical documents give identical bytes."""
    return (json.dumps(document, sort_keys=True, indent=2, default=_jsonable) + "\n").encode()


def _jsonable(value):
    if isinstance(value, frozendict):
        return dict(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def provenance(config: Mapping, input_hash: str, run_id: str) -> frozendict:
    return frozendict(config=frozendict(config), input_hash=input_hash, run_id=run_id)


def _float(value: float) -> str:
    return repr(float(value))


def embeddings_csv(embeddings: Sequence[GraphEmbedding], dataset: GraphDataset) -> str:
    """One row per graph: index, label (empty when unlabeled), then the K*d node and K*K edge entries."""
    if not embeddings:
        return "graph,label\n"
    K, d = embeddings[0].num_reference_nodes, embeddings[0].feature_dim
    header = ["graph", "label"]
    header += [f"node_{k}_{j}" for k in range(K) for j in range(d)]
    header += [f"edge_{k}_{l}" for k in range(K) for l in range(K)]
    lines = [",".join(header)]
    for index, (embedding, g) in enumerate(zip(embeddings, dataset)):
        label = "" if g.label is None else str(g.label)
        lines.append(",".join([str(index), label, *map(_float, embedding.vector())]))
    return "\n".join(lines) + "\n"


def matrix_csv(values: np.ndarray) -> str:
    return "".join(",".join(map(_float, row)) + "\n" for row in values)


def gram_binary(values: np.ndarray) -> bytes:
    """8-byte little-endian N, then N*N little-endian float64 values in row-major order."""
    values = np.asarray(values, dtype="<f8")
    return GRAM_HEADER.pack(values.shape[0]) + np.ascontiguousarray(values).tobytes(order="C")


def read_gram_binary(data: bytes) -> np.ndarray:
    if len(data) < GRAM_HEADER.size:
        raise InputError("Gram blob is shorter than its header")
    (n,) = GRAM_HEADER.unpack_from(data)
    if len(data) != GRAM_HEADER.size + 8 * n * n:
        raise InputError(f"Gram blob of {len(data)} bytes does not hold a {n}x{n} float64 matrix")
    return np.frombuffer(data, dtype="<f8", offset=GRAM_HEADER.size).reshape(n, n).copy()


class ArtifactWriter:
    """Writes run outputs under one directory and records every path written."""

    def __init__(self, output_dir: str):
        self.output_dir = Path(output_dir)
        self.written: list[str] = []

    async def _write(self, name: str, data: bytes) -> Path:
        await self.output_dir.mkdir(parents=True, exist_ok=True)
        path = self.output_dir / name
        await path.write_bytes(data)
        self.written.append(str(path))
        logger.debug("Wrote %s (%s bytes)", path, len(data))
        return path

    async def write_json(self, name: str, document: Mapping) -> Path:
        return await self._write(name, json_bytes(document))

    async def write_text(self, name: str, text: str) -> Path:
        return await self._write(name, text.encode())

    async def write_bytes(self, name: str, data: bytes) -> Path:
        return await self._write(name, data)

    async def write_report(self, name: str, report: Mapping, provenance_block: Mapping = frozendict()) -> Path:
        return await self.write_json(name, {**report, "provenance": provenance_block})

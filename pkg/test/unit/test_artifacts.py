import json
from pathlib import Path

import numpy as np
import pytest
from frozendict import frozendict

from linear_fgw.config import SolverConfig
from linear_fgw.errors import InputError
from linear_fgw.services.artifacts import (
    ArtifactWriter,
    embeddings_csv,
    gram_binary,
    json_bytes,
    matrix_csv,
    provenance,
    read_gram_binary,
)
from linear_fgw.services.graph_core import GraphDataset, MeasureGraph
from linear_fgw.services.linear_fgw import embed


def test_gram_blob_layout():
    values = np.array([[1.0, 0.25], [0.25, 1.0]])
    blob = gram_binary(values)
    assert len(blob) == 8 + 4 * 8
    assert blob[:8] == (2).to_bytes(8, "little")
    np.testing.assert_array_equal(read_gram_binary(blob), values)


def test_truncated_gram_blob():
    with pytest.raises(InputError):
        read_gram_binary(gram_binary(np.eye(3))[:-8])
    with pytest.raises(InputError):
        read_gram_binary(b"\x01")


def test_matrix_csv_is_exact():
    text = matrix_csv(np.array([[0.1, 1 / 3]]))
    assert text == f"{0.1!r},{1 / 3!r}\n"
    assert float(text.strip().split(",")[1]) == 1 / 3


def test_embeddings_csv(triangle: MeasureGraph):
    dataset = GraphDataset(graphs=(triangle, triangle.permuted([1, 2, 0])), name="pair")
    embeddings = [embed(triangle, g, SolverConfig(alpha=0.5)) for g in dataset]
    lines = embeddings_csv(embeddings, dataset).splitlines()
    header = lines[0].split(",")
    assert header[:4] == ["graph", "label", "node_0_0", "node_1_0"]
    assert header[-1] == "edge_2_2"
    assert len(header) == 2 + 3 + 9
    assert len(lines) == 3
    assert lines[1].startswith("0,,")


def test_json_bytes_are_canonical():
    document = {"b": np.float64(0.5), "a": frozendict(x=np.arange(2))}
    assert json_bytes(document) == json_bytes(dict(reversed(list(document.items()))))
    assert json.loads(json_bytes(document)) == {"a": {"x": [0, 1]}, "b": 0.5}


@pytest.mark.anyio
async def test_writer_adds_provenance(tmp_path: Path):
    writer = ArtifactWriter(str(tmp_path / "out"))
    block = provenance({"alpha": 0.5}, "abc", "run")
    await writer.write_report("report.json", {"value": 1}, block)
    await writer.write_text("notes.txt", "hello")
    document = json.loads((tmp_path / "out" / "report.json").read_text())
    assert document == {"value": 1, "provenance": {"config": {"alpha": 0.5}, "input_hash": "abc", "run_id": "run"}}
    assert writer.written == [str(tmp_path / "out" / "report.json"), str(tmp_path / "out" / "notes.txt")]

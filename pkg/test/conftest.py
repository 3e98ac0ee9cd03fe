import numpy as np
import pytest

from linear_fgw.config import SolverConfig
from linear_fgw.services.graph_core import MeasureGraph


def quartic_fgw_objective(g1: MeasureGraph, g2: MeasureGraph, plan: np.ndarray, alpha: float) -> float:
    """The FGW objective as the literal four-index sum."""
    total = 0.0
    m, n = plan.shape
    for i in range(m):
        for j in range(n):
            feature = float(np.sum((g1.features[i] - g2.features[j]) ** 2))
            for k in range(m):
                for l in range(n):
                    structure = (g1.structure[i, k] - g2.structure[j, l]) ** 2
                    total += ((1 - alpha) * feature + alpha * structure) * plan[i, j] * plan[k, l]
    return total


@pytest.fixture
def strong_solver() -> SolverConfig:
    return SolverConfig(alpha=0.5, eta=0.5, outer_iters=30, inner_sinkhorn_iters=1000, sinkhorn_tol=1e-12)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def triangle() -> MeasureGraph:
    adjacency = np.ones((3, 3)) - np.eye(3)
    return MeasureGraph.uniform(features=np.array([[0.0], [1.0], [3.0]]), structure=adjacency)


@pytest.fixture
def path4() -> MeasureGraph:
    adjacency = np.diag(np.ones(3), 1) + np.diag(np.ones(3), -1)
    return MeasureGraph(
        features=np.array([[0.5], [1.0], [2.0], [-1.0]]),
        structure=adjacency,
        measure=np.array([0.1, 0.2, 0.3, 0.4]),
    )

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
from typing import Callable

import numpy as np
from pydantic import InstanceOf, validate_call
from scipy.special import logsumexp

from linear_fgw.config import SolverConfig
from linear_fgw.errors import InputError, NumericalError, UsageError
from linear_fgw.services.graph_core import MeasureGraph, ShapeError
from linear_fgw.services.storage import content_hash
from linear_fgw.utils.validation import ARRAYS_ALLOWED, Alpha

logger = logging.getLogger("ot_solvers")


class NonFiniteCostError(InputError):
    pass


class SinkhornUnderflowError(NumericalError):
    pass


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """A coupling pi (m x n) between a source measure (length m) and a target measure (length n)."""

    coupling: np.ndarray
    source_measure: np.ndarray
    target_measure: np.ndarray

    def __post_init__(self):
        shape = (self.source_measure.shape[0], self.target_measure.shape[0])
        if self.coupling.shape != shape:
            raise ShapeError(f"Coupling has shape {self.coupling.shape}, marginals need {shape}")

    @classmethod
    def diagonal(cls, measure: np.ndarray) -> "TransportPlan":
        return cls(coupling=np.diag(measure), source_measure=measure, target_measure=measure)

    @classmethod
    def independent(cls, source_measure: np.ndarray, target_measure: np.ndarray) -> "TransportPlan":
        return cls(
            coupling=np.outer(source_measure, target_measure),
            source_measure=source_measure,
            target_measure=target_measure,
        )

    @property
    def shape(self) -> tuple[int, int]:
        return self.coupling.shape

    def marginal_residual(self) -> float:
        """Largest absolute deviation of a row or column sum from its prescribed marginal."""
        return float(
            max(
                np.abs(self.coupling.sum(axis=1) - self.source_measure).max(),
                np.abs(self.coupling.sum(axis=0) - self.target_measure).max(),
            )
        )

    def is_feasible(self, tol: float = 1e-7) -> bool:
        return bool(np.all(self.coupling >= 0)) and self.marginal_residual() <= tol

    def transpose(self) -> "TransportPlan":
        return TransportPlan(
            coupling=self.coupling.T.copy(),
            source_measure=self.target_measure,
            target_measure=self.source_measure,
        )


@dataclass(frozen=True, eq=False)
class FgwResult:
    value: float
    plan: TransportPlan
    converged: bool
    residual: float
    objective_history: tuple[float, ...] = ()


def feature_cost_matrix(g1: MeasureGraph, g2: MeasureGraph) -> np.ndarray:
    """
    D_ij = ||x_i - y_j||^2 through the squared-norm expansion, clamped at 0 against round-off.
    """
    X, Y = g1.features, g2.features
    if X.shape[1] != Y.shape[1]:
        raise ShapeError(f"Feature dimensions differ: {X.shape[1]} vs {Y.shape[1]}")
    squared = (X * X).sum(axis=1)[:, None] + (Y * Y).sum(axis=1)[None, :] - 2.0 * X @ Y.T
    return np.maximum(squared, 0.0)


def structure_cost_matrix(A: np.ndarray, B: np.ndarray, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """C_12 = (A * A) p 1^T + 1 q^T (B * B)^T."""
    return ((A * A) @ p)[:, None] + ((B * B) @ q)[None, :]


@validate_call(config=ARRAYS_ALLOWED)
def evaluate_fgw_objective(
    g1: InstanceOf[MeasureGraph],
    g2: InstanceOf[MeasureGraph],
    plan: InstanceOf[TransportPlan],
    alpha: Alpha,
) -> float:
    """
    sum_{i,j,k,l} [(1 - alpha) ||x_i - y_j||^2 + alpha |A_ik - B_jl|^2] pi_ij pi_kl.

    The structure term is evaluated as <C_12 - 2 A pi B^T, pi> with C_12 built from the plan's own marginals,
    which matches the quartic sum for any nonnegative plan of unit mass, feasible or not.
    """
    P = plan.coupling
    if P.shape != (g1.num_nodes, g2.num_nodes):
        raise ShapeError(f"Plan shape {P.shape} does not match graphs {(g1.num_nodes, g2.num_nodes)}")
    A, B = g1.structure, g2.structure
    value = 0.0
    if alpha < 1.0:
        value += (1.0 - alpha) * float(np.sum(feature_cost_matrix(g1, g2) * P))
    if alpha > 0.0:
        structure_term = structure_cost_matrix(A, B, P.sum(axis=1), P.sum(axis=0)) - 2.0 * A @ P @ B.T
        value += alpha * float(np.sum(structure_term * P))
    return max(value, 0.0)


def round_to_polytope(P: np.ndarray, mu: np.ndarray, nu: np.ndarray) -> np.ndarray:
    """
    Project an approximately feasible plan onto the coupling polytope: scale rows then columns down to their
    marginals and spread the leftover mass as a rank-one correction.
    """
    row_sums = P.sum(axis=1)
    P = P * np.minimum(1.0, np.divide(mu, row_sums, out=np.ones_like(mu), where=row_sums > 0))[:, None]
    col_sums = P.sum(axis=0)
    P = P * np.minimum(1.0, np.divide(nu, col_sums, out=np.ones_like(nu), where=col_sums > 0))[None, :]
    row_error = np.maximum(mu - P.sum(axis=1), 0.0)
    col_error = np.maximum(nu - P.sum(axis=0), 0.0)
    missing = row_error.sum()
    if missing > 0:
        P = P + np.outer(row_error, col_error) / missing
    return P


def _sinkhorn_linear(kernel: np.ndarray, mu: np.ndarray, nu: np.ndarray, cfg: SolverConfig):
    u = np.ones_like(mu)
    v = np.ones_like(nu)
    residual = np.inf
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        for _ in range(cfg.inner_sinkhorn_iters):
            u = mu / (kernel @ v)
            v = nu / (kernel.T @ u)
            if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
                return None
            residual = float(np.abs(u * (kernel @ v) - mu).sum())
            if residual <= cfg.sinkhorn_tol:
                break
    return u[:, None] * kernel * v[None, :], residual


def _sinkhorn_log(log_kernel: np.ndarray, mu: np.ndarray, nu: np.ndarray, cfg: SolverConfig):
    if np.any(np.all(np.isneginf(log_kernel), axis=1)) or np.any(np.all(np.isneginf(log_kernel), axis=0)):
        raise SinkhornUnderflowError(
            f"Sinkhorn kernel has an all-zero row or column even in the log domain; increase eta (now {cfg.eta})"
        )
    with np.errstate(divide="ignore"):
        log_mu, log_nu = np.log(mu), np.log(nu)
    f = np.zeros_like(mu)
    g = np.zeros_like(nu)
    residual = np.inf
    for _ in range(cfg.inner_sinkhorn_iters):
        f = log_mu - logsumexp(log_kernel + g[None, :], axis=1)
        g = log_nu - logsumexp(log_kernel + f[:, None], axis=0)
        residual = float(np.abs(np.exp(logsumexp(log_kernel + f[:, None] + g[None, :], axis=1)) - mu).sum())
        if residual <= cfg.sinkhorn_tol:
            break
    return np.exp(log_kernel + f[:, None] + g[None, :]), residual


def proximal_step(
    cost: np.ndarray, previous: np.ndarray, mu: np.ndarray, nu: np.ndarray, cfg: SolverConfig
) -> tuple[np.ndarray, float]:
    """
    argmin_{pi in Pi(mu, nu)} <cost, pi> + eta KL(pi || previous), by Sinkhorn-Knopp scaling of the kernel
    previous * exp(-cost / eta). Switches to log-domain scaling when kernel entries underflow.
    """
    # row shifts are absorbed by the scaling vectors
    shifted = (cost - cost.min(axis=1, keepdims=True)) / cfg.eta
    with np.errstate(under="ignore"):
        kernel = previous * np.exp(-shifted)
    underflow = np.any((kernel == 0) & (previous > 0))
    if not underflow:
        result = _sinkhorn_linear(kernel, mu, nu, cfg)
        if result is not None:
            return result
    logger.debug("Kernel entries underflow at eta=%s, switching to log-domain Sinkhorn", cfg.eta)
    with np.errstate(divide="ignore"):
        log_kernel = np.log(previous) - shifted
    return _sinkhorn_log(log_kernel, mu, nu, cfg)


def _proximal_point(
    linearized_cost: Callable[[np.ndarray], np.ndarray],
    objective: Callable[[np.ndarray], float],
    mu: np.ndarray,
    nu: np.ndarray,
    cfg: SolverConfig,
) -> FgwResult:
    plan = np.outer(mu, nu)
    best_plan, best_value = plan, objective(plan)
    history = []
    residual = 0.0
    for step in range(cfg.outer_iters):
        cost = linearized_cost(plan)
        if not np.all(np.isfinite(cost)):
            raise NonFiniteCostError("Transport cost has non-finite entries")
        plan, residual = proximal_step(cost, plan, mu, nu, cfg)
        plan = round_to_polytope(plan, mu, nu)
        value = objective(plan)
        if value <= best_value:
            best_plan, best_value = plan, value
        else:
            logger.debug("Outer step %s raised the objective to %.6g, keeping %.6g", step + 1, value, best_value)
        # the reported sequence is the running best, the iterates continue from the latest plan
        history.append(best_value)
    converged = residual <= cfg.sinkhorn_tol
    if not converged:
        logger.debug("Sinkhorn stopped at residual %.3e above tolerance %.1e", residual, cfg.sinkhorn_tol)
    return FgwResult(
        value=best_value,
        plan=TransportPlan(coupling=best_plan, source_measure=mu, target_measure=nu),
        converged=converged,
        residual=residual,
        objective_history=tuple(history),
    )


def orientation_key(g: MeasureGraph) -> tuple[int, str]:
    """Node count, then a digest of the graph's arrays."""
    arrays = (g.measure, g.features, g.structure)
    data = b"".join(np.asarray(a.shape, dtype=np.int64).tobytes() + np.ascontiguousarray(a).tobytes() for a in arrays)
    return g.num_nodes, content_hash(data)


def _transposed(result: FgwResult) -> FgwResult:
    return FgwResult(
        value=result.value,
        plan=result.plan.transpose(),
        converged=result.converged,
        residual=result.residual,
        objective_history=result.objective_history,
    )


@validate_call(config=ARRAYS_ALLOWED)
def solve_fgw(g1: InstanceOf[MeasureGraph], g2: InstanceOf[MeasureGraph], cfg: SolverConfig) -> FgwResult:
    """
    FGW distance and plan by the proximal point algorithm: every outer step linearizes the structure term at
    the current plan, giving the cost (1 - alpha) D_12 + alpha (C_12 - 2 A pi B^T), and solves the KL-proximal
    subproblem with Sinkhorn-Knopp. Starts from the independent coupling mu nu^T, so the result is deterministic.

    The pair is always solved with the smaller `orientation_key` as the source and the plan transposed back, so
    solve_fgw(g1, g2) and solve_fgw(g2, g1) give the same value.
    """
    if orientation_key(g2) < orientation_key(g1):
        return _transposed(_solve_oriented(g2, g1, cfg))
    return _solve_oriented(g1, g2, cfg)


def _solve_oriented(g1: MeasureGraph, g2: MeasureGraph, cfg: SolverConfig) -> FgwResult:
    alpha = cfg.alpha
    if min(g1.feature_dim, g2.feature_dim) == 0 and alpha != 1.0:
        raise UsageError("Graphs without node features can only be compared with alpha = 1")
    mu, nu = g1.measure, g2.measure
    A, B = g1.structure, g2.structure

    feature_cost = (1.0 - alpha) * feature_cost_matrix(g1, g2) if alpha < 1.0 else np.zeros((mu.size, nu.size))
    fixed_cost = feature_cost + alpha * structure_cost_matrix(A, B, mu, nu)

    def linearized_cost(plan: np.ndarray) -> np.ndarray:
        if alpha == 0.0:
            return fixed_cost
        return fixed_cost - 2.0 * alpha * (A @ plan @ B.T)

    def objective(plan: np.ndarray) -> float:
        return evaluate_fgw_objective(g1, g2, TransportPlan(plan, mu, nu), alpha)

    return _proximal_point(linearized_cost, objective, mu, nu, cfg)


@validate_call(config=ARRAYS_ALLOWED)
def solve_wasserstein(
    cost: InstanceOf[np.ndarray], mu: InstanceOf[np.ndarray], nu: InstanceOf[np.ndarray], cfg: SolverConfig
) -> FgwResult:
    """Entropic OT plan for a fixed cost, using the same proximal Sinkhorn machinery as `solve_fgw`."""
    cost = np.asarray(cost, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    if cost.shape != (mu.size, nu.size):
        raise ShapeError(f"Cost has shape {cost.shape}, marginals need {(mu.size, nu.size)}")
    if not np.all(np.isfinite(cost)):
        raise NonFiniteCostError("Transport cost has non-finite entries")
    if np.any(cost < 0):
        raise InputError("Transport cost must be nonnegative")

    return _proximal_point(lambda _: cost, lambda plan: float(np.sum(cost * plan)), mu, nu, cfg)

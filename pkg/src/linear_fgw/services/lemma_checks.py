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
import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import permutations
from typing import Iterator, Sequence

import numpy as np
from pydantic import InstanceOf, validate_call

from linear_fgw.config import SolverConfig
from linear_fgw.errors import UsageError
from linear_fgw.services.graph_core import GraphDataset, MeasureGraph, mixing_diameter
from linear_fgw.services.linear_fgw import (
    ApproximationBoundReport,
    barycentric_project,
    embed_with_plan,
    linear_fgw_distance,
    total_approximation_bound,
)
from linear_fgw.services.ot_solvers import TransportPlan, evaluate_fgw_objective, solve_fgw
from linear_fgw.services.synthetic import random_small_graph
from linear_fgw.services.worker_pool import WorkerPool
from linear_fgw.utils.validation import ARRAYS_ALLOWED, PositiveInt

logger = logging.getLogger("lemma_checks")

# largest denominator accepted when reading a measure as a fraction
MAX_DENOMINATOR = 1000

# rounds of witness-driven plan improvement in the projection check
MAX_PLAN_REFINEMENTS = 50

# floor for comparisons that are exact up to floating point
ROUNDOFF_TOL = 1e-12


def measure_resolution(mu: np.ndarray, nu: np.ndarray, refinement: int = 1) -> int:
    """Smallest integer s such that s * mu and s * nu are integral, times `refinement`."""
    denominators = []
    for weight in np.concatenate([mu, nu]):
        fraction = Fraction(float(weight)).limit_denominator(MAX_DENOMINATOR)
        if abs(float(fraction) - weight) > 1e-9:
            raise UsageError(f"Measure weight {weight!r} is not a fraction with denominator <= {MAX_DENOMINATOR}")
        denominators.append(fraction.denominator)
    return math.lcm(*denominators) * refinement


def _compositions(total: int, caps: Sequence[int]) -> Iterator[tuple[int, ...]]:
    if len(caps) == 1:
        if total <= caps[0]:
            yield (total,)
        return
    for first in range(min(total, caps[0]) + 1):
        for rest in _compositions(total - first, caps[1:]):
            yield (first, *rest)


def _tables(row_sums: Sequence[int], col_caps: tuple[int, ...]) -> Iterator[tuple[tuple[int, ...], ...]]:
    if not row_sums:
        if not any(col_caps):
            yield ()
        return
    for row in _compositions(row_sums[0], col_caps):
        remaining = tuple(cap - used for cap, used in zip(col_caps, row))
        for rest in _tables(row_sums[1:], remaining):
            yield (row, *rest)


def enumerate_couplings(mu: np.ndarray, nu: np.ndarray, refinement: int = 1) -> Iterator[np.ndarray]:
    """
    Every coupling of mu and nu whose entries are multiples of 1 / (resolution). The grid always contains the
    vertices of the coupling polytope, since those are integral at the base resolution.
    """
    resolution = measure_resolution(mu, nu, refinement)
    row_sums = [int(round(weight * resolution)) for weight in mu]
    col_sums = tuple(int(round(weight * resolution)) for weight in nu)
    for table in _tables(row_sums, col_sums):
        yield np.array(table, dtype=np.float64) / resolution


def permutation_couplings(measure: np.ndarray) -> Iterator[np.ndarray]:
    """Permutation matrices scaled by a uniform measure: the vertices of the Birkhoff polytope."""
    n = measure.shape[0]
    if not np.allclose(measure, 1.0 / n):
        return
    for permutation in permutations(range(n)):
        plan = np.zeros((n, n))
        plan[np.arange(n), permutation] = 1.0 / n
        yield plan


def brute_force_fgw(g1: MeasureGraph, g2: MeasureGraph, alpha: float, refinement: int = 1) -> tuple[float, np.ndarray]:
    """Minimum of the exact FGW objective over the coupling grid (and permutations, for equal uniform graphs)."""
    mu, nu = g1.measure, g2.measure
    candidates = enumerate_couplings(mu, nu, refinement)
    best_value, best_plan = np.inf, None
    for plan in candidates:
        value = evaluate_fgw_objective(g1, g2, TransportPlan(plan, mu, nu), alpha)
        if value < best_value:
            best_value, best_plan = value, plan
    if g1.num_nodes == g2.num_nodes and np.allclose(mu, nu):
        for plan in permutation_couplings(mu):
            value = evaluate_fgw_objective(g1, g2, TransportPlan(plan, mu, nu), alpha)
            if value < best_value:
                best_value, best_plan = value, plan
    return float(best_value), best_plan


def diagonal_closed_form(reference: MeasureGraph, surrogate: MeasureGraph, alpha: float) -> float:
    """
    sum_kl (1 - alpha) sigma_k ||z_k - z~_k||^2 + alpha sigma_k sigma_l |C_kl - C~_kl|^2, the FGW objective of
    the identity coupling between a reference and a graph carried on the same nodes.
    """
    sigma = reference.measure
    feature_term = sigma @ ((reference.features - surrogate.features) ** 2).sum(axis=1)
    structure_term = sigma @ ((reference.structure - surrogate.structure) ** 2) @ sigma
    return float((1.0 - alpha) * feature_term + alpha * structure_term)


@dataclass(frozen=True)
class Lemma1Report:
    # objective of diag(sigma) between the reference and the surrogate graph
    diag_value: float
    fgw_to_g: float
    fgw_to_surrogate: float
    # min over brute-force candidates minus diag_value; nan when the instance is too large to enumerate
    claim1_margin: float
    # fgw_to_g minus fgw_to_surrogate
    claim2_margin: float
    claim1_ok: bool
    claim2_ok: bool
    # plan improvements made before the claims were checked
    refinements: int = 0

    @property
    def ok(self) -> bool:
        return self.claim1_ok and self.claim2_ok


def _claim1_candidates(sigma: np.ndarray, brute_force: bool, refinement: int) -> list[np.ndarray]:
    if brute_force:
        return list(enumerate_couplings(sigma, sigma, refinement))
    return list(permutation_couplings(sigma))


def _best_candidate(
    reference: MeasureGraph, surrogate: MeasureGraph, candidates: list[np.ndarray], alpha: float
) -> tuple[float, np.ndarray | None]:
    sigma = reference.measure
    best_value, best_plan = np.inf, None
    for plan in candidates:
        value = evaluate_fgw_objective(reference, surrogate, TransportPlan(plan, sigma, sigma), alpha)
        if value < best_value:
            best_value, best_plan = value, plan
    return float(best_value), best_plan


@validate_call(config=ARRAYS_ALLOWED)
def check_lemma1(
    reference: InstanceOf[MeasureGraph],
    g: InstanceOf[MeasureGraph],
    cfg: SolverConfig,
    tol: float = 1e-6,
    brute_force_nodes: PositiveInt = 3,
    refinement: PositiveInt = 2,
    max_refinements: PositiveInt = MAX_PLAN_REFINEMENTS,
) -> Lemma1Report:
    """
    Projecting a graph onto the reference through its optimal plan gives a surrogate G~ such that
    (1) diag(sigma) is an optimal coupling between the reference and G~, and
    (2) FGW(reference, G~) <= FGW(reference, G).

    Claim 1 is checked against every grid coupling when the reference has at most `brute_force_nodes` nodes,
    and against the permutation couplings otherwise. The solver only returns a local optimum, so the plan is
    first improved: on small pairs it starts from the better of the solver and brute-force plans, and a
    candidate gamma that beats the diagonal turns pi into gamma diag(1 / sigma) pi, whose objective against G
    is lower by exactly the same amount. Claim 1 fails only if a witness survives `max_refinements` rounds.

    The solver only returns upper bounds on FGW, so claim 2 uses the smaller of the solved value and the
    diagonal objective for FGW(reference, G~).
    """
    alpha = cfg.alpha
    tol = max(tol, ROUNDOFF_TOL)
    sigma = reference.measure
    mu = g.measure
    brute_force = reference.num_nodes <= brute_force_nodes

    plan = solve_fgw(reference, g, cfg).plan.coupling
    value = evaluate_fgw_objective(reference, g, TransportPlan(plan, sigma, mu), alpha)
    if brute_force and g.num_nodes <= brute_force_nodes:
        oracle_value, oracle_plan = brute_force_fgw(reference, g, alpha)
        if oracle_value < value:
            plan, value = oracle_plan, oracle_value

    candidates = _claim1_candidates(sigma, brute_force, refinement)
    refinements = 0
    while True:
        surrogate = barycentric_project(reference, g, TransportPlan(plan, sigma, mu)).as_measure_graph()
        diag_value = evaluate_fgw_objective(reference, surrogate, TransportPlan.diagonal(sigma), alpha)
        best_value, witness = _best_candidate(reference, surrogate, candidates, alpha)
        claim1_margin = best_value - diag_value if candidates else float("nan")
        if not candidates or claim1_margin >= -tol or refinements == max_refinements:
            break
        plan = witness @ (plan / sigma[:, None])
        value = evaluate_fgw_objective(reference, g, TransportPlan(plan, sigma, mu), alpha)
        refinements += 1
    if refinements:
        logger.debug("Improved the projection plan %s times, objective now %.6g", refinements, value)

    fgw_to_surrogate = min(solve_fgw(reference, surrogate, cfg).value, diag_value)
    claim2_margin = value - fgw_to_surrogate
    return Lemma1Report(
        diag_value=diag_value,
        fgw_to_g=value,
        fgw_to_surrogate=fgw_to_surrogate,
        claim1_margin=claim1_margin,
        claim2_margin=claim2_margin,
        claim1_ok=bool(not candidates or claim1_margin >= -tol),
        claim2_ok=bool(claim2_margin >= -tol),
        refinements=refinements,
    )


@dataclass(frozen=True)
class Lemma2Report:
    fgw: float
    linear_fgw: float
    lhs: float
    rhs: float
    ok: bool


@validate_call(config=ARRAYS_ALLOWED)
def check_lemma2(
    g1: InstanceOf[MeasureGraph],
    g2: InstanceOf[MeasureGraph],
    reference: InstanceOf[MeasureGraph],
    cfg: SolverConfig,
    tol: float = 1e-4,
) -> Lemma2Report:
    """
    |FGW(G1, G2) - linearFGW(G1, G2)| <= 4 min{FGW(G1, ref), FGW(G2, ref)} + 2 diam(G1) + 2 diam(G2),
    with `tol` relative to the right-hand side (absolute below 1).
    """
    fgw = solve_fgw(g1, g2, cfg).value
    e1, r1 = embed_with_plan(reference, g1, cfg)
    e2, r2 = embed_with_plan(reference, g2, cfg, e1.reference_id)
    linear = linear_fgw_distance(e1, e2)
    lhs = abs(fgw - linear)
    rhs = 4.0 * min(r1.value, r2.value) + 2.0 * mixing_diameter(g1, cfg.alpha) + 2.0 * mixing_diameter(g2, cfg.alpha)
    return Lemma2Report(fgw=fgw, linear_fgw=linear, lhs=lhs, rhs=rhs, ok=lhs <= rhs + tol * max(1.0, rhs))


@dataclass
class VerificationSummary:
    trials: int
    lemma1: list[Lemma1Report] = field(default_factory=list)
    lemma2: list[Lemma2Report] = field(default_factory=list)
    total_bound: ApproximationBoundReport | None = None

    @property
    def claim1_violations(self) -> int:
        return sum(not report.claim1_ok for report in self.lemma1)

    @property
    def claim2_violations(self) -> int:
        return sum(not report.claim2_ok for report in self.lemma1)

    @property
    def lemma2_violations(self) -> int:
        return sum(not report.ok for report in self.lemma2)

    @property
    def failed_checks(self) -> int:
        failed = self.claim1_violations + self.claim2_violations + self.lemma2_violations
        if self.total_bound is not None and not self.total_bound.ok:
            failed += 1
        return failed

    def as_dict(self) -> dict:
        claim1_margins = [r.claim1_margin for r in self.lemma1 if not math.isnan(r.claim1_margin)]
        return {
            "trials": self.trials,
            "claim1_violations": self.claim1_violations,
            "claim2_violations": self.claim2_violations,
            "lemma2_violations": self.lemma2_violations,
            "min_claim1_margin": min(claim1_margins, default=None),
            "min_claim2_margin": min((r.claim2_margin for r in self.lemma1), default=None),
            "plan_refinements": sum(r.refinements for r in self.lemma1),
            "max_lemma2_slack_used": max((r.lhs / r.rhs for r in self.lemma2 if r.rhs > 0), default=None),
            "total_bound": None
            if self.total_bound is None
            else {"lhs": self.total_bound.lhs, "rhs": self.total_bound.rhs, "ok": self.total_bound.ok},
            "failed_checks": self.failed_checks,
        }


def verification_suite(
    trials: int,
    max_nodes: int,
    cfg: SolverConfig,
    seed: int = 0,
    tol: float = 1e-6,
    pool: WorkerPool | None = None,
) -> VerificationSummary:
    """
    Randomized lemma checks: per trial one (reference, graph) pair for the projection lemma and one triple for
    the error bound, then the total bound on a dataset of all generated graphs against the first reference.
    """
    rng = np.random.default_rng(seed)
    summary = VerificationSummary(trials=trials)
    graphs = []
    references = []
    for trial in range(trials):
        reference = random_small_graph(rng, max_nodes)
        g1, g2 = random_small_graph(rng, max_nodes), random_small_graph(rng, max_nodes)
        references.append(reference)
        graphs.extend([g1, g2])
        summary.lemma1.append(check_lemma1(reference, g1, cfg, tol=tol))
        summary.lemma2.append(check_lemma2(g1, g2, reference, cfg, tol=100.0 * tol))
        if not summary.lemma1[-1].ok or not summary.lemma2[-1].ok:
            logger.warning("Trial %s violates a bound: %s %s", trial, summary.lemma1[-1], summary.lemma2[-1])

    dataset = GraphDataset(graphs=tuple(graphs[: 2 * min(trials, 10)]), name="verify")
    summary.total_bound = total_approximation_bound(dataset, references[0], cfg, pool=pool, tol=tol)
    logger.info(
        "Verified %s trials: %s claim-1, %s claim-2 and %s bound violations, total bound %s",
        trials,
        summary.claim1_violations,
        summary.claim2_violations,
        summary.lemma2_violations,
        "holds" if summary.total_bound.ok else "violated",
    )
    return summary

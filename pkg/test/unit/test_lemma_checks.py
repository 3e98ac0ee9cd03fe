import numpy as np
import pytest

from linear_fgw.config import SolverConfig
from linear_fgw.errors import UsageError
from linear_fgw.services.graph_core import MeasureGraph
from linear_fgw.services.lemma_checks import (
    Lemma1Report,
    VerificationSummary,
    brute_force_fgw,
    check_lemma1,
    check_lemma2,
    diagonal_closed_form,
    enumerate_couplings,
    measure_resolution,
    permutation_couplings,
    verification_suite,
)
from linear_fgw.services.ot_solvers import TransportPlan, evaluate_fgw_objective
from linear_fgw.services.synthetic import random_small_graph


def test_measure_resolution():
    assert measure_resolution(np.full(3, 1 / 3), np.full(2, 1 / 2)) == 6
    assert measure_resolution(np.full(3, 1 / 3), np.full(2, 1 / 2), refinement=2) == 12
    irrational = np.array([1 / np.sqrt(2), 1 - 1 / np.sqrt(2)])
    with pytest.raises(UsageError):
        measure_resolution(irrational, irrational)


def test_coupling_grid():
    half = np.array([0.5, 0.5])
    assert len(list(enumerate_couplings(half, half))) == 2
    refined = list(enumerate_couplings(half, half, refinement=2))
    assert len(refined) == 3
    for plan in refined:
        assert TransportPlan(plan, half, half).is_feasible(1e-12)


def test_grid_handles_unequal_sizes():
    mu = np.array([0.5, 0.5])
    nu = np.array([0.25, 0.25, 0.5])
    plans = list(enumerate_couplings(mu, nu))
    assert plans
    assert all(TransportPlan(plan, mu, nu).is_feasible(1e-12) for plan in plans)


def test_permutation_couplings():
    assert len(list(permutation_couplings(np.full(3, 1 / 3)))) == 6
    assert list(permutation_couplings(np.array([0.2, 0.8]))) == []


def test_brute_force_finds_the_relabelling():
    g = MeasureGraph.uniform(features=np.array([[0.0], [1.0]]), structure=np.array([[0.0, 1.0], [1.0, 0.0]]))
    value, plan = brute_force_fgw(g, g.permuted([1, 0]), alpha=0.5)
    assert value == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(plan, [[0.0, 0.5], [0.5, 0.0]])


def test_diagonal_closed_form_is_the_diagonal_objective(triangle: MeasureGraph, rng):
    other = MeasureGraph.uniform(features=rng.normal(size=(3, 1)), structure=np.array([[0, 2, 0], [2, 0, 1], [0, 1, 0.0]]))
    expected = evaluate_fgw_objective(triangle, other, TransportPlan.diagonal(triangle.measure), 0.4)
    assert diagonal_closed_form(triangle, other, 0.4) == pytest.approx(expected, rel=1e-10, abs=1e-12)


def test_projection_lemma_on_the_reference_itself(triangle: MeasureGraph):
    cfg = SolverConfig(alpha=0.3, eta=0.1, outer_iters=50, inner_sinkhorn_iters=200)
    report = check_lemma1(triangle, triangle, cfg)
    assert report.ok
    assert report.diag_value == pytest.approx(0.0, abs=1e-6)
    assert report.claim1_margin == pytest.approx(0.0, abs=1e-6)
    assert report.claim2_margin == pytest.approx(0.0, abs=1e-6)


def test_projection_never_increases_the_distance(rng):
    cfg = SolverConfig(alpha=0.5)
    for _ in range(10):
        reference = random_small_graph(rng, 4)
        report = check_lemma1(reference, random_small_graph(rng, 4), cfg)
        assert report.claim2_ok
        assert report.fgw_to_surrogate <= report.diag_value


def test_diagonal_plan_is_optimal_for_the_projection(rng):
    cfg = SolverConfig(alpha=0.5)
    for _ in range(100):
        report = check_lemma1(random_small_graph(rng, 3), random_small_graph(rng, 5), cfg)
        assert report.claim1_ok, report
        assert report.claim2_ok, report
        assert report.claim1_margin >= -1e-6


def test_claim1_violations_count_as_failed_checks():
    broken = Lemma1Report(
        diag_value=1.0,
        fgw_to_g=1.0,
        fgw_to_surrogate=1.0,
        claim1_margin=-0.5,
        claim2_margin=0.0,
        claim1_ok=False,
        claim2_ok=True,
    )
    summary = VerificationSummary(trials=1, lemma1=[broken])
    assert summary.claim1_violations == 1
    assert summary.failed_checks == 1
    assert summary.as_dict()["failed_checks"] == 1


def test_error_bound_on_random_triples(rng):
    cfg = SolverConfig(alpha=0.5)
    for _ in range(5):
        reference, g1, g2 = (random_small_graph(rng, 4) for _ in range(3))
        report = check_lemma2(g1, g2, reference, cfg)
        assert report.ok
        assert report.lhs == pytest.approx(abs(report.fgw - report.linear_fgw))


def test_verification_suite_summary():
    summary = verification_suite(trials=4, max_nodes=3, cfg=SolverConfig(alpha=0.5), seed=7)
    assert summary.trials == 4
    assert len(summary.lemma1) == len(summary.lemma2) == 4
    assert summary.total_bound is not None
    assert summary.failed_checks == 0
    document = summary.as_dict()
    assert document["failed_checks"] == 0
    assert document["total_bound"]["ok"] is True

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from road_admm.costs import estimate_constants
from road_admm.engine import AdmmConfig, Problem, run
from road_admm.exceptions import ConditionInfeasible, DomainError, InconsistentSystem, MissingFields, ValidationError
from road_admm.harness.data import synth_quadratic, synth_regression
from road_admm.operators import build_operators, build_topology, complete_topology, random_connected_topology
from road_admm.theory import (BoundReport, check_condition9, compute_r_star, network_condition_rhs, contraction_report,
                              convex_report, delta_branches, consensus_report, consensus_bound, optimal_c,
                              optimal_lambda1, optimal_lambda3, optimal_params, road_threshold, spectral_ratio,
                              tuned_delta)

from conftest import chain2_problem

EDGE = build_operators(build_topology(2, 1, [(0, 1)])).spectra


def spectra_of(seed, D=6):
    return build_operators(random_connected_topology(D, 1, 0.5, seed)).spectra


def test_single_edge_threshold():
    assert road_threshold(EDGE, 1.0, 1.0, 1.0) == pytest.approx(7 / (2 * math.sqrt(2)))


def test_single_edge_lambda1():
    assert optimal_lambda1(1.0, 1.0, EDGE) == pytest.approx(3.0)


def test_consensus_bound_single_edge():
    # (2 + 2/2 + 4) / 4
    assert consensus_bound(EDGE, 1.0, 1.0, 1.0, 1) == pytest.approx(7 / 4)


def test_domain_errors():
    with pytest.raises(DomainError):
        tuned_delta(1.0, 1.0, 1.0, EDGE)
    with pytest.raises(DomainError):
        delta_branches(2.0, 2.0, 2.0, -1.0, 1.0, 1.0, EDGE)
    with pytest.raises(DomainError):
        road_threshold(EDGE, 0.0, 1.0, 1.0)
    with pytest.raises(DomainError):
        optimal_params(EDGE, 1.0, 1.0, b=1.5)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 500), st.floats(1e-3, 10.0), st.floats(1.0, 20.0), st.floats(1.01, 100.0),
       st.floats(1e-3, 0.2))
def test_optimal_penalty_balances_branches(seed, v, ratio, l2, beta):
    spectra = spectra_of(seed)
    L = 2 * v * ratio
    l1 = optimal_lambda1(v, L, spectra)
    l3 = optimal_lambda3(beta, l1, v, L, spectra)
    c = optimal_c(l1, l2, l3, L, spectra)
    first, second = delta_branches(l1, l2, l3, c, v, L, spectra)
    assert first == pytest.approx(second, rel=1e-9)
    assert first == pytest.approx(tuned_delta(l2, v, L, spectra), rel=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 500), st.floats(1e-3, 10.0), st.floats(1.0, 20.0), st.floats(1.01, 50.0))
def test_monotone_in_lambda2(seed, v, ratio, l2):
    spectra = spectra_of(seed)
    L = 2 * v * ratio
    assert tuned_delta(l2, v, L, spectra) < tuned_delta(2 * l2, v, L, spectra)
    assert network_condition_rhs(spectra, v, L, l2) > network_condition_rhs(spectra, v, L, 2 * l2)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 500), st.floats(1e-3, 10.0), st.floats(1.0, 20.0))
def test_network_condition_limits(seed, v, ratio):
    spectra = spectra_of(seed)
    L = 2 * v * ratio
    assert network_condition_rhs(spectra, v, L, 1 + 1e-12) == pytest.approx(1.0, abs=1e-6)
    q = spectra["Q"][0] ** 2
    limit = 4 * v / (math.sqrt((L ** 2 + 2 * v) ** 2 + 16 * v ** 2 * q) - L ** 2 + 2 * v)
    assert network_condition_rhs(spectra, v, L, 1e12) == pytest.approx(limit, rel=1e-9)
    assert 0 < spectral_ratio(spectra) <= 1


def test_single_edge_always_feasible():
    K = optimal_params(EDGE, 0.5, 1.0)
    assert K.feasible and K.network_condition and K.c_opt > 0
    assert check_condition9(EDGE, 0.5, 1.0, K.lambda2)


def test_infeasible_network():
    spectra = build_operators(random_connected_topology(10, 1, 0.5, 1)).spectra
    with pytest.raises(ConditionInfeasible):
        optimal_params(spectra, 0.5, 30.0)
    K = optimal_params(spectra, 0.5, 30.0, strict=False)
    assert not K.feasible and K.c_opt > 0


def test_r_star_solves_auxiliary_system():
    p = Problem.build(random_connected_topology(6, 2, 0.5, 3), synth_regression(3, 6, 2).costs())
    g = p.gradient_at_star()
    r = compute_r_star(p.operators, g, 0.7)
    np.testing.assert_allclose(p.operators.Q @ r, -g / 1.4, atol=1e-10)
    # minimum norm: orthogonal to the consensus subspace
    np.testing.assert_allclose(r.reshape(6, 2).sum(axis=0), 0.0, atol=1e-10)


def test_r_star_zero_gradient():
    ops = build_operators(build_topology(2, 1, [(0, 1)]))
    np.testing.assert_array_equal(compute_r_star(ops, np.zeros(2), 1.0), np.zeros(2))


def test_r_star_inconsistent():
    ops = build_operators(build_topology(2, 1, [(0, 1)]))
    with pytest.raises(InconsistentSystem):
        compute_r_star(ops, np.array([1.0, 1.0]), 1.0)


def test_bound_report_tolerance():
    r = BoundReport("x", np.array([1, 2, 3]), np.array([1.0, 1.0, 1.0]), np.array([0.5, 1.0 + 1e-9, 1.1]))
    assert list(r.violations) == [False, False, True]
    assert r.first_violation == 3
    assert r.min_slack == pytest.approx(-0.1)
    assert r.summary()["violated"]


def test_convex_and_consensus_bounds_hold_on_chain():
    p = chain2_problem()
    tr = run(p, AdmmConfig(c=1.0, T=100))
    for rep in convex_report(tr, p.operators, 1.0, p.x_star).values():
        assert not rep.violated
    prof = estimate_constants(p.costs, p.operators, p.x_star)
    assert not consensus_report(tr, p.operators, prof.V1, prof.V2, 1.0).violated


def test_checkers_reject_mismatched_penalty_and_sparse_traces():
    p = chain2_problem()
    K = optimal_params(p.operators.spectra, 0.5, 1.0)
    tr = run(p, AdmmConfig(c=K.c_opt * 2, T=5))
    with pytest.raises(ValidationError):
        contraction_report(tr, K, tr.r_star, p.x_star, p.operators)
    with pytest.raises(ValidationError):
        convex_report(tr, p.operators, 1.0, p.x_star)
    sparse = run(p, AdmmConfig(c=1.0, T=6, record_every=2))
    with pytest.raises(MissingFields):
        convex_report(sparse, p.operators, 1.0, p.x_star)


def test_contraction_holds_on_well_curved_edge():
    p = chain2_problem()
    prof = estimate_constants(p.costs, p.operators, p.x_star)
    K = optimal_params(p.operators.spectra, prof.v, prof.L)
    tr = run(p, AdmmConfig(c=K.c_opt, T=60))
    rep = contraction_report(tr, K, tr.r_star, p.x_star, p.operators)
    assert not rep["single_step"].violated


def test_contraction_check_detects_small_curvature_violation():
    """Negative control: on a large complete graph with weakly curved costs the network condition
    holds but the single-step contraction claimed by the constants is not achieved, and the
    checker must report it."""
    inst = synth_quadratic(0, 40, 2, 0.05, topology=complete_topology(40, 2))
    p = Problem.build(inst.topology, inst.costs())
    prof = estimate_constants(p.costs, p.operators, p.x_star, n_samples=200)
    K = optimal_params(p.operators.spectra, prof.v, prof.L)
    assert K.feasible
    tr = run(p, AdmmConfig(c=K.c_opt, T=30))
    rep = contraction_report(tr, K, tr.r_star, p.x_star, p.operators)
    assert rep["single_step"].violated
    assert rep["single_step"].first_violation == 1

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from road_admm.costs import (LeastSquaresCost, SmoothedHingeSvmCost, centralized_minimizer, estimate_constants,
                             huber_hinge, load_svm_csv, x_update_solve)
from road_admm.exceptions import NotStronglyConvex, ValidationError


def fd_gradient(f, x, h=1e-6):
    g = np.zeros_like(x)
    for n in range(len(x)):
        e = np.zeros_like(x)
        e[n] = h
        g[n] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def svm_cost(seed, n=12, p=2, C=1.0, mu=0.1):
    rng = np.random.default_rng(seed)
    return SmoothedHingeSvmCost(rng.standard_normal((n, p)), rng.choice([-1.0, 1.0], n), C, mu)


def test_least_squares_value_and_gradient():
    f = LeastSquaresCost([[1.0, 2.0], [0.0, 1.0]], [1.0, 1.0])
    x = np.array([1.0, -1.0])
    # residual y - Bx = (1 - (-1), 1 - (-1)) = (2, 2)
    assert f.evaluate(x) == pytest.approx(4.0)
    np.testing.assert_allclose(f.gradient(x), [-2.0, -6.0])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_least_squares_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    f = LeastSquaresCost(rng.standard_normal((4, 3)), rng.standard_normal(4))
    x = rng.standard_normal(3)
    np.testing.assert_allclose(f.gradient(x), fd_gradient(f.evaluate, x), rtol=1e-5, atol=1e-6)
    np.testing.assert_allclose(f.gradient_batch(x[None, :])[0], f.gradient(x))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_svm_gradient_and_hessian_match_finite_differences(seed):
    f = svm_cost(seed)
    x = np.random.default_rng(seed + 1).standard_normal(f.dim)
    np.testing.assert_allclose(f.gradient(x), fd_gradient(f.evaluate, x), rtol=1e-4, atol=1e-5)
    H_fd = np.stack([fd_gradient(lambda u, n=n: f.gradient(u)[n], x) for n in range(f.dim)])
    # the Hessian jumps where a margin crosses 0 or mu; only compare away from kinks
    t = 1.0 - f._Y @ x
    if np.min(np.minimum(np.abs(t), np.abs(t - f.mu))) > 1e-4:
        np.testing.assert_allclose(f.hessian(x), H_fd, rtol=1e-4, atol=1e-4)
    np.testing.assert_allclose(f.gradient_batch(np.stack([x, 2 * x]))[1], f.gradient(2 * x))


def test_huber_hinge_pieces():
    mu = 0.5
    np.testing.assert_allclose(huber_hinge([-1.0, 0.0, 0.25, 0.5, 2.0], mu), [0, 0, 0.0625, 0.25, 1.75])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 50.0))
def test_resolve_residual(seed, a):
    f = svm_cost(seed)
    b = np.random.default_rng(seed).standard_normal(f.dim) * 3
    x = f.resolve(a, b)
    assert np.linalg.norm(f.gradient(x) + a * x - b) <= 1e-9 * (1 + np.linalg.norm(b))


def test_least_squares_resolve_closed_form():
    f = LeastSquaresCost([[2.0]], [4.0])
    # 4x - 8 + 3x = 6  =>  x = 2
    assert f.resolve(3.0, np.array([6.0]))[0] == pytest.approx(2.0)


def test_x_update_two_agent_chain():
    f0 = LeastSquaresCost([[1.0]], [0.0])
    f1 = LeastSquaresCost([[1.0]], [2.0])
    zero = np.zeros(1)
    assert x_update_solve(f0, 1, 1.0, zero, zero, zero)[0] == pytest.approx(0.0)
    assert x_update_solve(f1, 1, 1.0, zero, zero, zero)[0] == pytest.approx(2.0 / 3.0)


def test_x_update_rejects_bad_penalty():
    f = LeastSquaresCost([[1.0]], [0.0])
    with pytest.raises(ValidationError):
        x_update_solve(f, 1, 0.0, np.zeros(1), np.zeros(1), np.zeros(1))


def test_centralized_minimizer_chain():
    costs = [LeastSquaresCost([[1.0]], [0.0]), LeastSquaresCost([[1.0]], [2.0])]
    assert centralized_minimizer(costs)[0] == pytest.approx(1.0)


def test_centralized_minimizer_svm_stationary():
    costs = [svm_cost(s, n=30) for s in range(3)]
    x = centralized_minimizer(costs)
    assert np.linalg.norm(sum(f.gradient(x) for f in costs)) <= 1e-8


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_strong_convexity_and_smoothness_witness(seed):
    rng = np.random.default_rng(seed)
    costs = [LeastSquaresCost(rng.standard_normal((4, 2)), rng.standard_normal(4)) for _ in range(3)]
    prof = estimate_constants(costs, n_samples=200)
    for f in costs:
        x, y = rng.standard_normal(2), rng.standard_normal(2)
        d = x - y
        assert (f.gradient(x) - f.gradient(y)) @ d >= prof.v * (d @ d) - 1e-10
        assert np.linalg.norm(f.gradient(x) - f.gradient(y)) <= prof.L * np.linalg.norm(d) + 1e-10
    assert prof.V1 > 0 and prof.V2 > 0


def test_estimate_constants_single_edge():
    costs = [LeastSquaresCost([[1.0]], [0.0]), LeastSquaresCost([[1.0]], [2.0])]
    prof = estimate_constants(costs)
    assert prof.v == pytest.approx(0.5)
    assert prof.L == pytest.approx(1.0)
    assert prof.V1 == pytest.approx(2 * np.sqrt(2))


def test_svm_not_strongly_convex():
    costs = [svm_cost(1), svm_cost(2)]
    assert estimate_constants(costs, n_samples=100).v == 0
    with pytest.raises(NotStronglyConvex):
        estimate_constants(costs, n_samples=100, require_strong_convexity=True)


def test_svm_validation():
    with pytest.raises(ValidationError):
        SmoothedHingeSvmCost([[1.0]], [0.5])
    with pytest.raises(ValidationError):
        SmoothedHingeSvmCost([[1.0]], [1.0], smoothing=0.0)
    with pytest.raises(ValidationError):
        LeastSquaresCost([[1.0], [2.0]], [1.0])


def test_load_svm_csv(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b,label\n1,2,1\n3,4,-1\n")
    X, y = load_svm_csv(p)
    np.testing.assert_array_equal(X, [[1, 2], [3, 4]])
    np.testing.assert_array_equal(y, [1, -1])

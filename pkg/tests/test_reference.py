"""Brute-force oracles: enumerated LP, 2x2 quadratic matching, finite differences."""

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otkit import (
    DenseGeometry,
    LinearProblem,
    PointCloudGeometry,
    exact_gw_2x2,
    exact_lp_uniform,
    finite_diff,
    grad_points,
    gw_objective,
    QuadraticProblem,
    reg_ot_cost,
    solve_sinkhorn,
)


# ---- exact_lp_uniform ----


def test_lp_identity_matching():
    result = exact_lp_uniform(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert result.value == 0.0
    assert tuple(result.argmin) == (0, 1)


def test_lp_two_point_derived_cost():
    cost = np.array([[0.25, 4.0], [0.25, 1.0]])
    result = exact_lp_uniform(cost)
    assert result.value == pytest.approx(0.625, abs=1e-15)
    assert tuple(result.argmin) == (0, 1)


def test_lp_constant_shift_moves_the_value_not_the_argmin():
    rng = np.random.default_rng(0)
    cost = rng.random((4, 4))
    base = exact_lp_uniform(cost)
    shifted = exact_lp_uniform(cost + 3.0)
    assert shifted.value == pytest.approx(base.value + 3.0, abs=1e-12)
    assert tuple(shifted.argmin) == tuple(base.argmin)


def test_lp_refuses_large_instances():
    with pytest.raises(ValueError):
        exact_lp_uniform(np.zeros((8, 8)))
    with pytest.raises(ValueError):
        exact_lp_uniform(np.zeros((2, 3)))


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 5), seed=st.integers(0, 10_000))
def test_lp_lower_bounds_every_feasible_coupling(n, seed):
    rng = np.random.default_rng(seed)
    cost = rng.random((n, n))
    oracle = exact_lp_uniform(cost)
    # A random feasible coupling: Sinkhorn-normalize a positive matrix.
    plan = rng.random((n, n)) + 0.1
    for _ in range(200):
        plan /= plan.sum(axis=1, keepdims=True) * n
        plan /= plan.sum(axis=0, keepdims=True) * n
    assert oracle.value <= (cost * plan).sum() + 1e-6


# ---- exact_gw_2x2 ----


def test_gw_oracle_identical_spaces():
    cx = np.array([[0.0, 1.0], [1.0, 0.0]])
    uniform = np.array([0.5, 0.5])
    result = exact_gw_2x2(cx, cx, uniform, uniform)
    assert result.value == pytest.approx(0.0, abs=1e-10)


def test_gw_oracle_stretched_spaces():
    cx = np.array([[0.0, 1.0], [1.0, 0.0]])
    cy = np.array([[0.0, 2.0], [2.0, 0.0]])
    uniform = np.array([0.5, 0.5])
    result = exact_gw_2x2(cx, cy, uniform, uniform)
    assert result.value == pytest.approx(0.5, abs=1e-10)


def test_gw_oracle_zero_spaces():
    zeros = np.zeros((2, 2))
    uniform = np.array([0.5, 0.5])
    assert exact_gw_2x2(zeros, zeros, uniform, uniform).value == 0.0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), p=st.floats(0.0, 1.0))
def test_gw_oracle_lower_bounds_the_feasible_segment(seed, p):
    rng = np.random.default_rng(seed)
    cx = rng.random((2, 2))
    cx = 0.5 * (cx + cx.T)
    cy = rng.random((2, 2))
    cy = 0.5 * (cy + cy.T)
    a = rng.random(2) + 0.2
    a /= a.sum()
    b = rng.random(2) + 0.2
    b /= b.sum()
    oracle = exact_gw_2x2(cx, cy, a, b)
    # U(a,b) for 2x2 is the segment P(t) with t in [lo, hi].
    lo = max(0.0, a[0] + b[0] - 1.0)
    hi = min(a[0], b[0])
    t = lo + p * (hi - lo)
    plan = np.array([[t, a[0] - t], [b[0] - t, 1.0 - a[0] - b[0] + t]])
    qp = QuadraticProblem(DenseGeometry(cx), DenseGeometry(cy), a, b)
    assert oracle.value <= gw_objective(qp, plan, method="literal") + 1e-9


# ---- finite_diff ----


def test_finite_diff_is_exact_on_linear_functions():
    c = np.array([1.0, -2.0, 3.0])
    grad = finite_diff(lambda v: float(c @ v), np.array([0.3, 0.4, 0.5]))
    npt.assert_allclose(grad, c, atol=1e-9)


def test_finite_diff_on_the_squared_norm():
    x = np.array([1.0, -0.5, 2.0])
    grad = finite_diff(lambda v: float(v @ v), x)
    npt.assert_allclose(grad, 2.0 * x, atol=1e-9)


def test_finite_diff_matches_the_envelope_point_gradient():
    rng = np.random.default_rng(15)
    x = rng.random((3, 2))
    y = rng.random((3, 2))
    geom = PointCloudGeometry(x, y)
    eps = 0.1 * geom.mean_cost()

    def value(flat_points):
        pts = flat_points.reshape(3, 2)
        prob = LinearProblem(PointCloudGeometry(pts, y))
        out = solve_sinkhorn(prob, eps, threshold=1e-8, max_iters=20_000)
        assert out.converged
        return reg_ot_cost(out, prob).dual_objective

    prob = LinearProblem(geom)
    out = solve_sinkhorn(prob, eps, threshold=1e-8, max_iters=20_000)
    grad = grad_points(out, prob).reshape(-1)
    fd = finite_diff(value, x.reshape(-1))
    assert np.abs(grad - fd).max() <= 1e-4 * (1.0 + np.abs(fd).max())

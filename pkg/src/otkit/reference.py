"""Brute-force reference solvers, intentionally slow and simple.

These exist to cross-check the iterative solvers on tiny instances and
back the CLI's ``--verify`` flag. They share no code with the solvers
they check.
"""

from __future__ import annotations

import dataclasses
import itertools

import numpy as np

__all__ = ["OracleResult", "exact_lp_uniform", "exact_gw_2x2", "finite_diff"]

_MAX_PERMUTATION_SIZE = 7
_GW_GRID_POINTS = 10_000


@dataclasses.dataclass(frozen=True, eq=False)
class OracleResult:
    """Exact optimum: the value and a description of where it is attained."""

    value: float
    argmin: object


def exact_lp_uniform(cost: np.ndarray) -> OracleResult:
    """Exact OT value for uniform weights by permutation enumeration.

    For uniform marginals on n = m points the optimum sits at a
    permutation matrix (a vertex of the Birkhoff polytope), so scanning
    all n! permutations is exact. Guarded to n <= 7.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError(f"cost must be square, got shape {cost.shape}")
    n = cost.shape[0]
    if n > _MAX_PERMUTATION_SIZE:
        raise ValueError(f"permutation enumeration is capped at n = {_MAX_PERMUTATION_SIZE}, got {n}")
    best_value = np.inf
    best_perm = None
    rows = np.arange(n)
    for perm in itertools.permutations(range(n)):
        value = cost[rows, perm].sum() / n
        if value < best_value:
            best_value = value
            best_perm = perm
    return OracleResult(value=float(best_value), argmin=best_perm)


def _gw_quartic(cost_x: np.ndarray, cost_y: np.ndarray, plan: np.ndarray) -> float:
    # Literal quartic sum over all index pairs; no algebraic shortcuts.
    total = 0.0
    n, m = plan.shape
    for i in range(n):
        for j in range(m):
            for k in range(n):
                for l in range(m):
                    total += (cost_x[i, k] - cost_y[j, l]) ** 2 * plan[i, j] * plan[k, l]
    return total


def exact_gw_2x2(cost_x: np.ndarray, cost_y: np.ndarray, a: np.ndarray, b: np.ndarray) -> OracleResult:
    """Exact Gromov-Wasserstein value for 2x2 problems.

    The transport polytope U(a, b) for n = m = 2 is the segment
    P(p) = [[p, a0 - p], [b0 - p, 1 - a0 - b0 + p]] with p in
    [max(0, a0 + b0 - 1), min(a0, b0)], and the objective restricted to
    it is a quadratic in p. A coarse grid scan is refined with the exact
    vertex / stationary-point comparison, so the value is exact up to
    float rounding.
    """
    cost_x = np.asarray(cost_x, dtype=float)
    cost_y = np.asarray(cost_y, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if cost_x.shape != (2, 2) or cost_y.shape != (2, 2):
        raise ValueError("cost matrices must be 2x2")
    if a.shape != (2,) or b.shape != (2,):
        raise ValueError("weights must have shape (2,)")
    if np.any(a < 0) or np.any(b < 0) or abs(a.sum() - 1) > 1e-8 or abs(b.sum() - 1) > 1e-8:
        raise ValueError("weights must be nonnegative and sum to 1")

    lo = max(0.0, a[0] + b[0] - 1.0)
    hi = min(a[0], b[0])

    def plan_at(p: float) -> np.ndarray:
        return np.array([[p, a[0] - p], [b[0] - p, 1.0 - a[0] - b[0] + p]])

    def objective(p: float) -> float:
        return _gw_quartic(cost_x, cost_y, plan_at(p))

    candidates = list(np.linspace(lo, hi, _GW_GRID_POINTS))
    if hi > lo:
        # Fit the quadratic alpha p^2 + beta p + gamma through three
        # exact evaluations and add its stationary point.
        mid = 0.5 * (lo + hi)
        q_lo, q_mid, q_hi = objective(lo), objective(mid), objective(hi)
        h = mid - lo
        alpha = (q_hi - 2.0 * q_mid + q_lo) / (2.0 * h * h)
        beta = (q_hi - q_lo) / (2.0 * h) - 2.0 * alpha * mid
        if alpha > 0:
            stat = -beta / (2.0 * alpha)
            if lo < stat < hi:
                candidates.append(stat)
    best_p = min(candidates, key=objective)
    return OracleResult(value=float(objective(best_p)), argmin={"p": float(best_p), "coupling": plan_at(best_p)})


def finite_diff(fn, point: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function of an array."""
    point = np.asarray(point, dtype=float)
    grad = np.empty_like(point)
    for idx in np.ndindex(point.shape):
        bump = np.zeros_like(point)
        bump[idx] = step
        grad[idx] = (fn(point + bump) - fn(point - bump)) / (2.0 * step)
    return grad

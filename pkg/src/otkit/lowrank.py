"""Low-rank Sinkhorn: transport plans factored as P = Q diag(1/g) R^T.

The factors Q (n x r), R (m x r) and the shared inner marginal g (r,)
are optimized by mirror descent on the transport cost, where every step
is followed by a Dykstra-style alternating-scaling projection onto the
three marginal constraints Q1 = a, R1 = b, Q^T 1 = R^T 1 = g. All
projection arithmetic runs in the log domain.
"""

from __future__ import annotations

import dataclasses
import logging

import numpy as np

from .errors import DivergedError
from .sinkhorn import Coupling, LinearProblem, _sinkhorn_iterations

logger = logging.getLogger(__name__)

__all__ = ["LowRankFactors", "LowRankOutput", "solve_lr_sinkhorn", "lr_coupling"]

# Inner projection: floor on g, sweep cap per outer step, marginal tolerance.
_G_FLOOR = 1e-10
_DYKSTRA_MAX_SWEEPS = 100
_DYKSTRA_TOL = 1e-9
_DYKSTRA_STAGNATION = 0.999
# A step is only accepted when its projection residual is this small and
# the transport cost did not go up; otherwise the step size is halved and
# the step retried. After a clean streak the step size recovers (doubles,
# capped at its starting value) so one bad stretch does not pin the
# iteration at a microscopic step forever.
_PROJECTION_ACCEPT = 5e-7
_MAX_BACKOFFS_PER_STEP = 10
_RECOVERY_WINDOW = 25
_DESCENT_SLACK = 1e-9
# Starting factors are carved out of a moderately blurred entropic plan;
# the blur keeps the guide solve cheap and stable while its support still
# points at the right basin of the (nonconvex) factored problem.
_GUIDE_EPS_SCALE = 0.05
_GUIDE_THRESHOLD = 1e-4
_GUIDE_MAX_ITERS = 2000
_INIT_JITTER = 0.05
_INIT_DIAG_BLEND = 0.2


def _lse(x: np.ndarray, axis: int) -> np.ndarray:
    """logsumexp without scipy call overhead; tolerates -inf slices."""
    hi = np.max(x, axis=axis, keepdims=True)
    hi = np.where(np.isfinite(hi), hi, 0.0)
    with np.errstate(divide="ignore"):
        return np.log(np.sum(np.exp(x - hi), axis=axis)) + np.squeeze(hi, axis=axis)


@dataclasses.dataclass(frozen=True, eq=False)
class LowRankFactors:
    """Factored transport plan: P = q diag(1/g) r^T."""

    q: np.ndarray
    r: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        if self.q.ndim != 2 or self.r.ndim != 2 or self.g.ndim != 1:
            raise ValueError("q and r must be 2-D, g 1-D")
        rank = self.g.size
        if self.q.shape[1] != rank or self.r.shape[1] != rank:
            raise ValueError("q, r and g disagree on the rank")

    @property
    def rank(self) -> int:
        return self.g.size


@dataclasses.dataclass(frozen=True, eq=False)
class LowRankOutput:
    factors: LowRankFactors
    costs: np.ndarray
    iterations: int
    converged: bool


def lr_coupling(factors: LowRankFactors) -> Coupling:
    """Assembles the dense coupling q diag(1/g) r^T from the factors."""
    if np.any(factors.g <= 0):
        raise ValueError("inner marginal g must be strictly positive")
    return Coupling((factors.q / factors.g[None, :]) @ factors.r.T)


def _log_dykstra(lk1, lk2, lk3, log_a, log_b, a, b):
    """KL projection of factor kernels onto the marginal constraints.

    Log-domain transcription of the alternating scaling recursion with
    Dykstra correction terms. Columns of the returned factors match g
    exactly by construction; the sweep loop runs until the row marginals
    agree too (or the sweep cap is hit). Returns the factor logs plus
    the final row-marginal residual.
    """
    rank = lk3.size
    lv1t = np.zeros(rank)
    lv2t = np.zeros(rank)
    lq1 = np.zeros(rank)
    lq2 = np.zeros(rank)
    lq3_1 = np.zeros(rank)
    lq3_2 = np.zeros(rank)
    lgt = lk3.copy()
    log_floor = np.log(_G_FLOOR)
    lu1 = np.full(log_a.size, -np.inf)
    lu2 = np.full(log_b.size, -np.inf)
    lv1 = lv1t
    lv2 = lv2t
    err = np.inf
    prev_err = np.inf
    for sweep in range(_DYKSTRA_MAX_SWEEPS):
        with np.errstate(invalid="ignore"):
            lu1 = np.where(a > 0, log_a - _lse(lk1 + lv1t[None, :], axis=1), -np.inf)
            lu2 = np.where(b > 0, log_b - _lse(lk2 + lv2t[None, :], axis=1), -np.inf)
        lg = np.maximum(log_floor, lgt + lq3_1)
        lq3_1 = lgt + lq3_1 - lg
        lgt = lg
        lktu1 = _lse(lk1 + lu1[:, None], axis=0)
        lktu2 = _lse(lk2 + lu2[:, None], axis=0)
        lg = (lgt + lq3_2 + (lv1t + lq1 + lktu1) + (lv2t + lq2 + lktu2)) / 3.0
        lv1 = lg - lktu1
        lv2 = lg - lktu2
        lq1 = lv1t + lq1 - lv1
        lq2 = lv2t + lq2 - lv2
        lq3_2 = lgt + lq3_2 - lg
        lv1t, lv2t, lgt = lv1, lv2, lg
        row1 = np.exp(lu1 + _lse(lk1 + lv1[None, :], axis=1))
        row2 = np.exp(lu2 + _lse(lk2 + lv2[None, :], axis=1))
        err = np.abs(row1 - a).sum() + np.abs(row2 - b).sum()
        if err <= _DYKSTRA_TOL:
            break
        # The residual decays geometrically until rounding flattens it;
        # once a sweep stops buying a digit the rest of the cap would be
        # spent on an exact plateau, so hand the residual back early.
        if sweep >= 4 and err >= _DYKSTRA_STAGNATION * prev_err:
            break
        prev_err = err
    lq = lu1[:, None] + lk1 + lv1[None, :]
    lr = lu2[:, None] + lk2 + lv2[None, :]
    return lq, lr, lgt, float(err)


def _initial_factors(prob, rank, seed, cost, log_a, log_b):
    """Seeded starting logs for (Q, R, g).

    The start must not be a product a u^T: rank-one factor states are
    invariant under both the mirror step and the projection (gradients
    become constant per column), so a product start would pin the
    iteration at the independence coupling. Instead, a blurred entropic
    plan is solved once and its columns are folded round-robin into the
    rank columns of Q; R starts near-diagonal so that each factor column
    inherits a distinct slice of the plan's support. Multiplicative
    jitter (seeded) keeps restarts meaningful. When the guide solve is
    unusable the start falls back to entrywise randomness with rows
    rescaled to the marginals, which is feasible and reproducible.
    """
    n, m = prob.geom.shape
    rng = np.random.default_rng(seed)
    eps0 = _GUIDE_EPS_SCALE * float(cost.mean())
    guide = None
    if eps0 > 0:
        try:
            sk = _sinkhorn_iterations(prob, eps0, _GUIDE_THRESHOLD, _GUIDE_MAX_ITERS, 10, None)
        except DivergedError:
            sk = None
        if sk is not None:
            plan = np.exp((sk.f[:, None] + sk.g[None, :] - cost) / sk.eps)
            if np.all(np.isfinite(plan)):
                guide = plan
    if guide is not None:
        groups = np.arange(m) % rank
        q0 = np.zeros((n, rank))
        for j in range(m):
            q0[:, groups[j]] += guide[:, j]
        q0 += 1e-12
        q0 *= np.exp(_INIT_JITTER * rng.standard_normal(q0.shape))
        w = rng.random(rank) + 0.2
        w /= w.sum()
        r0 = _INIT_DIAG_BLEND * np.outer(prob.b, w)
        r0[np.arange(m), groups] += (1.0 - _INIT_DIAG_BLEND) * prob.b
        r0 *= np.exp(_INIT_JITTER * rng.standard_normal(r0.shape))
    else:
        q0 = rng.random((n, rank)) + 0.5
        r0 = rng.random((m, rank)) + 0.5
    with np.errstate(divide="ignore"):
        lq = log_a[:, None] + np.log(q0 / q0.sum(axis=1, keepdims=True))
        lr = log_b[:, None] + np.log(r0 / r0.sum(axis=1, keepdims=True))
    g0 = np.exp(lq).sum(axis=0) + np.exp(lr).sum(axis=0) + 1e-12
    lg = np.log(g0 / g0.sum())
    return lq, lr, lg


def solve_lr_sinkhorn(
    prob: LinearProblem,
    rank: int,
    *,
    gamma: float | None = None,
    threshold: float = 1e-6,
    max_iters: int = 1000,
    inner_iters: int = 10,
    seed: int = 0,
) -> LowRankOutput:
    """Runs mirror descent on the factored coupling.

    Args:
      prob: the linear OT problem; its cost matrix is materialized once.
      rank: number of inner columns r; must satisfy 1 <= r <= min(n, m).
      gamma: mirror-descent step size. Defaults to 10 / max|gradient|
        measured at the first iteration. Whatever the starting value,
        steps whose projection stays infeasible or whose cost goes up
        are retried at half the size, so this acts as an upper bound.
      threshold: stop when the cost moved by at most
        ``threshold * (1 + |cost|)`` over the last ``inner_iters`` steps.
      max_iters: hard cap on mirror-descent steps.
      inner_iters: stopping-check cadence (and comparison window).
      seed: seed for the start factors (guide-plan jitter or the random
        fallback); fixed seed means a fully deterministic solve.

    Returns:
      A :class:`LowRankOutput` with the factors and the transport-cost
      trace (one entry per iterate, starting with the initial point).

    Raises:
      DivergedError: if factors turn NaN, typically a too-large gamma.
    """
    n, m = prob.geom.shape
    rank = int(rank)
    if rank < 1 or rank > min(n, m):
        raise ValueError(f"rank must lie in [1, {min(n, m)}], got {rank}")
    if gamma is not None and not (gamma > 0):
        raise ValueError("gamma must be positive")
    if max_iters < 1 or inner_iters < 1:
        raise ValueError("max_iters and inner_iters must be >= 1")
    cost = prob.geom.cost_matrix()
    a, b = prob.a, prob.b
    with np.errstate(divide="ignore"):
        log_a = np.log(a)
        log_b = np.log(b)

    lq, lr, lg = _initial_factors(prob, rank, seed, cost, log_a, log_b)
    lq, lr, lg, _ = _log_dykstra(lq, lr, lg, log_a, log_b, a, b)

    def transport_cost(q, r, g):
        return float(np.sum(q * (cost @ (r / g[None, :]))))

    q, r, g = np.exp(lq), np.exp(lr), np.exp(lg)
    costs = [transport_cost(q, r, g)]
    converged = False
    gamma_cap = gamma
    clean_streak = 0
    t = 0
    for t in range(1, max_iters + 1):
        grad_q = cost @ (r / g[None, :])
        grad_r = cost.T @ (q / g[None, :])
        grad_g = -np.einsum("ik,ik->k", q, grad_q) / g
        if gamma is None:
            peak = max(np.abs(grad_q).max(), np.abs(grad_r).max(), np.abs(grad_g).max())
            gamma = 10.0 / peak if peak > 0 else 1.0
            gamma_cap = gamma
            logger.debug("lowrank: default gamma = %g", gamma)
        # Near a vertex the step kernels degenerate and the projection
        # cannot reach feasibility within its sweep budget, and too-long
        # steps can also overshoot the bilinear objective. Halve the
        # step and retry until the projection is clean and the cost does
        # not increase; if even tiny steps fail, the factorization has
        # hit its resolution limit and the last iterate is the answer.
        accepted = False
        saw_finite = False
        for _ in range(_MAX_BACKOFFS_PER_STEP):
            lq_new, lr_new, lg_new, residual = _log_dykstra(
                lq - gamma * grad_q, lr - gamma * grad_r, lg - gamma * grad_g, log_a, log_b, a, b
            )
            if np.isfinite(residual):
                saw_finite = True
            if residual <= _PROJECTION_ACCEPT:
                q_new, r_new, g_new = np.exp(lq_new), np.exp(lr_new), np.exp(lg_new)
                cost_new = transport_cost(q_new, r_new, g_new)
                if np.isfinite(cost_new) and cost_new <= costs[-1] + _DESCENT_SLACK * (
                    1.0 + abs(costs[-1])
                ):
                    accepted = True
                    break
            gamma *= 0.5
            clean_streak = 0
        if not accepted:
            if not saw_finite:
                raise DivergedError(
                    "low-rank factors blew up despite step-size backoff", iteration=t
                )
            logger.info(
                "lowrank: no acceptable step at iteration %d (residual %.2e); stopping", t, residual
            )
            converged = t > 1
            break
        clean_streak += 1
        if clean_streak >= _RECOVERY_WINDOW and gamma < gamma_cap:
            gamma = min(gamma * 2.0, gamma_cap)
            clean_streak = 0
        lq, lr, lg = lq_new, lr_new, lg_new
        q, r, g = q_new, r_new, g_new
        costs.append(cost_new)
        if t % inner_iters == 0 and len(costs) > inner_iters:
            if abs(costs[-1] - costs[-1 - inner_iters]) <= threshold * (1.0 + abs(costs[-1])):
                converged = True
                break
    factors = LowRankFactors(q=q, r=r, g=g)
    return LowRankOutput(factors=factors, costs=np.asarray(costs), iterations=t, converged=converged)

"""Log-domain Sinkhorn solver for entropic optimal transport.

Solves ``min_{P in U(a,b)} <C, P> + eps <P, log P - 1>`` by alternating
exact maximization of the dual over the potentials (f, g). All updates
run in the log domain so very small eps stays usable; the coupling
``P = exp((f + g - C)/eps)`` is only materialized on demand.
"""

from __future__ import annotations

import dataclasses
import logging
from typing import NamedTuple

import numpy as np

from .errors import DivergedError
from .geometry import EpsilonSchedule, Geometry, PointCloudGeometry

logger = logging.getLogger(__name__)

__all__ = [
    "LinearProblem",
    "SinkhornOutput",
    "Coupling",
    "RegOTCost",
    "solve_sinkhorn",
    "transport_matrix",
    "reg_ot_cost",
    "grad_weights",
    "grad_points",
]


def _as_weights(w: np.ndarray | None, size: int, name: str) -> np.ndarray:
    if w is None:
        return np.full(size, 1.0 / size)
    w = np.asarray(w, dtype=float)
    if w.shape != (size,):
        raise ValueError(f"{name} must have shape ({size},), got {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError(f"{name} must be entrywise finite and nonnegative")
    if abs(w.sum() - 1.0) > 1e-8:
        raise ValueError(f"{name} must sum to 1, got {w.sum()!r}")
    return w


@dataclasses.dataclass(frozen=True, eq=False)
class LinearProblem:
    """Entropic OT task: a geometry plus two marginal histograms.

    ``a`` and ``b`` default to uniform weights. Zero entries are
    allowed; the corresponding potentials sit at -inf and the coupling
    carries no mass there.
    """

    geom: Geometry
    a: np.ndarray | None = None
    b: np.ndarray | None = None

    def __post_init__(self):
        n, m = self.geom.shape
        object.__setattr__(self, "a", _as_weights(self.a, n, "a"))
        object.__setattr__(self, "b", _as_weights(self.b, m, "b"))


@dataclasses.dataclass(frozen=True, eq=False)
class SinkhornOutput:
    """Converged (or truncated) state of a Sinkhorn run.

    ``errors`` holds the L1 deviation of the row marginal from ``a`` at
    each measurement point; after every full sweep the column marginal
    matches ``b`` exactly, so the row error is the full infeasibility.
    ``dual_trace`` holds the dual objective at the same points.
    """

    f: np.ndarray
    g: np.ndarray
    errors: np.ndarray
    dual_trace: np.ndarray
    iterations: int
    converged: bool
    eps: float


@dataclasses.dataclass(frozen=True, eq=False)
class Coupling:
    """A transport plan, stored as its dense matrix."""

    matrix: np.ndarray

    def row_marginal(self) -> np.ndarray:
        return self.matrix.sum(axis=1)

    def col_marginal(self) -> np.ndarray:
        return self.matrix.sum(axis=0)


class RegOTCost(NamedTuple):
    transport_cost: float
    dual_objective: float


def _resolve_schedule(geom: Geometry, eps) -> EpsilonSchedule:
    if eps is None:
        eps = geom.epsilon_default
    if isinstance(eps, EpsilonSchedule):
        return eps
    eps = float(eps)
    if not (eps > 0):
        raise ValueError("eps must be positive")
    return EpsilonSchedule(eps)


def _dual_objective(f, g, a, b, eps, total_mass):
    with np.errstate(invalid="ignore"):
        fa = np.where(a > 0, f * a, 0.0).sum()
        gb = np.where(b > 0, g * b, 0.0).sum()
    return float(fa + gb - eps * (total_mass - 1.0))


def solve_sinkhorn(
    prob: LinearProblem,
    eps: float | EpsilonSchedule | None = None,
    *,
    threshold: float = 1e-3,
    max_iters: int = 2000,
    inner_iters: int = 10,
) -> SinkhornOutput:
    """Runs log-domain Sinkhorn iterations until the marginals match.

    Args:
      prob: the problem to solve.
      eps: regularization strength; a float, an :class:`EpsilonSchedule`
        decaying toward its target, or ``None`` for the geometry default.
      threshold: stop once the L1 row-marginal error drops below this.
      max_iters: hard cap on the number of (f, g) sweeps.
      inner_iters: check convergence every this many sweeps.

    Returns:
      A :class:`SinkhornOutput`; ``converged`` is False when the
      iteration budget ran out first.

    Raises:
      DivergedError: if the potentials turn NaN, which points at an eps
        too small for the cost scale.
    """
    return _sinkhorn_iterations(prob, eps, threshold, max_iters, inner_iters, None)


def _sinkhorn_iterations(prob, eps, threshold, max_iters, inner_iters, g_init) -> SinkhornOutput:
    if max_iters < 1 or inner_iters < 1:
        raise ValueError("max_iters and inner_iters must be >= 1")
    if not (threshold > 0):
        raise ValueError("threshold must be positive")
    geom = prob.geom
    n, m = geom.shape
    schedule = _resolve_schedule(geom, eps)
    target = schedule.target
    with np.errstate(divide="ignore"):
        log_a = np.log(prob.a)
        log_b = np.log(prob.b)
    zeros_n = np.zeros(n)
    zeros_m = np.zeros(m)
    f = np.zeros(n)
    g = zeros_m.copy() if g_init is None else np.asarray(g_init, dtype=float).copy()
    errors: list[float] = []
    duals: list[float] = []
    converged = False
    t = 0
    for t in range(1, max_iters + 1):
        e = schedule.at(t - 1)
        f = e * log_a - geom.apply_lse_kernel(zeros_n, g, e, axis="rows")
        g = e * log_b - geom.apply_lse_kernel(f, zeros_m, e, axis="cols")
        if t % inner_iters == 0 or t == max_iters:
            if np.isnan(f).any() or np.isnan(g).any():
                raise DivergedError(
                    "NaN in Sinkhorn potentials; eps is likely too small for the cost scale",
                    iteration=t,
                )
            if e > target:
                continue  # still warming up the schedule; errors not comparable yet
            row = np.exp(geom.apply_lse_kernel(f, g, e, axis="rows") / e)
            err = float(np.abs(row - prob.a).sum())
            errors.append(err)
            duals.append(_dual_objective(f, g, prob.a, prob.b, e, row.sum()))
            if err <= threshold:
                converged = True
                break
    if not converged:
        logger.info("sinkhorn: no convergence after %d iterations (last error %s)", t, errors[-1] if errors else None)
    return SinkhornOutput(
        f=f,
        g=g,
        errors=np.asarray(errors),
        dual_trace=np.asarray(duals),
        iterations=t,
        converged=converged,
        eps=target,
    )


def transport_matrix(out: SinkhornOutput, prob: LinearProblem) -> Coupling:
    """Materializes the coupling exp((f + g - C)/eps) from the potentials."""
    cost = prob.geom.cost_matrix()
    log_plan = (out.f[:, None] + out.g[None, :] - cost) / out.eps
    return Coupling(np.exp(log_plan))


def reg_ot_cost(out: SinkhornOutput, prob: LinearProblem) -> RegOTCost:
    """Primal transport cost <C, P> and dual objective of a solution."""
    cost = prob.geom.cost_matrix()
    plan = np.exp((out.f[:, None] + out.g[None, :] - cost) / out.eps)
    transport = float((cost * plan).sum())
    dual = _dual_objective(out.f, out.g, prob.a, prob.b, out.eps, plan.sum())
    return RegOTCost(transport, dual)


def grad_weights(out: SinkhornOutput, prob: LinearProblem) -> np.ndarray:
    """Gradient of the regularized OT value in the source weights a.

    By the envelope theorem this is the dual potential f, centered to
    zero mean so it acts on tangent (zero-sum) perturbations of the
    simplex. Refuses non-converged solutions, whose potentials are not
    valid dual certificates.
    """
    if not out.converged:
        raise ValueError("grad_weights requires a converged solution")
    return out.f - out.f.mean()


def grad_points(out: SinkhornOutput, prob: LinearProblem) -> np.ndarray:
    """Gradient of the regularized OT value in the source points x.

    Envelope theorem again: the coupling is treated as constant, so row
    i is ``sum_j P_ij * 2 (x_i - y_j)``. Only defined for point clouds
    with the squared Euclidean cost, whose derivative in x is linear.
    """
    if not out.converged:
        raise ValueError("grad_points requires a converged solution")
    geom = prob.geom
    if not isinstance(geom, PointCloudGeometry) or geom.cost_fn != "sqeucl":
        raise ValueError("grad_points requires a PointCloudGeometry with the sqeucl cost")
    plan = transport_matrix(out, prob).matrix
    row_mass = plan.sum(axis=1)
    return 2.0 * (row_mass[:, None] * geom.x - plan @ geom.y)

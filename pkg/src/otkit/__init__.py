"""Optimal transport toolbox.

Entropic (Sinkhorn) and low-rank solvers for linear OT, a
Gromov-Wasserstein solver by iterated linearization, fixed-support
barycenters, soft sorting/ranking, Gaussian-mixture distances, and
brute-force reference oracles for cross-checking, all over pluggable
cost geometries (dense, point cloud, separable grid).
"""

from .barycenter import BarycenterOutput, BarycenterProblem, solve_barycenter
from .errors import DivergedError, OtkitError
from .geometry import (
    COST_FNS,
    DEFAULT_EPSILON_SCALE,
    DenseGeometry,
    EpsilonSchedule,
    Geometry,
    GridGeometry,
    PointCloudGeometry,
)
from .lowrank import LowRankFactors, LowRankOutput, lr_coupling, solve_lr_sinkhorn
from .quadratic import GWOutput, QuadraticProblem, gw_linearized_cost, gw_objective, solve_gw
from .reference import OracleResult, exact_gw_2x2, exact_lp_uniform, finite_diff
from .sinkhorn import (
    Coupling,
    LinearProblem,
    RegOTCost,
    SinkhornOutput,
    grad_points,
    grad_weights,
    reg_ot_cost,
    solve_sinkhorn,
    transport_matrix,
)
from .tools import (
    Gaussian,
    GaussianMixture,
    GMMDistance,
    SoftSortSpec,
    bures_w2,
    gmm_distance,
    soft_rank,
    soft_sort,
    sort_transport,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "OtkitError",
    "DivergedError",
    "Geometry",
    "DenseGeometry",
    "PointCloudGeometry",
    "GridGeometry",
    "EpsilonSchedule",
    "COST_FNS",
    "DEFAULT_EPSILON_SCALE",
    "LinearProblem",
    "SinkhornOutput",
    "Coupling",
    "RegOTCost",
    "solve_sinkhorn",
    "transport_matrix",
    "reg_ot_cost",
    "grad_weights",
    "grad_points",
    "LowRankFactors",
    "LowRankOutput",
    "solve_lr_sinkhorn",
    "lr_coupling",
    "QuadraticProblem",
    "GWOutput",
    "gw_objective",
    "gw_linearized_cost",
    "solve_gw",
    "BarycenterProblem",
    "BarycenterOutput",
    "solve_barycenter",
    "SoftSortSpec",
    "sort_transport",
    "soft_sort",
    "soft_rank",
    "Gaussian",
    "GaussianMixture",
    "GMMDistance",
    "bures_w2",
    "gmm_distance",
    "OracleResult",
    "exact_lp_uniform",
    "exact_gw_2x2",
    "finite_diff",
]

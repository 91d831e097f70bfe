"""Cost geometries: dense matrices, point clouds, and separable grids.

A geometry describes ground costs c(x_i, y_j) between two families of
locations without necessarily storing the full n-by-m cost matrix.
Solvers interact with costs exclusively through three operations:
materialize the matrix (``cost_matrix``), apply the Gibbs kernel
exp(-C/eps) to a vector (``apply_kernel``), or do the same contraction
in the log domain (``apply_lse_kernel``), which is what the
log-stabilized solvers use throughout.

Backends:

* :class:`DenseGeometry` wraps an explicit cost matrix.
* :class:`PointCloudGeometry` derives costs from two point sets and
  streams kernel applications over row blocks, so the matrix never has
  to exist in memory.
* :class:`GridGeometry` handles costs that separate over the axes of a
  Cartesian grid; kernel applications factor into one small contraction
  per axis instead of one huge matrix product.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

__all__ = [
    "Geometry",
    "DenseGeometry",
    "PointCloudGeometry",
    "GridGeometry",
    "EpsilonSchedule",
    "DEFAULT_EPSILON_SCALE",
    "DEFAULT_BLOCK_SIZE",
    "DEFAULT_DENSE_CAP",
    "COST_FNS",
]

# epsilon_default = this fraction of the (estimated) mean cost.
DEFAULT_EPSILON_SCALE = 0.05
# Mean cost estimation samples at most this many pairs on matrix-free backends.
_MEAN_COST_SAMPLES = 1000
# Row-block width for streamed point-cloud kernel applications.
DEFAULT_BLOCK_SIZE = 256
# Refuse to materialize cost matrices larger than this many entries.
DEFAULT_DENSE_CAP = 4_000_000

COST_FNS = ("sqeucl", "eucl", "cosine")


def _check_axis(axis: str) -> None:
    if axis not in ("rows", "cols"):
        raise ValueError(f"axis must be 'rows' or 'cols', got {axis!r}")


def _check_vector(v: np.ndarray, size: int, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (size,):
        raise ValueError(f"{name} must have shape ({size},), got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")
    return v


def _check_potential(p: np.ndarray, size: int, name: str) -> np.ndarray:
    # Potentials may carry -inf (zero-weight locations); NaN and +inf may not.
    p = np.asarray(p, dtype=float)
    if p.shape != (size,):
        raise ValueError(f"{name} must have shape ({size},), got {p.shape}")
    if np.isnan(p).any() or np.any(p == np.inf):
        raise ValueError(f"{name} contains NaN or +inf entries")
    return p


class EpsilonSchedule:
    """Geometric decay of the regularization toward a target value.

    At iteration t the solver uses ``max(target, target * init_scale *
    decay**t)``: a loose start that tightens geometrically and then
    stays at ``target``.
    """

    def __init__(self, target: float, init_scale: float = 1.0, decay: float = 1.0):
        if not (target > 0):
            raise ValueError("target must be positive")
        if init_scale < 1.0:
            raise ValueError("init_scale must be >= 1")
        if not (0.0 < decay <= 1.0):
            raise ValueError("decay must lie in (0, 1]")
        if init_scale > 1.0 and decay == 1.0:
            raise ValueError("schedule with init_scale > 1 and decay = 1 never reaches its target")
        self.target = float(target)
        self.init_scale = float(init_scale)
        self.decay = float(decay)

    def at(self, t: int) -> float:
        return max(self.target, self.target * self.init_scale * self.decay**t)


class Geometry:
    """Abstract cost structure between n source and m target locations."""

    _shape: tuple[int, int]
    _epsilon_default: float | None

    @property
    def shape(self) -> tuple[int, int]:
        return self._shape

    @property
    def epsilon_default(self) -> float:
        """Default regularization: a small fraction of the mean cost."""
        if self._epsilon_default is None:
            self._epsilon_default = DEFAULT_EPSILON_SCALE * self.mean_cost()
        return self._epsilon_default

    def mean_cost(self) -> float:
        """Mean entry of the cost matrix, possibly estimated by sampling."""
        raise NotImplementedError

    def cost_matrix(self, max_entries: int | None = None) -> np.ndarray:
        """Materializes the full cost matrix.

        Refuses when n*m exceeds ``max_entries`` (default
        ``DEFAULT_DENSE_CAP``), so matrix-free pipelines fail loudly
        instead of allocating by accident.
        """
        raise NotImplementedError

    def apply_kernel(self, v: np.ndarray, eps: float | None = None, axis: str = "rows") -> np.ndarray:
        """Applies the Gibbs kernel K = exp(-C/eps) to a vector.

        Args:
          v: vector of length m for ``axis="rows"`` (returns K v, length
            n) or length n for ``axis="cols"`` (returns K^T v, length m).
          eps: positive regularization; ``None`` uses ``epsilon_default``.
          axis: which side of the kernel to contract.
        """
        raise NotImplementedError

    def apply_lse_kernel(
        self, f: np.ndarray, g: np.ndarray, eps: float | None = None, axis: str = "rows"
    ) -> np.ndarray:
        """Log-domain kernel application with max-subtraction.

        For ``axis="rows"`` returns, for each i,
        ``eps * log sum_j exp((f_i + g_j - C_ij)/eps)``; for
        ``axis="cols"`` the symmetric contraction over i. Equals
        ``eps * log(e^{f/eps} * (K e^{g/eps}))`` without ever forming K.
        Potentials may contain -inf entries (excluded mass).
        """
        raise NotImplementedError

    def _resolve_eps(self, eps: float | None) -> float:
        if eps is None:
            return self.epsilon_default
        eps = float(eps)
        if not (eps > 0):
            raise ValueError("eps must be positive")
        return eps

    def _check_cap(self, max_entries: int | None) -> None:
        cap = DEFAULT_DENSE_CAP if max_entries is None else int(max_entries)
        n, m = self.shape
        if n * m > cap:
            raise ValueError(
                f"cost matrix with {n}x{m} = {n * m} entries exceeds the materialization cap {cap}"
            )


class DenseGeometry(Geometry):
    """Geometry backed by an explicit cost matrix."""

    def __init__(self, cost: np.ndarray, epsilon_default: float | None = None):
        cost = np.asarray(cost, dtype=float)
        if cost.ndim != 2 or cost.size == 0:
            raise ValueError(f"cost must be a non-empty 2-D array, got shape {cost.shape}")
        if not np.all(np.isfinite(cost)):
            raise ValueError("cost matrix contains non-finite entries")
        if epsilon_default is not None and not (epsilon_default > 0):
            raise ValueError("epsilon_default must be positive")
        self._cost = cost
        self._shape = cost.shape
        self._epsilon_default = epsilon_default

    def mean_cost(self) -> float:
        return float(self._cost.mean())

    def cost_matrix(self, max_entries: int | None = None) -> np.ndarray:
        self._check_cap(max_entries)
        return self._cost

    def apply_kernel(self, v, eps=None, axis="rows"):
        _check_axis(axis)
        eps = self._resolve_eps(eps)
        n, m = self.shape
        kernel = np.exp(-self._cost / eps)
        if axis == "rows":
            v = _check_vector(v, m, "v")
            return kernel @ v
        v = _check_vector(v, n, "v")
        return kernel.T @ v

    def apply_lse_kernel(self, f, g, eps=None, axis="rows"):
        _check_axis(axis)
        eps = self._resolve_eps(eps)
        n, m = self.shape
        f = _check_potential(f, n, "f")
        g = _check_potential(g, m, "g")
        z = (f[:, None] + g[None, :] - self._cost) / eps
        return eps * logsumexp(z, axis=1 if axis == "rows" else 0)


class PointCloudGeometry(Geometry):
    """Pairwise costs between two point sets, streamed in row blocks.

    Supported cost functions: squared Euclidean (``"sqeucl"``),
    Euclidean (``"eucl"``) and cosine (``"cosine"``, one minus the
    cosine similarity; zero vectors are rejected). Kernel applications
    materialize at most ``block_size`` cost rows at a time, so memory
    stays O(block_size * max(n, m)). The block size is a performance
    knob only; every output entry is reduced over its full axis in one
    call, so results do not depend on it.
    """

    def __init__(
        self,
        x: np.ndarray,
        y: np.ndarray,
        cost_fn: str = "sqeucl",
        epsilon_default: float | None = None,
        block_size: int = DEFAULT_BLOCK_SIZE,
    ):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.ndim != 2 or y.ndim != 2:
            raise ValueError("x and y must be 2-D arrays of shape (num_points, dim)")
        if x.shape[0] == 0 or y.shape[0] == 0:
            raise ValueError("point sets must be non-empty")
        if x.shape[1] != y.shape[1]:
            raise ValueError(f"dimension mismatch: x has d={x.shape[1]}, y has d={y.shape[1]}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("points contain non-finite entries")
        if cost_fn not in COST_FNS:
            raise ValueError(f"cost_fn must be one of {COST_FNS}, got {cost_fn!r}")
        if epsilon_default is not None and not (epsilon_default > 0):
            raise ValueError("epsilon_default must be positive")
        if block_size < 1:
            raise ValueError("block_size must be >= 1")
        if cost_fn == "cosine":
            if np.any(np.linalg.norm(x, axis=1) == 0) or np.any(np.linalg.norm(y, axis=1) == 0):
                raise ValueError("cosine cost is undefined for zero vectors")
        self.x = x
        self.y = y
        self.cost_fn = cost_fn
        self.block_size = int(block_size)
        self._shape = (x.shape[0], y.shape[0])
        self._epsilon_default = epsilon_default
        # Same point set on both sides: enforce an exactly zero diagonal,
        # which pairwise formulas only give up to rounding.
        self._same_points = x is y or (x.shape == y.shape and np.array_equal(x, y))

    def _cost_block(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        if self.cost_fn == "cosine":
            xn = xs / np.linalg.norm(xs, axis=1, keepdims=True)
            yn = ys / np.linalg.norm(ys, axis=1, keepdims=True)
            return 1.0 - xn @ yn.T
        sq = (
            np.einsum("id,id->i", xs, xs)[:, None]
            + np.einsum("jd,jd->j", ys, ys)[None, :]
            - 2.0 * xs @ ys.T
        )
        np.maximum(sq, 0.0, out=sq)
        if self.cost_fn == "eucl":
            return np.sqrt(sq)
        return sq

    def _cost_rows(self, start: int, stop: int) -> np.ndarray:
        """Cost rows [start, stop) against all of y."""
        block = self._cost_block(self.x[start:stop], self.y)
        if self._same_points:
            idx = np.arange(start, min(stop, self.shape[1]))
            block[idx - start, idx] = 0.0
        return block

    def _cost_cols(self, start: int, stop: int) -> np.ndarray:
        """Cost columns [start, stop) against all of x."""
        block = self._cost_block(self.x, self.y[start:stop])
        if self._same_points:
            idx = np.arange(start, min(stop, self.shape[0]))
            block[idx, idx - start] = 0.0
        return block

    def mean_cost(self) -> float:
        n, m = self.shape
        if n * m <= _MEAN_COST_SAMPLES:
            return float(self.cost_matrix(max_entries=n * m).mean())
        rng = np.random.default_rng(0)
        i = rng.integers(0, n, size=_MEAN_COST_SAMPLES)
        j = rng.integers(0, m, size=_MEAN_COST_SAMPLES)
        if self.cost_fn == "cosine":
            xn = self.x[i] / np.linalg.norm(self.x[i], axis=1, keepdims=True)
            yn = self.y[j] / np.linalg.norm(self.y[j], axis=1, keepdims=True)
            vals = 1.0 - np.einsum("kd,kd->k", xn, yn)
        else:
            diff = self.x[i] - self.y[j]
            vals = np.maximum(np.einsum("kd,kd->k", diff, diff), 0.0)
            if self.cost_fn == "eucl":
                vals = np.sqrt(vals)
        if self._same_points:
            vals = np.where(i == j, 0.0, vals)
        return float(vals.mean())

    def cost_matrix(self, max_entries: int | None = None) -> np.ndarray:
        self._check_cap(max_entries)
        return self._cost_rows(0, self.shape[0])

    def apply_kernel(self, v, eps=None, axis="rows"):
        _check_axis(axis)
        eps = self._resolve_eps(eps)
        n, m = self.shape
        if axis == "rows":
            v = _check_vector(v, m, "v")
            out = np.empty(n)
            for start in range(0, n, self.block_size):
                stop = min(start + self.block_size, n)
                out[start:stop] = np.exp(-self._cost_rows(start, stop) / eps) @ v
            return out
        v = _check_vector(v, n, "v")
        out = np.empty(m)
        for start in range(0, m, self.block_size):
            stop = min(start + self.block_size, m)
            out[start:stop] = v @ np.exp(-self._cost_cols(start, stop) / eps)
        return out

    def apply_lse_kernel(self, f, g, eps=None, axis="rows"):
        _check_axis(axis)
        eps = self._resolve_eps(eps)
        n, m = self.shape
        f = _check_potential(f, n, "f")
        g = _check_potential(g, m, "g")
        if axis == "rows":
            out = np.empty(n)
            for start in range(0, n, self.block_size):
                stop = min(start + self.block_size, n)
                z = (f[start:stop, None] + g[None, :] - self._cost_rows(start, stop)) / eps
                out[start:stop] = eps * logsumexp(z, axis=1)
            return out
        out = np.empty(m)
        for start in range(0, m, self.block_size):
            stop = min(start + self.block_size, m)
            z = (f[:, None] + g[None, start:stop] - self._cost_cols(start, stop)) / eps
            out[start:stop] = eps * logsumexp(z, axis=0)
        return out


class GridGeometry(Geometry):
    """Separable costs on a Cartesian product grid.

    The support is the product of ``axes`` (d coordinate vectors) in
    row-major unraveling, and the cost between two grid nodes is the sum
    of per-axis costs, by default squared coordinate differences. The
    Gibbs kernel then factors into a tensor product of d small per-axis
    kernels, and both kernel applications run as d successive per-axis
    contractions on the reshaped input instead of one N^2 product.
    """

    def __init__(
        self,
        axes: list[np.ndarray],
        cost_matrices: list[np.ndarray] | None = None,
        epsilon_default: float | None = None,
    ):
        if not axes:
            raise ValueError("need at least one axis")
        axes = [np.asarray(ax, dtype=float) for ax in axes]
        for k, ax in enumerate(axes):
            if ax.ndim != 1 or ax.size == 0:
                raise ValueError(f"axis {k} must be a non-empty 1-D array")
            if not np.all(np.isfinite(ax)):
                raise ValueError(f"axis {k} contains non-finite entries")
        if cost_matrices is None:
            cost_matrices = [(ax[:, None] - ax[None, :]) ** 2 for ax in axes]
        cost_matrices = [np.asarray(c, dtype=float) for c in cost_matrices]
        if len(cost_matrices) != len(axes):
            raise ValueError("need exactly one cost matrix per axis")
        for k, (ax, c) in enumerate(zip(axes, cost_matrices)):
            if c.shape != (ax.size, ax.size):
                raise ValueError(f"cost matrix {k} must be {ax.size}x{ax.size}, got {c.shape}")
            if not np.all(np.isfinite(c)):
                raise ValueError(f"cost matrix {k} contains non-finite entries")
        if epsilon_default is not None and not (epsilon_default > 0):
            raise ValueError("epsilon_default must be positive")
        self.axes = axes
        self.cost_matrices = cost_matrices
        self.grid_shape = tuple(ax.size for ax in axes)
        total = int(np.prod(self.grid_shape))
        self._shape = (total, total)
        self._epsilon_default = epsilon_default

    def mean_cost(self) -> float:
        total = self.shape[0]
        if total * total <= _MEAN_COST_SAMPLES:
            return float(self.cost_matrix(max_entries=total * total).mean())
        # The mean of a separable cost is the sum of per-axis means; no
        # sampling needed even when the full matrix is out of reach.
        return float(sum(c.mean() for c in self.cost_matrices))

    def cost_matrix(self, max_entries: int | None = None) -> np.ndarray:
        self._check_cap(max_entries)
        d = len(self.axes)
        full = np.zeros(self.grid_shape + self.grid_shape)
        for k, c in enumerate(self.cost_matrices):
            shape = [1] * (2 * d)
            shape[k] = c.shape[0]
            shape[d + k] = c.shape[1]
            full = full + c.reshape(shape)
        total = self.shape[0]
        return full.reshape(total, total)

    def apply_kernel(self, v, eps=None, axis="rows"):
        _check_axis(axis)
        eps = self._resolve_eps(eps)
        v = _check_vector(v, self.shape[0], "v")
        t = v.reshape(self.grid_shape)
        for k, c in enumerate(self.cost_matrices):
            kernel = np.exp(-(c if axis == "rows" else c.T) / eps)
            t = np.moveaxis(np.tensordot(kernel, t, axes=(1, k)), 0, k)
        return t.reshape(-1)

    def apply_lse_kernel(self, f, g, eps=None, axis="rows"):
        _check_axis(axis)
        eps = self._resolve_eps(eps)
        total = self.shape[0]
        f = _check_potential(f, total, "f")
        g = _check_potential(g, total, "g")
        # eps*log(K e^{g/eps}) factors into per-axis log-space
        # contractions; the remaining potential enters additively.
        outer, inner = (f, g) if axis == "rows" else (g, f)
        t = (inner / eps).reshape(self.grid_shape)
        for k, c in enumerate(self.cost_matrices):
            log_kernel = -(c if axis == "rows" else c.T) / eps
            moved = np.moveaxis(t, k, -1)
            contracted = logsumexp(moved[..., None, :] + log_kernel, axis=-1)
            t = np.moveaxis(contracted, -1, k)
        return outer + eps * t.reshape(-1)

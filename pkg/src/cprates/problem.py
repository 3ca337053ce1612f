"""Grids, quadrature-weighted vectors, dense linear operators and noise.

Vectors live either on a midpoint grid of (0, pi/2), where the inner
product carries the quadrature weight h, or in a truncated sequence space
with unit weight.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

HALF_PI = math.pi / 2


class DimensionError(ValueError):
    """Raised when vector and operator sizes do not match."""


class OperatorNormError(RuntimeError):
    """Power iteration did not reach its tolerance.

    The last estimate is kept in ``estimate``.
    """

    def __init__(self, message: str, estimate: float):
        super().__init__(message)
        self.estimate = estimate


@dataclass(frozen=True)
class Grid:
    """Uniform midpoint grid of (0, pi/2) with ``n`` nodes."""

    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"grid needs n >= 2 nodes, got {self.n!r}")

    @property
    def weight(self) -> float:
        return HALF_PI / self.n

    @cached_property
    def nodes(self) -> np.ndarray:
        s = (np.arange(self.n) + 0.5) * self.weight
        s.setflags(write=False)
        return s

    def sample(self, func) -> "GridFunction":
        """Evaluate a vectorized callable at the nodes."""
        return GridFunction(np.asarray(func(self.nodes), dtype=float), self.weight, self)

    def constant(self, value: float) -> "GridFunction":
        return GridFunction(np.full(self.n, float(value)), self.weight, self)


def make_grid(n: int) -> Grid:
    return Grid(n)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Real vector with the inner product ``weight * sum(x_i * y_i)``.

    ``grid`` is None in sequence-space mode, where ``weight`` is normally 1.
    """

    values: np.ndarray
    weight: float = 1.0
    grid: Grid | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.ndim != 1:
            raise DimensionError(f"expected a 1-d array, got shape {v.shape}")
        if self.grid is not None and v.size != self.grid.n:
            raise DimensionError(f"{v.size} values for a grid of {self.grid.n} nodes")
        if not self.weight > 0:
            raise ValueError("weight must be positive")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "weight", float(self.weight))

    @classmethod
    def sequence(cls, values) -> "GridFunction":
        return cls(np.asarray(values, dtype=float), 1.0, None)

    @property
    def dim(self) -> int:
        return self.values.size

    def like(self, values) -> "GridFunction":
        """New vector in the same space."""
        return GridFunction(values, self.weight, self.grid)

    def _check(self, other: "GridFunction"):
        if other.dim != self.dim:
            raise DimensionError(f"dimension mismatch: {self.dim} vs {other.dim}")
        if other.weight != self.weight:
            raise DimensionError(f"weight mismatch: {self.weight} vs {other.weight}")

    def inner(self, other: "GridFunction") -> float:
        self._check(other)
        return self.weight * float(np.dot(self.values, other.values))

    def norm(self) -> float:
        scale = float(np.max(np.abs(self.values))) if self.dim else 0.0
        if scale == 0.0 or not math.isfinite(scale):
            return scale
        return math.sqrt(self.weight) * scale * float(np.linalg.norm(self.values / scale))

    def __add__(self, other: "GridFunction") -> "GridFunction":
        self._check(other)
        return self.like(self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        self._check(other)
        return self.like(self.values - other.values)

    def __mul__(self, scalar: float) -> "GridFunction":
        return self.like(self.values * float(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar: float) -> "GridFunction":
        return self.like(self.values / float(scalar))

    def __neg__(self) -> "GridFunction":
        return self.like(-self.values)

    def __repr__(self):
        where = f"grid n={self.grid.n}" if self.grid is not None else "sequence"
        return f"GridFunction(dim={self.dim}, weight={self.weight:g}, {where})"


def inner(x: GridFunction, y: GridFunction) -> float:
    return x.inner(y)


def norm(x: GridFunction) -> float:
    return x.norm()


@dataclass(frozen=True, eq=False)
class LinearProblemOperator:
    """Dense operator between two copies of the same weighted space.

    Domain and range share the weight, so the adjoint is the transpose.
    """

    matrix: np.ndarray
    weight: float = 1.0
    grid: Grid | None = None
    name: str = "dense"
    _norm_lock: threading.Lock = field(default_factory=threading.Lock, repr=False)
    _norm_cache: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float, copy=True)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"expected a square matrix, got shape {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        adj = np.ascontiguousarray(m.T)
        adj.setflags(write=False)
        object.__setattr__(self, "_adjoint", adj)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def adjoint_matrix(self) -> np.ndarray:
        return self._adjoint

    def _check(self, x: GridFunction):
        if x.dim != self.dim:
            raise DimensionError(f"operator of size {self.dim} applied to vector of size {x.dim}")
        if x.weight != self.weight:
            raise DimensionError(f"operator weight {self.weight} vs vector weight {x.weight}")

    def apply(self, x: GridFunction) -> GridFunction:
        self._check(x)
        return x.like(self.matrix @ x.values)

    def adjoint_apply(self, y: GridFunction) -> GridFunction:
        self._check(y)
        return y.like(self._adjoint @ y.values)

    def zeros(self) -> GridFunction:
        return GridFunction(np.zeros(self.dim), self.weight, self.grid)

    def wrap(self, values) -> GridFunction:
        return GridFunction(values, self.weight, self.grid)

    def norm(self, rtol: float = 1e-6, max_iter: int = 10_000) -> float:
        """Largest singular value, computed once and cached."""
        with self._norm_lock:
            if not self._norm_cache:
                self._norm_cache.append(_power_iteration_norm(self.matrix, rtol, max_iter))
            return self._norm_cache[0]


def _power_iteration_norm(matrix: np.ndarray, rtol: float, max_iter: int) -> float:
    # sqrt of the top eigenvalue of M^T M; the weight cancels between the
    # two inner products, so the plain matrix 2-norm is the operator norm
    gram = matrix.T @ matrix
    v = np.random.default_rng(12345).standard_normal(matrix.shape[1])
    v /= np.linalg.norm(v)
    estimate, prev_change = 0.0, math.inf
    for _ in range(max_iter):
        u = gram @ v
        unorm = np.linalg.norm(u)
        if unorm == 0.0:
            return 0.0
        new = float(v @ u)
        v = u / unorm
        change = abs(new - estimate)
        # geometric tail of the remaining error, from the observed contraction
        ratio = min(change / prev_change, 0.999999) if prev_change > 0 else 0.0
        if change <= rtol * abs(new) and change * ratio / (1.0 - ratio) <= rtol * abs(new):
            return math.sqrt(max(new, 0.0))
        estimate, prev_change = new, change
    raise OperatorNormError(
        f"power iteration did not converge in {max_iter} iterations",
        math.sqrt(max(estimate, 0.0)),
    )


def apply(op: LinearProblemOperator, x: GridFunction) -> GridFunction:
    return op.apply(x)


def adjoint_apply(op: LinearProblemOperator, y: GridFunction) -> GridFunction:
    return op.adjoint_apply(y)


def operator_norm(op: LinearProblemOperator) -> float:
    return op.norm()


def depth_profiling_kernel(tau):
    return np.exp(-np.sin(tau)) * np.cos(tau)


def build_depth_profiling_operator(grid: Grid) -> LinearProblemOperator:
    """Midpoint discretization of

        (Ax)(s) = int_0^{pi/2 - s} exp(-sin t) cos t x(t) dt

    on ``grid``. The upper limit uses arcsin(cos s) = pi/2 - s. A cell cut by
    the upper limit contributes its covered length, with the kernel taken at
    the midpoint of the covered part.
    """
    n, h, s = grid.n, grid.weight, grid.nodes
    left = np.arange(n) * h
    upper = HALF_PI - s
    covered = np.clip(np.minimum(left + h, upper[:, None]) - left, 0.0, h)
    tau = left + 0.5 * covered
    matrix = covered * depth_profiling_kernel(tau)
    return LinearProblemOperator(matrix, grid.weight, grid, name="depth-profiling")


def build_diagonal_operator(dim: int) -> LinearProblemOperator:
    """Truncation of Ax = (x_1, 0, x_3/3, 0, x_5/5, ...) to R^dim.

    Indices are 1-based: odd i is scaled by 1/i, even i is annihilated.
    """
    if int(dim) != dim or dim < 2:
        raise ValueError(f"diagonal operator needs dim >= 2, got {dim!r}")
    return LinearProblemOperator(np.diag(diagonal_entries(dim)), 1.0, None, name="diagonal")


def diagonal_entries(dim: int) -> np.ndarray:
    i = np.arange(1, dim + 1)
    return np.where(i % 2 == 1, 1.0 / i, 0.0)


@dataclass(frozen=True)
class NoiseSpec:
    delta: float
    seed: int = 0
    stream: int = 0

    def __post_init__(self):
        if not self.delta >= 0:
            raise ValueError(f"noise level must be >= 0, got {self.delta!r}")
        if self.seed < 0 or self.stream < 0:
            raise ValueError("seed and stream must be nonnegative")


def noise_generator(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by (seed, stream)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, stream])))


def add_noise(y: GridFunction, spec: NoiseSpec) -> GridFunction:
    """Add a standard-normal sample rescaled to weighted norm exactly ``delta``."""
    if spec.delta == 0:
        return y.like(y.values)
    e = y.like(noise_generator(spec.seed, spec.stream).standard_normal(y.dim))
    return y + e * (spec.delta / e.norm())

"""Tikhonov functional, critical-point residual and iterative solvers.

The residual of a candidate x is

    z(x) = A*(Ax - y) + alpha * G(x),

which equals the gradient of the Tikhonov functional when G is the exact
gradient of R. Solvers stop on a gradient-norm tolerance, on a
near-minimizer test against the exact minimizer, or on an iteration cap.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .problem import DimensionError, GridFunction, LinearProblemOperator
from .regularizers import EXACT, GeneralizedQuadratic, Regularizer

DEFAULT_MAX_ITER = 10**6


class UnsupportedProblem(ValueError):
    """The requested method does not apply to this regularizer."""


@dataclass(frozen=True, eq=False)
class TikhonovProblem:
    """H(x) = ||Ax - data||^2 / 2 + alpha * R(x)."""

    operator: LinearProblemOperator
    data: GridFunction
    alpha: float
    regularizer: Regularizer
    selection: str = EXACT

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha!r}")
        if self.data.dim != self.operator.dim or self.data.weight != self.operator.weight:
            raise DimensionError("data does not live in the range of the operator")
        self.regularizer._check_selection(self.selection)

    @property
    def weight(self) -> float:
        return self.operator.weight

    def _check(self, x: GridFunction):
        if x.dim != self.operator.dim or x.weight != self.operator.weight:
            raise DimensionError(f"vector of size {x.dim} for a problem of size {self.operator.dim}")


class StopReason(str, enum.Enum):
    GRAD_NORM = "GradNorm"
    NEAR_MINIMIZER = "NearMinimizer"
    MAX_ITER = "MaxIter"


@dataclass(frozen=True)
class GradNorm:
    """Stop once ||z(x)|| <= tau."""

    tau: float

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")


@dataclass(frozen=True)
class NearMinimizer:
    """Stop once H(x) <= reference + alpha * eta.

    ``reference`` is the value of H at the exact minimizer; see
    :func:`near_minimizer_rule`.
    """

    eta: float
    reference: float

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")


@dataclass(frozen=True)
class MaxIter:
    limit: int

    def __post_init__(self):
        if self.limit < 1:
            raise ValueError("limit must be >= 1")


StoppingRule = GradNorm | NearMinimizer | MaxIter


@dataclass(eq=False)
class SolveReport:
    final_iterate: GridFunction
    iterations: int
    stop_reason: StopReason
    residual_norm: float
    sign_flag: bool
    objective: float
    trace: list[tuple[float, float]] | None = field(default=None, repr=False)


def tikhonov_value(problem: TikhonovProblem, x: GridFunction) -> float:
    problem._check(x)
    r = problem.operator.apply(x) - problem.data
    return 0.5 * r.inner(r) + problem.alpha * problem.regularizer.value(x)


def residual(problem: TikhonovProblem, x: GridFunction) -> GridFunction:
    problem._check(x)
    op = problem.operator
    r = op.apply(x) - problem.data
    return op.adjoint_apply(r) + problem.alpha * problem.regularizer.gradient(problem.selection, x)


def tikhonov_gap(problem: TikhonovProblem, x: GridFunction, reference: GridFunction) -> float:
    """H(x) - H(reference)."""
    return tikhonov_value(problem, x) - tikhonov_value(problem, reference)


def choose_alpha(delta: float, c: float = 1.0) -> float:
    if not delta > 0:
        raise ValueError(f"noise level must be positive, got {delta!r}")
    if not c > 0:
        raise ValueError(f"alpha constant must be positive, got {c!r}")
    return c * delta


def _regularizer_gram(problem: TikhonovProblem) -> np.ndarray:
    reg = problem.regularizer
    if isinstance(reg, GeneralizedQuadratic):
        return reg.gram
    if reg.is_quadratic():
        return np.eye(problem.operator.dim)
    raise UnsupportedProblem(f"{reg!r} is not quadratic")


def normal_matrix(problem: TikhonovProblem) -> np.ndarray:
    """A*A + alpha K*K for the quadratic kinds (K = I for ``quad``)."""
    A = problem.operator.matrix
    return A.T @ A + problem.alpha * _regularizer_gram(problem)


def exact_minimizer(problem: TikhonovProblem) -> GridFunction:
    """Solve the normal equations by a dense Cholesky solve."""
    N = normal_matrix(problem)
    b = problem.operator.adjoint_matrix @ problem.data.values
    x = scipy.linalg.solve(N, b, assume_a="pos")
    return problem.data.like(x)


def near_minimizer_rule(problem: TikhonovProblem, eta: float) -> NearMinimizer:
    return NearMinimizer(eta, tikhonov_value(problem, exact_minimizer(problem)))


def lipschitz_constant(problem: TikhonovProblem) -> float:
    reg = problem.regularizer
    return problem.operator.norm() ** 2 + problem.alpha * reg.curvature(problem.selection, problem.weight)


def _resolve_step(problem, step) -> float:
    if step == "auto":
        return 1.0 / lipschitz_constant(problem)
    step = float(step)
    if not step > 0:
        raise ValueError("step must be positive")
    return step


class _Evaluator:
    """Array-level residual and objective of one problem."""

    def __init__(self, problem: TikhonovProblem):
        self.problem = problem
        self.A = problem.operator.matrix
        self.At = problem.operator.adjoint_matrix
        self.y = problem.data.values
        self.w = problem.weight
        self.alpha = problem.alpha
        self.reg = problem.regularizer
        self.selection = problem.selection
        self.quadratic = self.reg.is_quadratic()
        if self.quadratic:
            self.N = normal_matrix(problem)
            self.b = self.At @ self.y

    def z(self, x: np.ndarray) -> np.ndarray:
        if self.quadratic:
            return self.N @ x - self.b
        return self.At @ (self.A @ x - self.y) + self.alpha * self.reg.gradient_values(self.selection, x, self.w)

    def norm(self, v: np.ndarray) -> float:
        return math.sqrt(self.w) * float(np.linalg.norm(v))

    def objective(self, x: np.ndarray) -> float:
        return tikhonov_value(self.problem, self.problem.data.like(x))


def _cap(stop: StoppingRule, max_iter: int) -> int:
    if isinstance(stop, MaxIter):
        return min(stop.limit, max_iter)
    return max_iter


def _satisfied(stop, ev: _Evaluator, x, znorm) -> bool:
    if isinstance(stop, GradNorm):
        return znorm <= stop.tau
    if isinstance(stop, NearMinimizer):
        return ev.objective(x) <= stop.reference + ev.alpha * stop.eta
    return False


def _finish(ev: _Evaluator, x, z, iterations, reason, trace) -> SolveReport:
    return SolveReport(
        final_iterate=ev.problem.data.like(x),
        iterations=iterations,
        stop_reason=reason,
        residual_norm=ev.norm(z),
        sign_flag=bool(ev.w * float(z @ x) <= 0.0),
        objective=ev.objective(x),
        trace=trace,
    )


def _iterate(problem, x0, step, momentum, stop, max_iter, record_trace) -> SolveReport:
    problem._check(x0)
    ev = _Evaluator(problem)
    step = _resolve_step(problem, step)
    cap = _cap(stop, max_iter)
    reason = StopReason.GRAD_NORM if isinstance(stop, GradNorm) else StopReason.NEAR_MINIMIZER
    x = np.array(x0.values, dtype=float)
    x_prev = x.copy()
    trace = [] if record_trace else None
    n = 0
    while True:
        z = ev.z(x)
        znorm = ev.norm(z)
        if trace is not None:
            trace.append((ev.objective(x), znorm))
        if _satisfied(stop, ev, x, znorm):
            return _finish(ev, x, z, n, reason, trace)
        if n >= cap:
            return _finish(ev, x, z, n, StopReason.MAX_ITER, trace)
        if momentum:
            x, x_prev = x - step * z + momentum * (x - x_prev), x
        else:
            x = x - step * z
        n += 1


def gradient_descent(
    problem: TikhonovProblem,
    x0: GridFunction,
    step="auto",
    stop: StoppingRule = GradNorm(1e-8),
    max_iter: int = DEFAULT_MAX_ITER,
    record_trace: bool = False,
) -> SolveReport:
    """Fixed-step descent x <- x - step * z(x).

    With ``step="auto"`` the step is 1/L, where L is the squared operator
    norm plus alpha times the curvature bound of the selection. Hitting
    the cap is reported through ``stop_reason``, not raised.
    """
    return _iterate(problem, x0, step, 0.0, stop, max_iter, record_trace)


def heavy_ball(
    problem: TikhonovProblem,
    x0: GridFunction,
    step="auto",
    momentum: float = 0.5,
    stop: StoppingRule = GradNorm(1e-8),
    max_iter: int = DEFAULT_MAX_ITER,
    record_trace: bool = False,
) -> SolveReport:
    """x_{n+1} = x_n - step * z(x_n) + momentum * (x_n - x_{n-1}).

    Only for convex regularizers.
    """
    if not problem.regularizer.convex:
        raise UnsupportedProblem(f"heavy ball is restricted to convex regularizers, got {problem.regularizer!r}")
    if not 0.0 <= momentum < 1.0:
        raise ValueError("momentum must lie in [0, 1)")
    return _iterate(problem, x0, step, float(momentum), stop, max_iter, record_trace)


def _first_index(predicate, cap: int) -> int | None:
    """Smallest m in [0, cap] with predicate(m), for monotone predicates."""
    if predicate(0):
        return 0
    hi = 1
    while not predicate(hi):
        if hi >= cap:
            return None
        hi = min(2 * hi, cap)
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if predicate(mid):
            hi = mid
        else:
            lo = mid
    return hi


def gradient_descent_spectral(
    problem: TikhonovProblem,
    x0: GridFunction,
    step="auto",
    stop: StoppingRule = GradNorm(1e-8),
    max_iter: int = DEFAULT_MAX_ITER,
) -> SolveReport:
    """Closed form of :func:`gradient_descent` for quadratic regularizers.

    In the eigenbasis of the normal matrix N the m-th iterate is
    x* + V (1 - step*lam)^m V^T (x0 - x*). For step <= 1/L every factor
    lies in (-1, 1), so ||z_m|| and H(x_m) - H(x*) are nonincreasing in m and
    the first stopping index is found by bisection. Suited to ladders that
    need tens of millions of plain iterations.
    """
    problem._check(x0)
    if not problem.regularizer.is_quadratic():
        raise UnsupportedProblem("spectral descent needs a quadratic regularizer")
    step = _resolve_step(problem, step)
    ev = _Evaluator(problem)
    lam, V = np.linalg.eigh(ev.N)
    factor = 1.0 - step * lam
    # |factor| < 1 is all monotonicity needs; signs cancel in the squared norms
    if np.any(np.abs(factor) >= 1.0):
        raise ValueError("step outside (0, 2/lambda_max): the iteration does not converge")
    xstar = V @ ((V.T @ ev.b) / lam)
    c0 = V.T @ (x0.values - xstar)
    sw = math.sqrt(ev.w)
    cap = _cap(stop, max_iter)

    def coeffs(m):
        return factor**m * c0

    if isinstance(stop, GradNorm):
        reason = StopReason.GRAD_NORM
        m = _first_index(lambda m: sw * np.linalg.norm(lam * coeffs(m)) <= stop.tau, cap)
    elif isinstance(stop, NearMinimizer):
        reason = StopReason.NEAR_MINIMIZER
        hstar = ev.objective(xstar)
        budget = stop.reference + ev.alpha * stop.eta - hstar

        def ok(m):
            c = coeffs(m)
            return 0.5 * ev.w * float(np.sum(lam * c * c)) <= budget

        m = _first_index(ok, cap)
    else:
        reason, m = StopReason.MAX_ITER, None
    if m is None:
        m, reason = cap, StopReason.MAX_ITER
    x = xstar + V @ coeffs(m)
    return _finish(ev, x, ev.z(x), int(m), reason, None)

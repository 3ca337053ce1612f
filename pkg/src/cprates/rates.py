"""Noise-ladder experiments, rate fits and converse checks.

Metrics are measured against the known true solution x_dag of a
constructed instance. A ladder runs one Tikhonov solve per noise level
with alpha = c * delta and a tolerance eta that depends on the ladder's
eta rule.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .problem import (
    Grid,
    GridFunction,
    LinearProblemOperator,
    NoiseSpec,
    add_noise,
    noise_generator,
)
from .regularizers import Regularizer, bregman_sym, bregman_xi
from .variational import (
    DEFAULT_MAX_ITER,
    GradNorm,
    NearMinimizer,
    TikhonovProblem,
    exact_minimizer,
    gradient_descent,
    gradient_descent_spectral,
    heavy_ball,
    tikhonov_value,
)

SOLVERS = ("gd", "gd-spectral", "heavyball", "oracle")
ETA_RULES = ("alpha-power", "delta")
STOPPINGS = ("gradnorm", "near-minimizer")
METRICS = ("discrepancy", "bregman_abs", "bregman_sym_abs", "error_sq", "gap")
DEFAULT_DELTAS = tuple(10.0**-k for k in range(2, 8))


def source_profile(s):
    """w(s) = cos(10 s) + sin(5 s^2)."""
    return np.cos(10 * s) + np.sin(5 * s**2)


def default_source_element(grid: Grid) -> GridFunction:
    return grid.sample(source_profile)


def jump_target(grid: Grid) -> GridFunction:
    """Indicator of (0, pi/4): a target with a jump, far from ran(A*)."""
    return grid.sample(lambda s: (s < math.pi / 4).astype(float))


@dataclass(frozen=True, eq=False)
class SourceSpec:
    """True solution x_dag and exact data y = A x_dag.

    ``w`` is the source element when x_dag = A* w was constructed, else None.
    """

    x_dag: GridFunction
    y: GridFunction
    w: GridFunction | None = None


def make_source_instance(op: LinearProblemOperator, w: GridFunction) -> SourceSpec:
    x_dag = op.adjoint_apply(w)
    return SourceSpec(x_dag=x_dag, y=op.apply(x_dag), w=w)


def make_target_instance(op: LinearProblemOperator, x_dag: GridFunction) -> SourceSpec:
    return SourceSpec(x_dag=x_dag, y=op.apply(x_dag), w=None)


@dataclass(eq=False)
class RunRecord:
    delta: float
    alpha: float
    eta: float
    tau: float
    iterations: int
    discrepancy: float
    error_sq: float
    bregman_abs: float
    bregman_sym_abs: float
    gap: float
    sign_flag: bool
    stop_reason: str
    residual_norm: float
    iterate: GridFunction = field(repr=False)
    data: GridFunction = field(repr=False)
    operator: LinearProblemOperator = field(repr=False)

    CSV_FIELDS = (
        "delta", "alpha", "eta", "tau", "iterations", "discrepancy", "error_sq",
        "bregman_abs", "bregman_sym_abs", "gap", "sign_flag", "stop_reason", "residual_norm",
    )  # fmt: skip

    def as_row(self) -> dict:
        return {k: getattr(self, k) for k in self.CSV_FIELDS}


def ladder_eta(alpha: float, delta: float, rule: str, beta: float) -> float:
    if rule == "alpha-power":
        return alpha**beta
    if rule == "delta":
        return delta
    raise ValueError(f"unknown eta rule {rule!r}; choose from {ETA_RULES}")


def _validate_deltas(deltas) -> list[float]:
    deltas = [float(d) for d in deltas]
    if not deltas:
        raise ValueError("empty noise ladder")
    if any(not d > 0 for d in deltas):
        raise ValueError("noise levels must be positive")
    if any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("noise levels must be strictly decreasing")
    return deltas


def run_noise_ladder(
    op: LinearProblemOperator,
    source: SourceSpec,
    reg: Regularizer,
    selection: str,
    deltas,
    alpha_c: float = 1.0,
    beta: float = 0.1,
    x0: GridFunction | None = None,
    solver: str = "gd",
    seed: int = 0,
    eta_rule: str = "alpha-power",
    stopping: str = "gradnorm",
    momentum: float = 0.5,
    max_iter: int = DEFAULT_MAX_ITER,
    workers: int = 1,
) -> list[RunRecord]:
    """One solve per noise level; entry ``k`` draws noise from stream ``k``.

    With gradient-norm stopping the tolerance is tau = alpha * eta; for
    ``eta_rule="alpha-power"`` and ``alpha_c = 1`` this is delta^(1+beta).
    """
    deltas = _validate_deltas(deltas)
    if solver not in SOLVERS:
        raise ValueError(f"unknown solver {solver!r}; choose from {SOLVERS}")
    if stopping not in STOPPINGS:
        raise ValueError(f"unknown stopping rule {stopping!r}; choose from {STOPPINGS}")
    if beta < 0:
        raise ValueError("beta must be >= 0")
    if eta_rule not in ETA_RULES:
        raise ValueError(f"unknown eta rule {eta_rule!r}; choose from {ETA_RULES}")
    if x0 is None:
        x0 = op.zeros()
    xi = reg.gradient(selection, source.x_dag)

    def one(k: int) -> RunRecord:
        delta = deltas[k]
        alpha = alpha_c * delta
        eta = ladder_eta(alpha, delta, eta_rule, beta)
        data = add_noise(source.y, NoiseSpec(delta, seed, k))
        problem = TikhonovProblem(op, data, alpha, reg, selection)
        return _solve_and_measure(problem, source, xi, x0, eta, solver, stopping, momentum, max_iter, delta)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, range(len(deltas))))
    return [one(k) for k in range(len(deltas))]


def _solve_and_measure(problem, source, xi, x0, eta, solver, stopping, momentum, max_iter, delta) -> RunRecord:
    alpha, reg, sel = problem.alpha, problem.regularizer, problem.selection
    oracle = exact_minimizer(problem) if reg.is_quadratic() else None
    tau = alpha * eta
    if stopping == "gradnorm":
        stop = GradNorm(tau)
    else:
        if oracle is None:
            raise ValueError("near-minimizer stopping needs a quadratic regularizer")
        stop = NearMinimizer(eta, tikhonov_value(problem, oracle))

    if solver == "oracle":
        if oracle is None:
            raise ValueError("the oracle solver needs a quadratic regularizer")
        x, iterations, reason, sign = oracle, 0, "Exact", None
    else:
        if solver == "gd":
            rep = gradient_descent(problem, x0, stop=stop, max_iter=max_iter)
        elif solver == "gd-spectral":
            rep = gradient_descent_spectral(problem, x0, stop=stop, max_iter=max_iter)
        else:
            rep = heavy_ball(problem, x0, momentum=momentum, stop=stop, max_iter=max_iter)
        x, iterations, reason, sign = rep.final_iterate, rep.iterations, rep.stop_reason.value, rep.sign_flag

    op = problem.operator
    r = op.apply(x) - problem.data
    z = op.adjoint_apply(r) + alpha * reg.gradient(sel, x)
    if sign is None:
        sign = z.inner(x) <= 0.0
    diff = x - source.x_dag
    gap = math.nan
    if oracle is not None:
        # negative gaps only reflect rounding in the oracle solve
        gap = max(0.0, tikhonov_value(problem, x) - tikhonov_value(problem, oracle))
    return RunRecord(
        delta=delta,
        alpha=alpha,
        eta=eta,
        tau=tau,
        iterations=iterations,
        discrepancy=r.norm(),
        error_sq=diff.inner(diff),
        bregman_abs=abs(bregman_xi(reg, xi, x, source.x_dag)),
        bregman_sym_abs=abs(bregman_sym(reg, sel, x, source.x_dag)),
        gap=gap,
        sign_flag=bool(sign),
        stop_reason=reason,
        residual_norm=z.norm(),
        iterate=x,
        data=problem.data,
        operator=op,
    )


class RateFitError(ValueError):
    pass


@dataclass(frozen=True)
class RateFit:
    metric: str
    slope: float
    intercept: float
    r_squared: float
    points_used: int
    dropped: tuple[float, ...] = ()

    CSV_FIELDS = ("metric", "slope", "intercept", "r_squared", "points_used")

    def as_row(self) -> dict:
        return {k: getattr(self, k) for k in self.CSV_FIELDS}


def _linfit(lx: np.ndarray, ly: np.ndarray) -> tuple[float, float, float]:
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_res = float(resid @ resid)
    ss_tot = float(((ly - ly.mean()) ** 2).sum())
    if ss_tot == 0.0:
        r2 = 1.0
    else:
        r2 = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return float(slope), float(intercept), r2


def fit_points(deltas, values, metric: str = "metric", drop_preasymptotic: bool = True) -> RateFit:
    """Least-squares fit of log(value) against log(delta).

    Nonpositive or non-finite values are dropped and listed in ``dropped``
    by their delta. The largest delta is discarded as pre-asymptotic when
    that raises r^2 by more than 0.05.
    """
    pts = sorted(zip(map(float, deltas), map(float, values)), reverse=True)
    dropped = tuple(d for d, v in pts if not (v > 0 and math.isfinite(v)))
    pts = [(d, v) for d, v in pts if v > 0 and math.isfinite(v)]
    if len(pts) < 2:
        raise RateFitError(f"{metric}: fewer than 2 usable points")
    lx = np.log([d for d, _ in pts])
    ly = np.log([v for _, v in pts])
    slope, intercept, r2 = _linfit(lx, ly)
    if drop_preasymptotic and len(pts) >= 3:
        s2, i2, r2b = _linfit(lx[1:], ly[1:])
        if r2b - r2 > 0.05:
            return RateFit(metric, s2, i2, r2b, len(pts) - 1, dropped + (pts[0][0],))
    return RateFit(metric, slope, intercept, r2, len(pts), dropped)


def fit_rate(records, metric: str, drop_preasymptotic: bool = True) -> RateFit:
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; choose from {METRICS}")
    records = list(records)
    return fit_points(
        [r.delta for r in records], [getattr(r, metric) for r in records], metric, drop_preasymptotic
    )


@dataclass(frozen=True)
class BoundCheck:
    """Constants C_k = metric_k / bound_k relative to the largest-delta one."""

    metric: str
    constants: tuple[float, ...]
    reference: float
    max_ratio: float
    within_factor: bool

    def as_dict(self) -> dict:
        return {
            "metric": self.metric,
            "constants": list(self.constants),
            "reference": self.reference,
            "max_ratio": self.max_ratio,
            "within_factor": self.within_factor,
        }


def bound_check(records, metric: str, bound, factor: float = 10.0) -> BoundCheck:
    """Check metric_k <= factor * C * bound(record_k), C tight at the largest delta."""
    records = sorted(records, key=lambda r: -r.delta)
    vals = [getattr(r, metric) for r in records]
    bounds = [bound(r) for r in records]
    if any(not math.isfinite(v) for v in vals):
        raise ValueError(f"{metric} has missing values")
    consts = tuple(v / b for v, b in zip(vals, bounds))
    ref = consts[0]
    if ref == 0.0:
        ratio = 0.0 if max(consts) == 0.0 else math.inf
    else:
        ratio = max(consts) / ref
    return BoundCheck(metric, consts, ref, ratio, ratio <= factor)


def inexact_bound_check(records, factor: float = 10.0) -> BoundCheck:
    """|D^sym(x_k, x_dag)| <= C (delta_k + eta_k) with a ladder-uniform C."""
    return bound_check(records, "bregman_sym_abs", lambda r: r.delta + r.eta, factor)


@dataclass(frozen=True)
class GapRateReport:
    discrepancy_fit: RateFit
    bregman_fit: RateFit
    discrepancy_bound: BoundCheck
    bregman_bound: BoundCheck

    @property
    def within_factor(self) -> bool:
        return self.discrepancy_bound.within_factor and self.bregman_bound.within_factor

    def as_dict(self) -> dict:
        return {
            "discrepancy_fit": self.discrepancy_fit.as_row(),
            "bregman_fit": self.bregman_fit.as_row(),
            "discrepancy_bound": self.discrepancy_bound.as_dict(),
            "bregman_bound": self.bregman_bound.as_dict(),
            "within_factor": self.within_factor,
        }


def gap_rate_check(records, factor: float = 10.0) -> GapRateReport:
    """Bounds driven by the Tikhonov gap:

    discrepancy^2 <= C (delta^2 + gap) and |D_xi| <= C (delta + gap/delta).
    """
    records = list(records)
    if any(not math.isfinite(r.gap) for r in records):
        raise ValueError("records carry no Tikhonov gap; use a quadratic regularizer")
    sq = [_Squared(r) for r in records]
    disc = bound_check(sq, "discrepancy", lambda r: r.delta**2 + r.gap, factor)
    breg = bound_check(records, "bregman_abs", lambda r: r.delta + r.gap / r.delta, factor)
    return GapRateReport(fit_rate(records, "discrepancy"), fit_rate(records, "bregman_abs"), disc, breg)


class _Squared:
    def __init__(self, rec: RunRecord):
        self.delta, self.gap = rec.delta, rec.gap
        self.discrepancy = rec.discrepancy**2


def iterations_nondecreasing(records) -> bool:
    its = [r.iterations for r in sorted(records, key=lambda r: -r.delta)]
    return all(b >= a for a, b in zip(its, its[1:]))


@dataclass(frozen=True)
class ConverseReport:
    w_norms: tuple[float, ...]
    sup_w_norm: float
    source_residual: float
    source_residuals: tuple[float, ...]
    bounded_flag: bool

    def as_dict(self) -> dict:
        return {
            "w_norms": list(self.w_norms),
            "sup_w_norm": self.sup_w_norm,
            "source_residual": self.source_residual,
            "source_residuals": list(self.source_residuals),
            "bounded_flag": self.bounded_flag,
        }


def converse_check(records, source: SourceSpec, reg: Regularizer, selection: str, bound: float = 10.0) -> ConverseReport:
    """Boundedness of w_k = (A x_k - y_k) / alpha_k along the ladder.

    ``source_residuals`` lists ||G(x_dag) + A* w_k|| per record in ladder
    order; ``source_residual`` is the one at the smallest delta.
    """
    records = sorted(records, key=lambda r: -r.delta)
    if not records:
        raise ValueError("no records")
    g = reg.gradient(selection, source.x_dag)
    w_norms, residuals = [], []
    for rec in records:
        wnorm, adj_w = _residual_source(rec, source)
        w_norms.append(wnorm)
        residuals.append((g + adj_w).norm())
    lo = min(w_norms)
    ratio = math.inf if lo == 0 else max(w_norms) / lo
    return ConverseReport(tuple(w_norms), max(w_norms), residuals[-1], tuple(residuals), ratio <= bound)


def _residual_source(rec: RunRecord, source: SourceSpec):
    op = rec.operator
    wk = (op.apply(rec.iterate) - rec.data) / rec.alpha
    return wk.norm(), op.adjoint_apply(wk)


def verify_b2_constant(
    op: LinearProblemOperator,
    source: SourceSpec,
    reg: Regularizer,
    selection: str,
    sample_count: int = 200,
    radius: float = 1.0,
    seed: int = 0,
    r_window: float | None = None,
    directions: str = "random",
) -> float:
    """Empirical constant c in <G(z), x_dag - z> <= c ||A(z - x_dag)||.

    Samples z = x_dag + t d with t uniform in (0, radius] and ||d|| = 1,
    where d is a random direction (``"random"``) or A* of one
    (``"range"``). Samples with |R(z) - R(x_dag)| > r_window or with
    ||A(z - x_dag)|| < 1e-14 are skipped. The result is never below 0.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    if directions not in ("random", "range"):
        raise ValueError(f"unknown direction mode {directions!r}")
    rng = noise_generator(seed, 1 << 20)
    x_dag = source.x_dag
    r_dag = reg.value(x_dag)
    best, used = 0.0, 0
    for _ in range(sample_count):
        d = op.wrap(rng.standard_normal(op.dim))
        if directions == "range":
            d = op.adjoint_apply(d)
        dn = d.norm()
        if dn == 0:
            continue
        z = x_dag + d * (radius * (1.0 - rng.random()) / dn)
        if r_window is not None and abs(reg.value(z) - r_dag) > r_window:
            continue
        den = op.apply(z - x_dag).norm()
        if den < 1e-14:
            continue
        used += 1
        best = max(best, reg.gradient(selection, z).inner(x_dag - z) / den)
    if used == 0:
        raise ValueError("every B2 sample was degenerate")
    return best


def b2_ratio(op, source, reg, selection, z: GridFunction) -> float | None:
    """The single-sample ratio, or None when the denominator vanishes."""
    den = op.apply(z - source.x_dag).norm()
    if den < 1e-14:
        return None
    return reg.gradient(selection, z).inner(source.x_dag - z) / den

"""Non-convergence of R along inexact critical points.

On the diagonal operator Ax = (x_1, 0, x_3/3, ...) with R = ||x||^2/2, the
exact Tikhonov minimizer x_k vanishes on even indices. Moving it by
eps along e_{2k}, which lies in ker(A), raises H_k by exactly
alpha_k eps^2 / 2 and R by exactly eps^2 / 2. The perturbed points still
converge weakly to x_dag, yet R(z_k) tends to R(x_dag) + eps^2 / 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .problem import GridFunction, build_diagonal_operator, diagonal_entries

IDENTITY_RTOL = 1e-12


@dataclass(frozen=True)
class CounterexampleRecord:
    k: int
    delta: float
    alpha: float
    eps: float
    h_gap: float
    h_gap_expected: float
    r_gap: float
    r_gap_expected: float
    r_excess: float
    h_identity_residual: float
    r_identity_residual: float

    CSV_FIELDS = (
        "k", "delta", "alpha", "eps", "h_gap", "h_gap_expected", "r_gap", "r_gap_expected",
        "r_excess", "h_identity_residual", "r_identity_residual",
    )  # fmt: skip

    def as_row(self) -> dict:
        return {f: getattr(self, f) for f in self.CSV_FIELDS}


@dataclass(frozen=True)
class CounterexampleResult:
    records: tuple[CounterexampleRecord, ...]
    x_dag: GridFunction
    identities_hold: bool


def halving_ladder(steps: int) -> list[float]:
    """delta_k = 2^-k for k = 1..steps."""
    return [2.0**-k for k in range(1, steps + 1)]


def _exact_sq_diff(a: np.ndarray, b: np.ndarray) -> float:
    # fsum of the rounded squares: equal entries cancel exactly
    return math.fsum(np.concatenate([a * a, -(b * b)]))


def _identity_residual(value: float, expected: float) -> float:
    if expected == 0.0:
        return abs(value)
    return abs(value - expected) / abs(expected)


def counterexample_run(dim: int, support_count: int = 1, eps=0.5, deltas=None, alpha_c: float = 1.0) -> CounterexampleResult:
    """Run the perturbation ladder.

    ``eps`` is a fixed float, the string ``"delta"`` for eps_k = delta_k, or
    a callable ``(k, delta) -> eps_k``. Exact data is
    y = sum_{j <= support_count} (2j-1)^-2 e_{2j-1}, and y_k adds delta_k times
    the normalized indicator of that odd support. Default ladder: 2^-k,
    k = 1..8.
    """
    deltas = halving_ladder(8) if deltas is None else [float(d) for d in deltas]
    steps = len(deltas)
    if steps == 0 or any(not d > 0 for d in deltas):
        raise ValueError("need a nonempty ladder of positive noise levels")
    if dim < 2 * steps + 1:
        raise ValueError(f"dim must be >= 2 * steps + 1 = {2 * steps + 1}, got {dim}")
    if support_count < 1 or 2 * support_count - 1 > dim:
        raise ValueError(f"support_count {support_count} does not fit in dim {dim}")
    eps_of = _eps_schedule(eps)

    op = build_diagonal_operator(dim)
    a = diagonal_entries(dim)
    odd = np.arange(support_count) * 2  # 0-based positions of 1, 3, 5, ...
    y = np.zeros(dim)
    y[odd] = (odd + 1.0) ** -2
    u = np.zeros(dim)
    u[odd] = 1.0 / math.sqrt(support_count)
    x_dag = np.zeros(dim)
    x_dag[odd] = y[odd] / a[odd]
    r_dag_sq = float(x_dag @ x_dag)

    records = []
    for k, delta in enumerate(deltas, start=1):
        alpha = alpha_c * delta
        yk = y + delta * u
        xk = a * yk / (a * a + alpha)
        e = eps_of(k, delta)
        zk = xk.copy()
        zk[2 * k - 1] += e

        # H_k(z) - H_k(x) and R(z) - R(x) without cancellation error
        data_diff = 0.5 * _exact_sq_diff(op.matrix @ zk - yk, op.matrix @ xk - yk)
        r_gap = 0.5 * _exact_sq_diff(zk, xk)
        h_gap = data_diff + alpha * r_gap
        h_exp, r_exp = alpha * e * e / 2, e * e / 2
        records.append(
            CounterexampleRecord(
                k=k,
                delta=delta,
                alpha=alpha,
                eps=e,
                h_gap=h_gap,
                h_gap_expected=h_exp,
                r_gap=r_gap,
                r_gap_expected=r_exp,
                r_excess=0.5 * float(zk @ zk) - 0.5 * r_dag_sq,
                h_identity_residual=_identity_residual(h_gap, h_exp),
                r_identity_residual=_identity_residual(r_gap, r_exp),
            )
        )
    ok = all(
        r.h_identity_residual <= IDENTITY_RTOL and r.r_identity_residual <= IDENTITY_RTOL for r in records
    )
    return CounterexampleResult(tuple(records), GridFunction.sequence(x_dag), ok)


def _eps_schedule(eps):
    if callable(eps):
        return eps
    if eps == "delta":
        return lambda k, delta: delta
    value = float(eps)
    if value < 0:
        raise ValueError("eps must be >= 0")
    return lambda k, delta: value

"""Regularization functionals, gradient selections and Bregman distances.

A gradient selection picks one relative subgradient G(x) at every point.
Selections are addressed by name:

* ``"exact-gradient"``: the derivative R'(x) as a Riesz representer in the
  weighted inner product. Available for every kind.
* ``"convex-part"``: only for :class:`BoundedPerturbation`, G(x) = x. It is a
  relative subgradient with the constant tolerance 2aM.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problem import DimensionError, GridFunction, LinearProblemOperator

EXACT = "exact-gradient"
CONVEX_PART = "convex-part"


class UnknownSelection(KeyError):
    pass


@dataclass(frozen=True)
class ToleranceFn:
    """Nonnegative tolerance phi; only constants are supported."""

    form: str = "zero"
    c: float = 0.0

    def __post_init__(self):
        if self.form not in ("zero", "constant"):
            raise ValueError(f"unknown tolerance form {self.form!r}")
        if self.form == "zero" and self.c != 0.0:
            raise ValueError("zero tolerance carries c = 0")
        if not self.c >= 0:
            raise ValueError("tolerance must be nonnegative")

    @classmethod
    def zero(cls) -> "ToleranceFn":
        return cls("zero", 0.0)

    @classmethod
    def constant(cls, c: float) -> "ToleranceFn":
        return cls("constant", float(c))

    def __call__(self, x: GridFunction) -> float:
        return self.c


class Regularizer:
    """Base class. Subclasses provide ``value``, ``_gradient`` and metadata."""

    kind: str = "abstract"
    selections: tuple[str, ...] = (EXACT,)
    convex: bool = True

    def value(self, x: GridFunction) -> float:
        raise NotImplementedError

    def gradient(self, selection: str, x: GridFunction) -> GridFunction:
        self._check_selection(selection)
        return x.like(self._gradient(selection, x.values, x.weight))

    def gradient_values(self, selection: str, values: np.ndarray, weight: float) -> np.ndarray:
        """Array-level gradient used in solver inner loops."""
        return self._gradient(selection, values, weight)

    def tolerance(self, selection: str, dim: int) -> ToleranceFn:
        self._check_selection(selection)
        return ToleranceFn.zero()

    def curvature(self, selection: str, weight: float = 1.0) -> float:
        """Lipschitz bound of the selection in the weighted norm."""
        raise NotImplementedError

    def is_quadratic(self) -> bool:
        return False

    def _check_selection(self, selection: str):
        if selection not in self.selections:
            raise UnknownSelection(
                f"{self.kind} has no selection {selection!r}; choose from {self.selections}"
            )

    def _gradient(self, selection, values, weight):
        raise NotImplementedError


class Quadratic(Regularizer):
    """R(x) = ||x||^2 / 2."""

    kind = "quad"

    def value(self, x):
        return 0.5 * x.inner(x)

    def _gradient(self, selection, values, weight):
        return values

    def curvature(self, selection, weight=1.0):
        return 1.0

    def is_quadratic(self):
        return True

    def __repr__(self):
        return "Quadratic()"


class GeneralizedQuadratic(Regularizer):
    """R(x) = ||Kx||^2 / 2 for a dense operator K on the same space."""

    kind = "genquad"

    def __init__(self, K: LinearProblemOperator):
        self.K = K
        self._gram = K.adjoint_matrix @ K.matrix

    @property
    def gram(self) -> np.ndarray:
        return self._gram

    def value(self, x):
        kx = self.K.apply(x)
        return 0.5 * kx.inner(kx)

    def _gradient(self, selection, values, weight):
        if values.size != self.K.dim:
            raise DimensionError(f"K has size {self.K.dim}, vector has {values.size}")
        return self._gram @ values

    def curvature(self, selection, weight=1.0):
        return self.K.norm() ** 2

    def is_quadratic(self):
        return True

    def __repr__(self):
        return f"GeneralizedQuadratic(K={self.K.name})"


def perturbation_bound(dim: int) -> float:
    """M = sum_{i=1}^dim 2^-i, the sup of |psi|; always below 1."""
    return 1.0 - 2.0 ** (-dim)


def _coeffs(dim: int) -> np.ndarray:
    return 2.0 ** -np.arange(1, dim + 1, dtype=float)


class BoundedPerturbation(Regularizer):
    """R(x) = ||x||^2 / 2 + a * psi(x), psi(x) = sum_i 2^-i sin(x_i).

    The sum in psi is unweighted in every mode, so |psi| <= M < 1 independently
    of the grid. The function is nonconvex as soon as a / 2 exceeds the
    weight.
    """

    kind = "boundedpert"
    selections = (CONVEX_PART, EXACT)
    convex = False

    def __init__(self, a: float):
        if not a > 0:
            raise ValueError(f"perturbation amplitude must be positive, got {a!r}")
        self.a = float(a)

    def psi(self, x: GridFunction) -> float:
        return float(np.dot(_coeffs(x.dim), np.sin(x.values)))

    def value(self, x):
        return 0.5 * x.inner(x) + self.a * self.psi(x)

    def _gradient(self, selection, values, weight):
        if selection == CONVEX_PART:
            return values
        # Riesz representer of a * dpsi in the weight-scaled inner product
        return values + (self.a / weight) * _coeffs(values.size) * np.cos(values)

    def tolerance(self, selection, dim):
        self._check_selection(selection)
        if selection == CONVEX_PART:
            return ToleranceFn.constant(2.0 * self.a * perturbation_bound(dim))
        # no analytic constant is known for R'; see check_relative_subgradient
        return ToleranceFn.zero()

    def curvature(self, selection, weight=1.0):
        if selection == CONVEX_PART:
            return 1.0
        return 1.0 + self.a / weight

    def __repr__(self):
        return f"BoundedPerturbation(a={self.a:g})"


def make_regularizer(kind: str, *, a: float = 1.0, K: LinearProblemOperator | None = None) -> Regularizer:
    if kind == "quad":
        return Quadratic()
    if kind == "genquad":
        if K is None:
            raise ValueError("genquad needs an operator K")
        return GeneralizedQuadratic(K)
    if kind == "boundedpert":
        return BoundedPerturbation(a)
    raise ValueError(f"unknown regularizer kind {kind!r}")


def reg_value(reg: Regularizer, x: GridFunction) -> float:
    return reg.value(x)


def reg_gradient(reg: Regularizer, selection: str, x: GridFunction) -> GridFunction:
    return reg.gradient(selection, x)


def check_relative_subgradient(reg, selection, phi: ToleranceFn, x0, samples) -> float:
    """Largest violation of R(x0) + <G(x0), x - x0> <= R(x) + phi(x).

    A result <= 0 means the inequality holds on every sample.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("need at least one sample")
    r0 = reg.value(x0)
    g0 = reg.gradient(selection, x0)
    return max(r0 + g0.inner(x - x0) - reg.value(x) - phi(x) for x in samples)


def bregman(reg, selection, x, x0) -> float:
    """D_G(x, x0) = R(x) - R(x0) - <G(x0), x - x0>; may be negative."""
    return reg.value(x) - reg.value(x0) - reg.gradient(selection, x0).inner(x - x0)


def bregman_sym(reg, selection, x, x0) -> float:
    """<G(x) - G(x0), x - x0>."""
    return (reg.gradient(selection, x) - reg.gradient(selection, x0)).inner(x - x0)


def bregman_xi(reg, xi: GridFunction, x, x0) -> float:
    """Bregman distance with a fixed subgradient ``xi`` at ``x0``."""
    return reg.value(x) - reg.value(x0) - xi.inner(x - x0)


def max_defect(reg, selection, x0, samples) -> float:
    """Smallest constant phi that makes ``selection`` valid on the samples."""
    return max(0.0, check_relative_subgradient(reg, selection, ToleranceFn.zero(), x0, samples))


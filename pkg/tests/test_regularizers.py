import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from pytest import approx

from cprates.problem import GridFunction, make_grid
from cprates.regularizers import (
    CONVEX_PART,
    EXACT,
    BoundedPerturbation,
    GeneralizedQuadratic,
    Quadratic,
    ToleranceFn,
    UnknownSelection,
    bregman,
    bregman_sym,
    bregman_xi,
    check_relative_subgradient,
    make_regularizer,
    max_defect,
    perturbation_bound,
)

from conftest import random_operator

arrays = st.lists(st.floats(-50, 50), min_size=2, max_size=12)


def test_quadratic_value_and_gradient():
    R = Quadratic()
    x = GridFunction.sequence([1.0, 2.0, 3.0])
    assert R.value(x) == 7.0
    assert R.gradient(EXACT, x).values == approx(x.values)
    assert R.value(GridFunction.sequence([0.0])) == 0.0


def test_quadratic_weighted():
    g = make_grid(4)
    x = g.constant(2.0)
    # 0.5 * (pi / 8) * 4 * 2^2 = pi
    assert Quadratic().value(x) == approx(math.pi, rel=1e-15)


def test_selection_names():
    with pytest.raises(UnknownSelection):
        Quadratic().gradient(CONVEX_PART, GridFunction.sequence([1.0]))
    with pytest.raises(UnknownSelection):
        BoundedPerturbation(1.0).gradient("newton", GridFunction.sequence([1.0]))


@given(arrays, st.data())
def test_quadratic_bregman_closed_forms(xs, data):
    x0s = data.draw(st.lists(st.floats(-50, 50), min_size=len(xs), max_size=len(xs)))
    x, x0 = GridFunction.sequence(xs), GridFunction.sequence(x0s)
    d = x - x0
    R = Quadratic()
    assert bregman(R, EXACT, x, x0) == approx(0.5 * d.inner(d), rel=1e-9, abs=1e-9)
    assert bregman_sym(R, EXACT, x, x0) == approx(d.inner(d), rel=1e-9, abs=1e-9)


def test_genquad_closed_forms(rng):
    K = random_operator(rng, 8)
    R = GeneralizedQuadratic(K)
    x, x0 = K.wrap(rng.standard_normal(8)), K.wrap(rng.standard_normal(8))
    kd = K.apply(x - x0)
    assert R.value(x) == approx(0.5 * K.apply(x).norm() ** 2, rel=1e-13)
    assert bregman(R, EXACT, x, x0) == approx(0.5 * kd.inner(kd), rel=1e-10)
    assert bregman_sym(R, EXACT, x, x0) == approx(kd.inner(kd), rel=1e-10)
    assert R.gradient(EXACT, x).values == approx(K.matrix.T @ K.matrix @ x.values, rel=1e-12)


def test_genquad_identity_reduces_to_quadratic(rng):
    from cprates.problem import LinearProblemOperator

    R = GeneralizedQuadratic(LinearProblemOperator(np.eye(5)))
    x = GridFunction.sequence(rng.standard_normal(5))
    assert R.value(x) == approx(Quadratic().value(x), rel=1e-15)


@pytest.mark.parametrize("reg", [Quadratic(), BoundedPerturbation(0.5), BoundedPerturbation(3.0)])
@pytest.mark.parametrize("selection", [EXACT, CONVEX_PART])
def test_bregman_decomposition(reg, selection, rng):
    if selection not in reg.selections:
        pytest.skip("selection not available")
    for _ in range(20):
        x = GridFunction.sequence(rng.standard_normal(10) * 3)
        x0 = GridFunction.sequence(rng.standard_normal(10) * 3)
        total = bregman(reg, selection, x, x0) + bregman(reg, selection, x0, x)
        assert bregman_sym(reg, selection, x, x0) == approx(total, rel=1e-12, abs=1e-13)


def test_bregman_xi_matches_selection(rng):
    R = BoundedPerturbation(1.0)
    x, x0 = (GridFunction.sequence(rng.standard_normal(6)) for _ in range(2))
    xi = R.gradient(EXACT, x0)
    assert bregman_xi(R, xi, x, x0) == bregman(R, EXACT, x, x0)


def test_perturbation_bound():
    assert perturbation_bound(1) == 0.5
    assert perturbation_bound(3) == 0.875
    assert perturbation_bound(40) < 1.0


@given(arrays)
def test_psi_bounded(xs):
    x = GridFunction.sequence(xs)
    R = BoundedPerturbation(2.0)
    assert abs(R.psi(x)) <= perturbation_bound(x.dim) + 1e-15


def test_bounded_perturbation_gradient_fd(rng):
    g = make_grid(16)
    R = BoundedPerturbation(0.8)
    x = g.sample(np.sin)
    grad = R.gradient(EXACT, x)
    v = g.sample(np.cos)
    t = 1e-6
    fd = (R.value(x + v * t) - R.value(x - v * t)) / (2 * t)
    assert grad.inner(v) == approx(fd, rel=1e-7)


def test_convex_part_relative_subgradient(rng):
    dim, a = 12, 1.5
    R = BoundedPerturbation(a)
    phi = R.tolerance(CONVEX_PART, dim)
    assert phi.c == approx(2 * a * perturbation_bound(dim))
    x0 = GridFunction.sequence(rng.standard_normal(dim))
    samples = [GridFunction.sequence(rng.standard_normal(dim) * s) for s in np.geomspace(1e-3, 1e2, 1000)]
    assert check_relative_subgradient(R, CONVEX_PART, phi, x0, samples) <= 0.0


def test_convex_part_needs_tolerance():
    R = BoundedPerturbation(1.0)
    x0 = GridFunction.sequence(np.zeros(4))
    # small steps against the gradient of psi break the plain inequality
    coeffs = 2.0 ** -np.arange(1, 5)
    samples = [GridFunction.sequence(-t * coeffs) for t in np.linspace(0.01, 0.5, 50)]
    defect = max_defect(R, CONVEX_PART, x0, samples)
    assert 0.0 < defect <= R.tolerance(CONVEX_PART, 4).c


def test_exact_nonconvex_defect_positive():
    # a / 2 > weight: R is nonconvex and the exact gradient fails without tolerance
    R = BoundedPerturbation(4.0)
    x0 = GridFunction.sequence([math.pi / 2, 0.0])
    xs = [GridFunction.sequence([math.pi / 2 + t, 0.0]) for t in np.linspace(-2, 2, 41)]
    assert max_defect(R, EXACT, x0, xs) > 0.0


def test_quadratic_exact_zero_defect(rng):
    R = Quadratic()
    x0 = GridFunction.sequence(rng.standard_normal(5))
    xs = [GridFunction.sequence(rng.standard_normal(5)) for _ in range(100)]
    assert max_defect(R, EXACT, x0, xs) == 0.0


def test_tolerance_fn():
    assert ToleranceFn.zero()(GridFunction.sequence([1.0])) == 0.0
    assert ToleranceFn.constant(2.5)(None) == 2.5
    with pytest.raises(ValueError):
        ToleranceFn.constant(-1.0)
    with pytest.raises(ValueError):
        ToleranceFn("linear", 1.0)


def test_make_regularizer(rng):
    assert isinstance(make_regularizer("quad"), Quadratic)
    assert make_regularizer("boundedpert", a=2.0).a == 2.0
    with pytest.raises(ValueError):
        make_regularizer("genquad")
    with pytest.raises(ValueError):
        make_regularizer("tv")
    with pytest.raises(ValueError):
        BoundedPerturbation(0.0)


@settings(max_examples=50)
@given(st.floats(0.1, 3.0), st.integers(2, 10))
def test_exact_gradient_lipschitz_bound(a, dim):
    R = BoundedPerturbation(a)
    L = R.curvature(EXACT, 1.0)
    rng = np.random.default_rng(dim)
    for _ in range(10):
        x, y = (GridFunction.sequence(rng.standard_normal(dim) * 2) for _ in range(2))
        lhs = (R.gradient(EXACT, x) - R.gradient(EXACT, y)).norm()
        assert lhs <= L * (x - y).norm() * (1 + 1e-12)

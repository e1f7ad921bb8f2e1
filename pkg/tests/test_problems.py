import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracvar.expression import EvaluationError
from fracvar.fracops import Grid, SampledSignal, caputo_left
from fracvar.problems import (
    BoundaryCondition,
    HolonomicConstraint,
    IsoperimetricConstraint,
    Lagrangian,
    VariationalProblem,
    builtin,
    exact_caputo_power,
    partial,
    second_partial,
)


def test_partial_examples():
    L = Lagrangian.from_expression("x*d^2")
    assert partial(L, 2, (0.0, 5.0, 3.0)) == pytest.approx(9.0, rel=1e-9)
    assert partial(L, 3, (0.0, 5.0, 3.0)) == pytest.approx(30.0, rel=1e-9)


def test_partial_at_stationary_point():
    L = Lagrangian.from_expression("(d - 1.7)^2")
    assert abs(partial(L, 3, (0.2, 0.0, 1.7))) < 1e-8


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(-3, 3), min_size=4, max_size=4),
    st.floats(-4, 4), st.floats(-4, 4), st.floats(-4, 4),
)
def test_partial_cubic_polynomials(c, t, x, d):
    src = f"{c[0]!r}*x^3 + {c[1]!r}*x*d^2 + {c[2]!r}*t*d + {c[3]!r}*d^3"
    L = Lagrangian.from_expression(src)
    dx = 3 * c[0] * x**2 + c[1] * d**2
    dd = 2 * c[1] * x * d + c[2] * t + 3 * c[3] * d**2
    scale = 1 + abs(c[0]) * x**2 + abs(c[1]) * (d**2 + abs(x * d)) + abs(c[2] * t) + abs(c[3]) * d**2
    assert abs(partial(L, 2, (t, x, d)) - dx) <= 1e-7 * scale
    assert abs(partial(L, 3, (t, x, d)) - dd) <= 1e-7 * scale


def test_partial_vectorised():
    L = Lagrangian.from_expression("x*d^2")
    x = np.array([1.0, 2.0])
    d = np.array([3.0, -1.0])
    assert np.allclose(partial(L, 3, (0.0, x, d)), 2 * x * d, rtol=1e-9)


def test_second_partial_quadratic():
    L = Lagrangian.from_expression("(d - t)^2 + 5*x")
    assert second_partial(L, 3, (1.0, 0.5, 10.0)) == pytest.approx(2.0, abs=1e-6)


def test_partial_index_checked():
    L = Lagrangian.from_expression("x")
    with pytest.raises(ValueError):
        partial(L, 4, (0.0, 1.0, 1.0))


def test_partial_propagates_domain_error():
    L = Lagrangian.from_expression("sqrt(x)")
    with pytest.raises(EvaluationError):
        partial(L, 2, (0.0, 0.0, 0.0))


def test_lagrangian_helpers():
    L = Lagrangian.from_expression("x + d")
    M = Lagrangian.from_expression("x*d")
    assert L.scaled(3.0)(0.0, 1.0, 2.0) == 9.0
    assert L.combined(M, -2.0)(0.0, 1.0, 2.0) == 3.0 - 4.0
    assert L.arity == "scalar"
    assert Lagrangian.from_expression("x1*d2", ("x1", "x2", "d1", "d2")).arity == "two-component"
    with pytest.raises(TypeError):
        L(0.0, 1.0)


def test_builtin_examples():
    p1 = builtin("example1")
    assert (p1.a, p1.b, p1.alpha) == (0.0, 10.0, 0.5)
    assert p1.boundary[0] == BoundaryCondition(0.0, 100.0)
    p2 = builtin("example2")
    assert (p2.a, p2.b, p2.alpha) == (0.0, 1.0, 0.5)
    assert p2.boundary[0] == BoundaryCondition(0.0, 1.0)
    with pytest.raises(KeyError, match="nope"):
        builtin("nope")


def test_example1_minimizer_zeroes_integrand():
    p = builtin("example1")
    t = np.linspace(0.1, 10, 50)
    d = exact_caputo_power(t, 2.0, 0.5)
    assert np.max(np.abs(p.lagrangian(t, t**2, d))) < 1e-20


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 10), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_example1_integrand_nonnegative(t, x, d):
    assert builtin("example1").lagrangian(t, x, d) >= 0.0


def test_exact_caputo_power_matches_operator():
    g = Grid(0, 1, 800)
    approx = caputo_left(SampledSignal(g, g.nodes**3), 0.7).values
    exact = exact_caputo_power(g.nodes, 3.0, 0.7)
    assert np.max(np.abs(approx - exact)[1:]) < 5e-3
    assert exact_caputo_power(1.0, 2.0, 0.5) == pytest.approx(2 / math.gamma(2.5))


def test_problem_validation():
    L = Lagrangian.from_expression("d^2")
    bc = (BoundaryCondition(0.0, 1.0),)
    with pytest.raises(ValueError):
        VariationalProblem(1.0, 0.0, (0.5,), L, bc)
    with pytest.raises(ValueError):
        VariationalProblem(0.0, 1.0, (1.5,), L, bc)
    with pytest.raises(ValueError):
        VariationalProblem(0.0, 1.0, (0.5, 0.5), L, bc)
    with pytest.raises(ValueError):
        BoundaryCondition(float("nan"), 1.0)
    M2 = Lagrangian.from_expression("x1", ("x1", "x2", "d1", "d2"))
    with pytest.raises(ValueError, match="same arguments"):
        VariationalProblem(0.0, 1.0, (0.5,), L, bc, IsoperimetricConstraint(M2, 1.0))
    with pytest.raises(ValueError, match="two components"):
        VariationalProblem(0.0, 1.0, (0.5,), L, bc, HolonomicConstraint.from_expression("x1 - x2"))


def test_higher_order_problem_validation():
    L = Lagrangian.from_expression("d2^2", ("x", "d1", "d2"))
    bc = (BoundaryCondition(0.0, 1.0),)
    p = VariationalProblem(0.0, 1.0, (0.5, 1.5), L, bc, higher_order=True)
    assert p.components == 1
    with pytest.raises(ValueError):
        VariationalProblem(0.0, 1.0, (0.5, 0.5), L, bc, higher_order=True)


def test_holonomic_partial():
    g = HolonomicConstraint.from_expression("x1^2 + 3*x2 - t")
    assert g(1.0, 2.0, 1.0) == 6.0
    assert g.partial(2, 1.0, 2.0, 1.0) == pytest.approx(4.0, rel=1e-9)
    assert g.partial(3, 1.0, 2.0, 1.0) == pytest.approx(3.0, rel=1e-9)

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mpcs.base_space import (
    Box,
    ConstantProfile,
    GaussianProfile,
    LogArg,
    Plateau,
    Polynomial,
    ProductProfile,
    QuadratureRule,
    SeparableTerm,
    SmoothFunction,
)
from mpcs.calculus import (
    CylinderFunction,
    base_dirichlet_apply,
    base_tangent_inner,
    commutator_residual,
    dir_derivative,
    dirichlet_integrand,
    dirichlet_operator_apply,
    flow_derivative,
    gradient,
    ibp_integrand,
    lie_bracket,
    lift,
    tangent_inner,
)
from mpcs.configuration import MarkedConfiguration, sample_batch
from mpcs.fixtures import Frame, base_functions, bounded_cylinders, lie_elements, polynomial_cylinders
from mpcs.semigroup import solvable_model

FR = Frame(0.0, 1.0)
ES = lie_elements(FR)
FS = bounded_cylinders(FR) + polynomial_cylinders(FR)

configs = st.lists(st.tuples(st.floats(0.0, 1.0), st.floats(0.05, 4.0)), max_size=6,
                   unique_by=lambda p: round(p[0], 5)).map(
    lambda ps: MarkedConfiguration(np.array([[p[0]] for p in ps]).reshape(-1, 1), [p[1] for p in ps], 1))


@given(configs, st.integers(0, 9), st.integers(0, 4))
def test_gradient_pairs_with_lift_to_directional_derivative(omega, i, j):
    F, e = FS[i], ES[j]
    lhs = tangent_inner(gradient(F, omega), lift(e, omega))
    assert abs(lhs - dir_derivative(e, F, omega)) <= 1e-12 * max(1.0, abs(lhs))


@given(configs, st.integers(0, 9), st.integers(0, 4))
def test_directional_derivative_matches_flow(omega, i, j):
    F, e = FS[i], ES[j]
    fd = flow_derivative(F, e, omega, h=1e-4, h0=1e-5)
    ex = dir_derivative(e, F, omega)
    assert abs(fd - ex) <= 1e-5 * max(1.0, abs(ex))


def test_empty_configuration_derivatives():
    omega = MarkedConfiguration.empty()
    assert dir_derivative(ES[0], FS[0], omega) == 0.0
    assert dirichlet_integrand(FS[0], FS[1], omega) == 0.0


def test_ou_eigenfunction():
    # phi = x on the plateau: the spatial Ornstein-Uhlenbeck part maps it to x
    m = solvable_model(1.0)
    phi = SmoothFunction([SeparableTerm(1.0, (ProductProfile(Polynomial([0.0, 1.0]),
                                                              Plateau(-3.0, -2.0, 2.0, 3.0)),),
                                        ConstantProfile())])
    x = np.linspace(-1.9, 1.9, 13)[:, None]
    s = np.linspace(0.3, 3.0, 13)
    np.testing.assert_allclose(base_dirichlet_apply(m, phi, x, s), x[:, 0], atol=1e-13)


def test_base_operator_is_symmetric_form():
    m = solvable_model(1.0)
    g = lambda cx, cu, a: SmoothFunction([SeparableTerm(a, (GaussianProfile(cx, 0.8),), LogArg(GaussianProfile(cu, 0.7)))])
    phi, xi = g(0.2, 0.1, 1.0), g(-0.3, 0.4, 0.7)
    rule = QuadratureRule.build(Box([-9.0], [9.0]), (math.exp(-9), math.exp(9)), 64, [[-2, 0, 2]],
                                [math.exp(k) for k in (-2, 0, 2)], log_marks=True)
    lhs = m.integrate(lambda x, s: base_dirichlet_apply(m, phi, x, s) * xi(x, s), rule)
    rhs = m.integrate(lambda x, s: base_tangent_inner(phi, xi, x, s), rule)
    assert abs(lhs - rhs) <= 1e-5 * max(1.0, abs(rhs))


def test_dirichlet_operator_on_linear_functional(model, window):
    phi = base_functions(FR)[0]
    F = CylinderFunction.linear(phi, 2.0)
    b = sample_batch(model, window, np.random.default_rng(0), 50)
    expect = 2.0 * b.pair(lambda x, s: base_dirichlet_apply(model, phi, x, s))
    np.testing.assert_allclose(dirichlet_operator_apply(model, F, b), expect, atol=1e-12)


def test_ibp_integrand_has_mean_zero(model, window):
    F, G, e = FS[0], FS[1], ES[0]
    b = sample_batch(model, window, np.random.default_rng(6), 40_000)
    v = ibp_integrand(F, G, e, model, b)
    assert abs(v.mean()) <= 4 * v.std(ddof=1) / math.sqrt(len(v))


def test_bracket_is_antisymmetric():
    x = np.linspace(0, 1, 21)[:, None]
    b12, b21 = lie_bracket(ES[0], ES[1]), lie_bracket(ES[1], ES[0])
    np.testing.assert_allclose(b12.v(x), -b21.v(x), atol=1e-12)
    np.testing.assert_allclose(b12.a(x), -b21.a(x), atol=1e-12)


def test_bracket_matches_nested_derivatives(model, window):
    b = sample_batch(model, window, np.random.default_rng(7), 10)
    lin = CylinderFunction.linear(base_functions(FR)[0])
    e1, e2 = ES[0], ES[1]
    nested = (flow_derivative(lambda w: dir_derivative(e2, lin, w), e1, b)
              - flow_derivative(lambda w: dir_derivative(e1, lin, w), e2, b))
    br = dir_derivative(lie_bracket(e1, e2), lin, b)
    assert np.max(np.abs(nested - br)) <= 1e-4 * max(1.0, np.max(np.abs(br)))


@pytest.mark.parametrize("i,j", [(0, 1), (2, 3)])
def test_commutator_relation(model, window, i, j):
    b = sample_batch(model, window, np.random.default_rng(8), 8)
    err, scale = commutator_residual(ES[i], ES[j], model, FS[i], b)
    assert err / scale <= 1e-4

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import dblquad

from mpcs.base_space import Box, MarkedPoint, Plateau, QuadratureRule, ScalarField
from mpcs.configuration import MarkedConfiguration, sample_batch
from mpcs.fixtures import Frame, base_functions, bounded_cylinders, group_elements
from mpcs.group_action import GroupElement, act_config, act_point, compose, inverse, rn_config, rn_point, unitary_rep

FR = Frame(0.0, 1.0)
GS = dict(group_elements(FR, 1e-3))
pts = st.tuples(st.floats(-0.2, 1.2), st.floats(0.05, 5.0))
names = st.sampled_from(sorted(GS))


def test_rn_worked_example(plain_model):
    # theta = 2 around x = 0.5, exponential(1) marks: R = e^{-1/2} / (e^{-1} 2)
    g = GroupElement.current(ScalarField([(math.log(2.0), (Plateau(0.0, 0.2, 0.8, 1.0),))]))
    val = rn_point(g, plain_model, np.array([[0.5]]), np.array([1.0]))[0]
    assert val == pytest.approx(math.exp(0.5) / 2, abs=1e-14)
    assert val == pytest.approx(0.8243606353500641, abs=1e-14)


def test_rn_is_one_off_support(model):
    g = GS["mixed"]
    x = np.array([[-3.0], [4.0]])
    np.testing.assert_array_equal(rn_point(g, model, x, np.array([1.0, 2.0])), [1.0, 1.0])


@given(names, names, pts)
def test_compose_acts_as_successive_actions(a, b, p):
    g1, g2 = GS[a], GS[b]
    x, s = np.array([[p[0]]]), np.array([p[1]])
    y1, r1 = compose(g1, g2).act(x, s)
    y2, r2 = g1.act(*g2.act(x, s))
    assert abs(y1[0, 0] - y2[0, 0]) <= 1e-9
    assert abs(r1[0] - r2[0]) <= 1e-9 * max(1.0, r2[0])


@given(names, pts)
def test_inverse_round_trip(a, p):
    g = GS[a]
    q = MarkedPoint((p[0],), p[1])
    back = act_point(inverse(g), act_point(g, q))
    assert abs(back.x[0] - q.x[0]) <= 1e-9
    assert abs(back.s - q.s) <= 1e-9 * max(1.0, q.s)


def test_identity_acts_trivially():
    e = GroupElement.identity()
    c = MarkedConfiguration([[0.2], [0.6]], [1.0, 2.0])
    assert act_config(e, c) == c


def test_change_of_variables_current_scipy(plain_model):
    # independent adaptive quadrature for a pure current
    g = GS["current"]
    f = base_functions(FR)[0]

    def q(x, s):
        return plain_model.q(np.array([[x]]), np.array([s]))[0]

    def lhs_f(s, x):
        y, r = g.act(np.array([[x]]), np.array([s]))
        return f(y, r)[0] * q(x, s)

    def rhs_f(s, x):
        X, S = np.array([[x]]), np.array([s])
        return f(X, S)[0] * rn_point(g, plain_model, X, S)[0] * q(x, s)

    lhs = dblquad(lhs_f, 0.1, 0.7, 0.02, 30.0, epsabs=1e-10, epsrel=1e-9)[0]
    rhs = dblquad(rhs_f, 0.1, 0.7, 0.2, 2.5, epsabs=1e-10, epsrel=1e-9)[0]
    assert abs(lhs - rhs) <= 1e-5 * abs(rhs)


@pytest.mark.parametrize("name", ["diffeo", "mixed", "inverse"])
def test_change_of_variables_flows(model, name):
    g = GS[name]
    f = base_functions(FR)[1]
    xb = list(np.linspace(0, 1, 5)[1:-1])
    rule = QuadratureRule.build(Box([0.0], [1.0]), (0.05, 12.0), 48, [xb], [0.3, 1.0, 4.0], log_marks=True)
    lhs = model.integrate(lambda x, s: f(*g.act(x, s)), rule)
    rhs = model.integrate(lambda x, s: f(x, s) * rn_point(g, model, x, s), rule)
    assert abs(lhs - rhs) <= 1e-5 * abs(rhs)


def test_unitary_of_constant_is_isometric(model, window):
    g = GS["mixed"]
    b = sample_batch(model, window, np.random.default_rng(4), 20_000)
    v = unitary_rep(g, model, lambda w: np.ones(w.m), b) ** 2
    assert abs(v.mean() - 1.0) <= 4 * v.std(ddof=1) / math.sqrt(len(v))


def test_unitary_composition_order(model, window):
    F = bounded_cylinders(FR)[0]
    g1, g2 = GS["current"], GS["diffeo"]
    b = sample_batch(model, window, np.random.default_rng(5), 30)
    lhs = unitary_rep(g1, model, lambda w: unitary_rep(g2, model, F, w), b)
    rhs = unitary_rep(g2 * g1, model, F, b)
    assert np.max(np.abs(lhs - rhs)) <= 1e-8


def test_rn_config_is_product(model):
    g = GS["mixed"]
    c = MarkedConfiguration([[0.3], [0.6]], [0.8, 1.7])
    expect = np.prod(rn_point(g, model, c.x, c.s))
    assert rn_config(g, model, c) == pytest.approx(expect, rel=1e-14)
    assert rn_config(g, model, MarkedConfiguration.empty()) == 1.0

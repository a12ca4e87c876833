import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mpcs.base_space import MarkedPoint, QuadratureRule
from mpcs.calculus import CylinderFunction
from mpcs.chaos_fock import (
    TruncatedSeries,
    charlier,
    charlier_all,
    charlier_recursion,
    l2_inner,
    mp_directional,
    mp_gradient,
    poisson_exponential,
    sigma_moments,
)
from mpcs.configuration import MarkedConfiguration, sample_batch
from mpcs.errors import CoincidenceError, TruncationError
from mpcs.fixtures import Frame, base_functions, chaos_functions

FR = Frame(0.0, 1.0)
PHI = base_functions(FR)[1]
RULE = QuadratureRule.for_functions([PHI], 64)

configs = st.lists(st.tuples(st.floats(0.0, 1.0), st.floats(0.05, 5.0)), max_size=7,
                   unique_by=lambda p: round(p[0], 5)).map(
    lambda ps: MarkedConfiguration(np.array([[p[0]] for p in ps]).reshape(-1, 1), [p[1] for p in ps], 1))

coeffs = st.lists(st.floats(-2, 2), min_size=6, max_size=6)


@given(coeffs)
def test_series_exp_log_inverse(c):
    f = TruncatedSeries([0.0] + c[1:])
    np.testing.assert_allclose(f.exp().log().c, f.c, atol=1e-10)


@given(coeffs, st.floats(-0.3, 0.3))
def test_series_exp_matches_scalar(c, t):
    # exp of a polynomial truncated at order 5 agrees with exp to O(t^6)
    f = TruncatedSeries([0.0] + c[1:])
    assert abs(f.exp()(t) - math.exp(f(t))) <= 200 * abs(t) ** 6 * math.exp(abs(f(t))) + 1e-12


def test_series_truncation():
    with pytest.raises(TruncationError):
        TruncatedSeries([1.0, 2.0]).coeff(3)


@given(configs)
def test_low_order_closed_forms(model, omega):
    m1 = sigma_moments(PHI, model, RULE, 1)[1]
    p1 = float(np.sum(PHI(omega.x, omega.s))) if len(omega) else 0.0
    p2 = float(np.sum(PHI(omega.x, omega.s) ** 2)) if len(omega) else 0.0
    assert charlier(0, PHI, model, omega, RULE) == 1.0
    assert charlier(1, PHI, model, omega, RULE) == pytest.approx(p1 - m1, abs=1e-12)
    assert charlier(2, PHI, model, omega, RULE) == pytest.approx((p1 - m1) ** 2 - p2, abs=1e-12)


@given(configs)
def test_recursion_matches_explicit(model, omega):
    Q = charlier_all(PHI, model, omega, RULE).Q
    for n in range(7):
        r = charlier_recursion(n, PHI, model, omega, RULE)
        assert abs(r - Q[n]) <= 1e-10 * max(1.0, abs(Q[n]))


@given(configs, st.floats(0.0, 1.0), st.floats(0.1, 4.0), st.integers(1, 5))
def test_annihilation_pointwise(model, omega, x0, s0, n):
    # Q_n(omega + eps_p) - Q_n(omega) = n phi(p) Q_{n-1}(omega)
    if len(omega) and np.min(np.abs(omega.x[:, 0] - x0)) < 1e-6:
        return
    p = MarkedPoint((x0,), s0)
    lhs = mp_gradient(lambda w: charlier(n, PHI, model, w, RULE), omega, p)
    rhs = n * PHI(np.array([[x0]]), np.array([s0]))[0] * charlier(n - 1, PHI, model, omega, RULE)
    assert abs(lhs - rhs) <= 1e-9 * max(1.0, abs(rhs))


def test_mp_gradient_rejects_coincidence(model):
    omega = MarkedConfiguration([[0.5]], [1.0])
    with pytest.raises(CoincidenceError):
        mp_gradient(lambda w: 0.0, omega, MarkedPoint((0.5,), 2.0))


def test_mp_directional_of_linear_functional(model):
    # grad^MP <psi, .> = psi, so the directional form is (psi, phi)
    psi = base_functions(FR)[0]
    rule = QuadratureRule.for_functions([PHI, psi], 64)
    omega = MarkedConfiguration([[0.3], [0.6]], [1.0, 2.0])
    val = mp_directional(PHI, CylinderFunction.linear(psi), model, omega, rule)
    assert val == pytest.approx(l2_inner(PHI, psi, model, rule), abs=1e-13)


def test_poisson_exponential_has_mean_one(model, window):
    phi, _ = chaos_functions(FR)
    psi = phi * 0.5
    b = sample_batch(model, window, np.random.default_rng(10), 100_000)
    v = poisson_exponential(psi, model, b, QuadratureRule.for_functions([psi], 64))
    assert abs(v.mean() - 1.0) <= 4 * v.std(ddof=1) / math.sqrt(len(v))


def test_charlier_first_two_moments(model, window):
    phi, _ = chaos_functions(FR)
    rule = QuadratureRule.for_functions([phi], 64)
    nrm = l2_inner(phi, phi, model, rule)
    b = sample_batch(model, window, np.random.default_rng(11), 100_000)
    Q = charlier_all(phi, model, b, rule).Q
    for n in (1, 2):
        v = Q[n] ** 2
        target = math.factorial(n) * nrm**n
        assert abs(v.mean() - target) <= 4 * v.std(ddof=1) / math.sqrt(len(v))
    assert abs(Q[1].mean()) <= 4 * Q[1].std(ddof=1) / math.sqrt(len(b.counts))

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from mpcs.base_space import Box, Bump, LieElement, QuadratureRule, ScalarField, separable
from mpcs.errors import ModelError
from mpcs.fixtures import Frame, base_functions, lie_elements, second_functions
from mpcs.levy_model import (
    ExponentialMarks,
    GammaMarks,
    GaussianSpatial,
    LevyModel,
    LognormalMarks,
    UniformSpatial,
    base_ibp_residual,
    beta_point,
)

UNIT = Box([0.0], [1.0])


def _mark_rule(hi=60.0):
    return QuadratureRule.build(UNIT, (0.0, hi), order=64, s_breaks=[1.0, 5.0, 20.0])


def test_uniform_exponential_mass(plain_model):
    assert plain_model.sigma_mass(UNIT) == 1.0
    assert abs(plain_model.integrate(lambda x, s: np.ones_like(s), _mark_rule()) - 1.0) < 1e-12


def test_exponential_mark_mean(plain_model):
    assert abs(plain_model.integrate(lambda x, s: s, _mark_rule()) - 1.0) < 1e-12


def test_tilted_marks_are_normalised(model):
    # the tilt changes the rate pointwise but each p(x, .) stays a probability density
    assert abs(model.integrate(lambda x, s: np.ones_like(s), _mark_rule(80.0)) - 1.0) < 1e-12


def test_lognormal_log_mark_mean():
    m = LevyModel(UniformSpatial(1.0, 1), LognormalMarks(0.0, 1.0))
    rule = QuadratureRule.build(UNIT, (1e-6, 1e6), order=64, log_marks=True,
                                s_breaks=[math.exp(k) for k in range(-8, 9, 2)])
    assert abs(m.integrate(lambda x, s: np.log(s), rule)) < 1e-10
    assert abs(m.integrate(lambda x, s: np.ones_like(s), rule) - 1.0) < 1e-10


def test_gamma_marks_mean():
    m = LevyModel(UniformSpatial(1.0, 1), GammaMarks(3.0, 2.0))
    assert abs(m.integrate(lambda x, s: s, _mark_rule()) - 1.5) < 1e-10


def test_gaussian_mass_on_window():
    sp = GaussianSpatial(0.0, 1.0, 5.0)
    assert abs(sp.mass(Box([-1.0], [2.0])) - 5.0 * (stats.norm.cdf(2) - stats.norm.cdf(-1))) < 1e-14


def test_gaussian_truncated_sampling(rng):
    sp = GaussianSpatial(0.3, 0.5, 1.0)
    w = Box([-0.2], [1.5])
    x = sp.sample(w, rng, 200_000)[:, 0]
    assert np.all((x >= -0.2) & (x <= 1.5))
    sd = math.sqrt(0.5)
    a, b = (-0.2 - 0.3) / sd, (1.5 - 0.3) / sd
    tn = stats.truncnorm(a, b, loc=0.3, scale=sd)
    assert abs(x.mean() - tn.mean()) <= 4 * tn.std() / math.sqrt(len(x))


def test_current_beta_exponential(plain_model):
    e4 = lie_elements(Frame(0.0, 1.0))[3]
    x = np.linspace(0.0, 1.0, 11)[:, None]
    s = np.linspace(0.2, 3.0, 11)
    np.testing.assert_allclose(beta_point(e4, plain_model, x, s), e4.a(x) * (1 - s), atol=1e-14)


def test_current_beta_lognormal():
    m = LevyModel(UniformSpatial(1.0, 1), LognormalMarks(0.0, 1.0))
    e4 = lie_elements(Frame(0.0, 1.0))[3]
    x = np.linspace(0.0, 1.0, 11)[:, None]
    s = np.linspace(0.2, 3.0, 11)
    np.testing.assert_allclose(beta_point(e4, m, x, s), -e4.a(x) * np.log(s), atol=1e-14)


def test_grad_log_q_finite_difference(model):
    x = np.array([[0.3], [0.55], [0.8]])
    s = np.array([0.7, 1.4, 2.1])
    h = 1e-6
    fd = (np.log(model.q(x + h, s)) - np.log(model.q(x - h, s))) / (2 * h)
    np.testing.assert_allclose(model.grad_x_log_q(x, s)[:, 0], fd, rtol=1e-7, atol=1e-8)
    fs = s * (np.log(model.q(x, s + h)) - np.log(model.q(x, s - h))) / (2 * h)
    np.testing.assert_allclose(model.s_ds_log_q(x, s), fs, rtol=1e-7)


@pytest.mark.parametrize("i", range(5))
def test_base_ibp_residual_vanishes(model, i):
    fr = Frame(0.0, 1.0)
    le, p1, p2 = lie_elements(fr)[i], base_functions(fr)[i], second_functions(fr)[(i + 1) % 5]
    rule = QuadratureRule.for_functions([p1, p2], 64, intersect=True)
    assert abs(base_ibp_residual(le, p1, p2, model, rule)) <= 1e-6


def test_base_ibp_negative_control(model):
    fr = Frame(0.0, 1.0)
    le, p1, p2 = lie_elements(fr)[0], base_functions(fr)[0], second_functions(fr)[0]
    rule = QuadratureRule.for_functions([p1, p2], 64, intersect=True)
    tilted = lambda x, s: model.q(x, s) * np.exp(0.5 * np.asarray(x)[:, 0])
    assert abs(base_ibp_residual(le, p1, p2, model, rule, density=tilted)) >= 1e-4


@given(st.floats(0.1, 0.9), st.floats(0.1, 0.5))
def test_base_ibp_random_bumps(c, w):
    m = LevyModel(UniformSpatial(1.0, 1), ExponentialMarks(1.0, 0.5, ScalarField([(1.0, (Bump(0.1, 0.9),))])))
    p1 = separable(1.0, [Bump(max(c - w, 0.0), min(c + w, 1.0))], Bump(0.3, 2.0))
    p2 = separable(-0.5, [Bump(0.0, 1.0)], Bump(0.5, 3.0))
    le = LieElement.from_fields([ScalarField([(0.3, (Bump(0.05, 0.95),))])], ScalarField([(0.7, (Bump(0.2, 0.8),))]))
    rule = QuadratureRule.for_functions([p1, p2], 64, intersect=True)
    assert abs(base_ibp_residual(le, p1, p2, m, rule)) <= 1e-6


def test_model_validation():
    with pytest.raises(ModelError):
        ExponentialMarks(rate=0.0)
    with pytest.raises(ModelError):
        GaussianSpatial(var=-1.0)

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mpcs.base_space import Box, ConstantProfile, HermiteProfile, LogArg, Polynomial, SeparableTerm, SmoothFunction
from mpcs.calculus import base_dirichlet_apply
from mpcs.configuration import ConfigBatch, MarkedConfiguration, MixingLaw
from mpcs.experiments import _ergodic_variance
from mpcs.fixtures import ergodic_function, gaussian_profile_function, semigroup_functions
from mpcs.montecarlo import RngSpec
from mpcs.semigroup import SpectralBaseOperator, ergodicity_probe, hermite_basis, solvable_model, variance_estimate

OP = SpectralBaseOperator(32, 32, total_mass=1.0)
PTS_X = np.linspace(-2.5, 2.5, 17)[:, None]
PTS_S = np.exp(np.linspace(-2.0, 2.0, 17))


def _he(n, m):
    return SmoothFunction([SeparableTerm(1.0, (HermiteProfile(n),), LogArg(HermiteProfile(m)))])


def test_hermite_basis_orthonormal():
    z, w = np.polynomial.hermite_e.hermegauss(40)
    H = hermite_basis(z, 10)
    G = (H * (w / math.sqrt(2 * math.pi))) @ H.T
    np.testing.assert_allclose(G, np.eye(11), atol=1e-12)


def test_linear_function_coefficient():
    phi = SmoothFunction([SeparableTerm(1.0, (Polynomial([0.0, 1.0]),), ConstantProfile())])
    c = OP.spectral_coeffs(phi)
    assert abs(c[1, 0] - 1.0) < 1e-12
    c2 = c.copy()
    c2[1, 0] = 0.0
    assert np.max(np.abs(c2)) < 1e-12


def test_parseval():
    phi = gaussian_profile_function(0.3, -0.2, 0.8)
    c = OP.spectral_coeffs(phi)
    fact = np.array([math.factorial(k) for k in range(c.shape[0])], dtype=float)
    lhs = float(np.sum(c**2 * np.outer(fact, fact)))
    norm2 = OP.integrate(lambda x, s: phi(x, s) ** 2)
    assert abs(lhs - norm2) <= 1e-6


@pytest.mark.parametrize("n,m", [(n, m) for n in range(7) for m in range(7 - n)])
def test_eigenfunctions(n, m):
    f = _he(n, m)
    H = base_dirichlet_apply(solvable_model(1.0), f, PTS_X, PTS_S)
    scale = max(1.0, float(np.max(np.abs(f(PTS_X, PTS_S)))))
    assert np.max(np.abs(H - (n + m) * f(PTS_X, PTS_S))) <= 1e-8 * scale


@given(st.floats(0.0, 2.0), st.floats(0.0, 2.0), st.integers(0, 4))
def test_semigroup_law(t1, t2, k):
    sp = OP.project(semigroup_functions()[k])
    a, b = sp.heat(t1).heat(t2), sp.heat(t1 + t2)
    assert np.max(np.abs(a(PTS_X, PTS_S) - b(PTS_X, PTS_S))) <= 1e-8


@pytest.mark.parametrize("k", range(5))
def test_conservative(k):
    assert abs(OP.conservation_defect(1.0, semigroup_functions()[k])) <= 1e-8


@pytest.mark.parametrize("k", range(5))
def test_spectral_matches_direct_operator(k):
    phi = semigroup_functions()[k]
    sp = OP.project(phi)
    m = OP.model
    assert np.max(np.abs(sp.H(PTS_X, PTS_S) - base_dirichlet_apply(m, phi, PTS_X, PTS_S))) <= 1e-8


def test_generator_residual_on_empty_configuration():
    for phi in semigroup_functions():
        assert OP.generator_residual(phi, MarkedConfiguration.empty()) <= 1e-5


def test_generator_residual_on_configurations():
    c = MarkedConfiguration([[0.2], [-0.7], [1.1]], [0.5, 1.3, 2.2])
    for phi in semigroup_functions():
        assert OP.generator_residual(phi, c) <= 1e-4


def test_negative_time_rejected():
    with pytest.raises(ValueError):
        OP.heat_apply(-1.0, semigroup_functions()[0])


def test_variance_estimate():
    v = np.random.default_rng(0).normal(0.0, 2.0, 200_000)
    var, se = variance_estimate(v)
    assert abs(var - 4.0) <= 4 * se


# closed forms for the ergodicity fixture: phi = d (c + x e^{-x^2/4}), M = 60
M, D, C = 60.0, 0.05, 0.02
I1 = M * D * C
# E[x^2 e^{-x^2/2}] = 2^{-3/2}, E[x^2 e^{-x^2/4}] = (3/2)^{-3/2} under N(0, 1)
I2_0 = M * D**2 * (C**2 + 2.0**-1.5)
I2_5 = M * D**2 * (C**2 + (1.5**-1.5) ** 2 * math.exp(-10.0))


def _var(i2, zs=(1.0,), ws=(1.0,)):
    m1 = sum(w * math.exp(z * I1) for z, w in zip(zs, ws))
    m2 = sum(w * math.exp(z * (2 * I1 + i2)) for z, w in zip(zs, ws))
    return m2 - m1 * m1


ERG_OP = SpectralBaseOperator(40, 2, total_mass=M)
ERG_SP = ERG_OP.project(ergodic_function(D, C))


def test_ergodic_closed_form_pure():
    assert _ergodic_variance(ERG_OP, ERG_SP, 0.0, (1.0,), (1.0,)) == pytest.approx(_var(I2_0), rel=1e-9)
    assert _ergodic_variance(ERG_OP, ERG_SP, 5.0, (1.0,), (1.0,)) == pytest.approx(_var(I2_5), rel=1e-6)
    assert _var(I2_0) == pytest.approx(0.06147, rel=1e-3)


def test_ergodic_closed_form_mixture():
    zs, ws = (1.0, 2.0), (0.5, 0.5)
    assert _ergodic_variance(ERG_OP, ERG_SP, 5.0, zs, ws) == pytest.approx(_var(I2_5, zs, ws), rel=1e-6)
    # the mixture keeps a variance floor from the random intensity
    assert _var(I2_5, zs, ws) >= 10 * _var(I2_5)


def test_ergodicity_probe_small():
    est = ergodicity_probe(ERG_OP, ERG_SP, [0.0, 5.0], 20_000, RngSpec(3), None, Box([-10.0], [10.0]))
    for t, i2, e in zip((0.0, 5.0), (I2_0, I2_5), est):
        assert abs(e.mean - _var(i2)) <= 4 * e.stderr
    mix = MixingLaw((1.0, 2.0), (0.5, 0.5))
    est = ergodicity_probe(ERG_OP, ERG_SP, [5.0], 20_000, RngSpec(4), mix, Box([-10.0], [10.0]))
    assert abs(est[0].mean - _var(I2_5, mix.z, mix.w)) <= 4 * est[0].stderr


def test_lifted_semigroup_at_zero_is_exponential():
    phi = semigroup_functions()[0]
    c = MarkedConfiguration([[0.1], [0.9]], [0.7, 1.4])
    expect = math.exp(float(np.sum(np.log1p(phi(c.x, c.s)))))
    assert OP.lifted_semigroup(0.0, phi, c) == pytest.approx(expect, rel=1e-12)
    b = ConfigBatch(np.zeros((0, 1)), np.zeros(0), np.zeros(0, np.int64), 3)
    np.testing.assert_allclose(OP.lifted_semigroup(0.7, phi, b), 1.0, atol=1e-12)

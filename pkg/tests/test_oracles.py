"""Package quadrature against values frozen from scripts/compute_oracles.py.

The frozen numbers come from adaptive scipy quadrature (dblquad, abs. error
below 1e-11) on the default model; they do not use the package's rules.
"""

import math

import numpy as np
import pytest

from mpcs.base_space import QuadratureRule
from mpcs.chaos_fock import l2_inner
from mpcs.fixtures import Frame, base_functions, chaos_functions, nonpositive_function

FR = Frame(0.0, 1.0)

LAPLACE_EXPONENT = -0.0648314855619791
CHAOS_PHI_SQ = 1.112555301213866
CHAOS_PHI_PSI = -0.6464666675099935
P1_SQ = 0.022770107248822533


def test_laplace_exponent(model):
    phi = nonpositive_function(FR)
    rule = QuadratureRule.for_functions([phi], 64)
    val = model.integrate(lambda x, s: np.expm1(phi(x, s)), rule)
    assert val == pytest.approx(LAPLACE_EXPONENT, abs=1e-10)
    assert math.exp(val) == pytest.approx(0.93722539, abs=1e-8)


def test_chaos_norms(model):
    phi, psi = chaos_functions(FR)
    assert l2_inner(phi, phi, model, QuadratureRule.for_functions([phi], 64)) == pytest.approx(CHAOS_PHI_SQ, abs=1e-10)
    rule = QuadratureRule.for_functions([phi, psi], 64, intersect=True)
    assert l2_inner(phi, psi, model, rule) == pytest.approx(CHAOS_PHI_PSI, abs=1e-10)


def test_bump_norm(model):
    p1 = base_functions(FR)[0]
    assert l2_inner(p1, p1, model) == pytest.approx(P1_SQ, abs=1e-10)

"""Versioned canonical fixtures for the experiment suite.

All fixtures are one-dimensional and written on the unit interval; ``Frame``
maps them affinely onto the configured window so every support stays inside
it.  Changing anything here changes reports, so bump ``FIXTURE_VERSION``.
"""

from __future__ import annotations

from dataclasses import dataclass

from .base_space import (
    Bump,
    ConstantProfile,
    GaussianProfile,
    LieElement,
    LogArg,
    Plateau,
    Polynomial,
    ProductProfile,
    ScalarField,
    SeparableTerm,
    SmoothFunction,
    TestFunction,
    separable,
)
from .calculus import (
    CylinderFunction,
    ExpLinear,
    GaussianBump,
    Linear,
    Quadratic,
    SinProduct,
)
from .group_action import GroupElement

FIXTURE_VERSION = "1"


@dataclass(frozen=True)
class Frame:
    """u -> lo + u (hi - lo) on the first window axis."""

    lo: float
    hi: float

    @property
    def L(self) -> float:
        return self.hi - self.lo

    def __call__(self, u: float) -> float:
        return self.lo + u * self.L

    def bump(self, a, b, amp=1.0) -> Bump:
        return Bump(self(a), self(b), amp)

    def plateau(self, a, b, c, d, amp=1.0) -> Plateau:
        return Plateau(self(a), self(b), self(c), self(d), amp)


# ---------------------------------------------------------------------------
# test functions on X x R+


def base_functions(fr: Frame) -> list[TestFunction]:
    p1 = separable(0.8, [fr.bump(0.1, 0.7)], Bump(0.2, 2.5))
    p2 = separable(0.6, [fr.plateau(0.2, 0.35, 0.6, 0.9)], Bump(0.3, 4.0))
    p3 = separable(-0.5, [fr.bump(0.05, 0.95)], Bump(0.1, 1.5))
    p4 = p1 + separable(0.4, [fr.bump(0.3, 0.9)], Bump(1.0, 3.0))
    p5 = separable(0.7, [fr.bump(0.4, 0.8)], Bump(0.5, 2.0))
    return [p1, p2, p3, p4, p5]


def chaos_functions(fr: Frame) -> tuple[TestFunction, TestFunction]:
    """Two overlapping functions whose supports carry most of the window's mass."""
    phi = separable(1.2, [fr.plateau(0.0, 0.1, 0.8, 1.0)], Plateau(0.01, 0.05, 2.5, 6.0))
    psi = separable(-0.9, [fr.plateau(0.05, 0.3, 0.9, 1.0)], Plateau(0.02, 0.2, 1.5, 4.0))
    return phi, psi


def nonpositive_function(fr: Frame) -> TestFunction:
    return separable(-0.9, [fr.bump(0.1, 0.9)], Bump(0.15, 3.0))


def second_functions(fr: Frame) -> list[TestFunction]:
    """Extra test functions with different shapes, used as partners."""
    return [
        separable(0.5, [fr.bump(0.0, 0.6)], Bump(0.4, 2.0)),
        separable(-0.4, [fr.bump(0.25, 1.0)], Bump(0.2, 3.5)),
        separable(0.9, [fr.plateau(0.1, 0.3, 0.5, 0.7)], Bump(0.6, 1.8)),
        separable(0.3, [fr.bump(0.5, 0.95)], Bump(0.1, 5.0)),
        separable(-0.6, [fr.bump(0.15, 0.55)], Bump(0.8, 2.2)),
    ]


# ---------------------------------------------------------------------------
# Lie algebra elements


def _field(*terms) -> ScalarField:
    return ScalarField([(amp, (prof,)) for amp, prof in terms])


def lie_elements(fr: Frame) -> list[LieElement]:
    L = fr.L
    e1 = LieElement.from_fields([_field((0.5 * L, fr.bump(0.05, 0.95)))], _field((0.4, fr.bump(0.2, 0.8))), name="e1")
    e2 = LieElement.from_fields([_field((-0.3 * L, fr.bump(0.2, 0.9)))], _field((-0.6, fr.bump(0.1, 0.6))), name="e2")
    e3 = LieElement.from_fields([_field((0.4 * L, fr.bump(0.1, 0.7)))], None, name="e3")
    e4 = LieElement.from_fields(None, _field((0.8, fr.bump(0.3, 0.95))), dim=1, name="e4")
    e5 = LieElement.from_fields([_field((0.25 * L, fr.plateau(0.1, 0.3, 0.6, 0.85)))],
                                _field((0.3, fr.plateau(0.05, 0.2, 0.5, 0.9))), name="e5")
    return [e1, e2, e3, e4, e5]


# ---------------------------------------------------------------------------
# cylinder functions


def bounded_cylinders(fr: Frame) -> list[CylinderFunction]:
    p = base_functions(fr)
    q = second_functions(fr)
    return [
        CylinderFunction([p[0]], SinProduct((1.3,), 0.4)),
        CylinderFunction([p[1], q[0]], GaussianBump((0.2, -0.1), 0.8)),
        CylinderFunction([p[2]], SinProduct((2.0,), -0.7, 0.6)),
        CylinderFunction([p[3], q[2]], SinProduct((0.9, -1.1), 0.3)),
        CylinderFunction([p[4]], GaussianBump((0.5,), 0.6)),
    ]


def polynomial_cylinders(fr: Frame) -> list[CylinderFunction]:
    p = base_functions(fr)
    q = second_functions(fr)
    return [
        CylinderFunction([p[0]], Linear((1.0,), 0.3)),
        CylinderFunction([p[1], q[1]], Quadratic(((1.0, 0.5), (0.5, -0.4)), (0.2, 1.0), 0.1)),
        CylinderFunction([p[4]], ExpLinear((0.7,))),
        CylinderFunction([p[2], q[3]], Quadratic(((0.6, 0.0), (0.0, 0.8)), (-0.3, 0.5))),
        CylinderFunction([q[4]], ExpLinear((-0.9,))),
    ]


# ---------------------------------------------------------------------------
# group elements (flow times kept at 1/2 to bound the cost of the flows)


def group_elements(fr: Frame, h0: float) -> list[tuple[str, GroupElement]]:
    e1, e2, e3, e4, e5 = lie_elements(fr)
    a4 = _field((0.8, fr.bump(0.3, 0.95)))
    a1 = _field((0.4, fr.bump(0.2, 0.8)))
    a2 = _field((-0.6, fr.bump(0.1, 0.6)))
    g_cur = GroupElement.make(None, a4, dim=1, h0=h0)
    g_diff = GroupElement.make(e3, None, 0.5, h0=h0)
    g_mix = GroupElement.make(e1.vector_part(), a1, 0.5, h0=h0)
    g_comp = GroupElement.make(e2.vector_part(), a2, 0.5, h0=h0) * g_cur
    g_inv = GroupElement.make(e5.vector_part(), _field((0.3, fr.plateau(0.05, 0.2, 0.5, 0.9))), 0.5, h0=h0).inverse()
    return [("current", g_cur), ("diffeo", g_diff), ("mixed", g_mix), ("composite", g_comp), ("inverse", g_inv)]


# ---------------------------------------------------------------------------
# solvable-model fixtures


def gaussian_profile_function(cx: float, cu: float, amp: float, w: float = 2.0) -> SmoothFunction:
    """amp * exp(-(x - cx)^2 / (2 w^2)) * exp(-(log s - cu)^2 / (2 w^2))."""
    return SmoothFunction([SeparableTerm(amp, (GaussianProfile(cx, w),), LogArg(GaussianProfile(cu, w)))])


def semigroup_functions() -> list[SmoothFunction]:
    return [
        gaussian_profile_function(0.0, 0.0, 0.3),
        gaussian_profile_function(0.5, -0.3, 0.25),
        gaussian_profile_function(-0.4, 0.6, 0.2),
        gaussian_profile_function(0.2, 0.2, -0.3),
        gaussian_profile_function(0.0, 0.0, 0.2) + gaussian_profile_function(0.8, -0.5, 0.1),
    ]


def ergodic_function(delta: float, offset: float) -> SmoothFunction:
    """s-independent delta (offset + x exp(-x^2 / 4))."""
    return SmoothFunction([
        SeparableTerm(delta * offset, (ConstantProfile(),), ConstantProfile()),
        SeparableTerm(delta, (ProductProfile(Polynomial([0.0, 1.0]), GaussianProfile(0.0, 2.0**0.5)),),
                      ConstantProfile()),
    ])

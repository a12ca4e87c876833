"""The group of compactly supported flows and currents acting on marked points."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .base_space import (
    DEFAULT_STEP,
    Box,
    LieElement,
    MarkedPoint,
    ScalarField,
    as_points,
    flow,
    flow_with_logdet,
    union_boxes,
)
from .configuration import CompoundMeasure, MarkedConfiguration, as_batch, from_compound, unbatch
from .errors import DomainError
from .levy_model import LevyModel


def _zero_log_theta(x):
    return np.zeros(len(x))


@dataclass(frozen=True)
class GroupElement:
    """g = (psi, theta) acting by (x, s) -> (psi(x), theta(psi(x)) s).

    ``word`` lists time-t flows (v, t); psi applies them right to left, so
    psi = F_1 o F_2 o ... o F_k.  ``log_theta`` maps (n, d) positions to log theta.
    """

    dim: int
    word: tuple = ()
    log_theta: Callable = _zero_log_theta
    support: Box | None = None
    h0: float = DEFAULT_STEP

    @classmethod
    def identity(cls, dim: int = 1) -> "GroupElement":
        return cls(dim)

    @classmethod
    def make(cls, v: LieElement | None = None, a: ScalarField | None = None, t: float = 1.0,
             dim: int | None = None, h0: float = DEFAULT_STEP) -> "GroupElement":
        """psi = time-t flow of v, theta = exp(a)."""
        dim = dim or (v.dim if v is not None else a.dim)
        word = ((v, float(t)),) if v is not None and not v.is_zero and t != 0 else ()
        has_a = a is not None and bool(a.terms)
        lt = (lambda x: a(as_points(x, dim))) if has_a else _zero_log_theta
        boxes = [v.support for v, _ in word] + ([a.support] if has_a else [])
        return cls(dim, word, lt, union_boxes(boxes), h0)

    @classmethod
    def current(cls, a: ScalarField) -> "GroupElement":
        return cls.make(None, a, dim=a.dim)

    @classmethod
    def diffeo(cls, v: LieElement, t: float = 1.0) -> "GroupElement":
        return cls.make(v, None, t)

    # maps ------------------------------------------------------------------
    def psi(self, x) -> np.ndarray:
        x = as_points(x, self.dim)
        for v, t in reversed(self.word):
            x = flow(v, t, x, self.h0)
        return x

    def psi_inv(self, x) -> np.ndarray:
        x = as_points(x, self.dim)
        for v, t in self.word:
            x = flow(v, -t, x, self.h0)
        return x

    def psi_inv_with_det(self, x) -> tuple[np.ndarray, np.ndarray]:
        """psi^{-1}(x) and det D(psi^{-1})(x), integrating the trace of the variational equation."""
        x = as_points(x, self.dim)
        logdet = np.zeros(len(x))
        for v, t in self.word:
            x, ld = flow_with_logdet(v, -t, x, self.h0)
            logdet = logdet + ld
        return x, np.exp(logdet)

    def theta(self, x) -> np.ndarray:
        return np.exp(self.log_theta(as_points(x, self.dim)))

    # group law -------------------------------------------------------------
    def compose(self, other: "GroupElement") -> "GroupElement":
        """self * other = (psi1 o psi2, theta1 * (theta2 o psi1^{-1}))."""
        lt1, lt2, inv1 = self.log_theta, other.log_theta, self.psi_inv
        if lt2 is _zero_log_theta:
            lt = lt1
        else:
            lt = lambda x: lt1(x) + lt2(inv1(x))
        return GroupElement(self.dim, self.word + other.word, lt,
                            union_boxes([self.support, other.support]), self.h0)

    __mul__ = compose

    def inverse(self) -> "GroupElement":
        """(psi^{-1}, theta^{-1} o psi)."""
        lt, fwd = self.log_theta, self.psi
        word = tuple((v, -t) for v, t in reversed(self.word))
        inv_lt = _zero_log_theta if lt is _zero_log_theta else (lambda x: -lt(fwd(x)))
        return GroupElement(self.dim, word, inv_lt, self.support, self.h0)

    def in_support(self, x) -> np.ndarray:
        x = as_points(x, self.dim)
        if self.support is None:
            return np.zeros(len(x), dtype=bool)
        return self.support.contains(x)

    # action ----------------------------------------------------------------
    def act(self, x, s) -> tuple[np.ndarray, np.ndarray]:
        x = as_points(x, self.dim)
        s = np.asarray(s, dtype=float).reshape(-1)
        inside = self.in_support(x)
        y, r = x.copy(), s.copy()
        if np.any(inside):
            yi = self.psi(x[inside])
            y[inside] = yi
            r[inside] = s[inside] * self.theta(yi)
        return y, r


def compose(g1: GroupElement, g2: GroupElement) -> GroupElement:
    return g1.compose(g2)


def inverse(g: GroupElement) -> GroupElement:
    return g.inverse()


def act_point(g: GroupElement, p: MarkedPoint) -> MarkedPoint:
    y, r = g.act(np.asarray([p.x]), np.asarray([p.s]))
    return MarkedPoint(tuple(y[0]), float(r[0]))


def act_config(g: GroupElement, omega):
    """Pointwise image; a lone configuration is re-sorted and checked for coincidences."""
    batch, single = as_batch(omega)
    if len(batch.s) == 0:
        return omega
    y, r = g.act(batch.x, batch.s)
    if single:
        return MarkedConfiguration(y, r, batch.dim)
    return batch.with_points(y, r)


def rn_point(g: GroupElement, model: LevyModel, x, s) -> np.ndarray:
    """d(g_* sigma~)/d sigma~ at (x, s); equal to 1 off the support of g."""
    x = as_points(x, g.dim)
    s = np.asarray(s, dtype=float).reshape(-1)
    out = np.ones(len(s))
    inside = g.in_support(x)
    if not np.any(inside):
        return out
    xi, si = x[inside], s[inside]
    pre, det = g.psi_inv_with_det(xi)
    th = g.theta(xi)
    num = model.q(pre, si / th)
    den = model.q(xi, si)
    degenerate = (num <= 0) & (den <= 0)
    if np.any((den <= 0) & ~degenerate) or np.any((num <= 0) & ~degenerate):
        raise DomainError("density vanishes at a transformed point")
    with np.errstate(divide="ignore", invalid="ignore"):
        val = num * det / (den * th)
    out[inside] = np.where(degenerate, 1.0, val)
    return out


def rn_config(g: GroupElement, model: LevyModel, omega):
    """prod over points of rn_point; a ConfigBatch gives one value per configuration."""
    batch, single = as_batch(omega)
    if len(batch.s) == 0:
        return unbatch(np.ones(batch.m), single)
    logs = np.log(rn_point(g, model, batch.x, batch.s))
    return unbatch(np.exp(batch.reduce(logs)), single)


def unitary_rep(g: GroupElement, model: LevyModel, F, omega):
    """(V(g)F)(omega) = F(g omega) sqrt(d(g^{-1})_* pi / d pi (omega))."""
    moved = act_config(g, omega)
    return F(moved) * np.sqrt(rn_config(g.inverse(), model, omega))


def compound_density(g: GroupElement, model: LevyModel, u: CompoundMeasure) -> float:
    return rn_config(g, model, from_compound(u))


__all__ = [
    "GroupElement",
    "compose",
    "inverse",
    "act_point",
    "act_config",
    "rn_point",
    "rn_config",
    "unitary_rep",
    "compound_density",
]

"""Differential calculus on configuration space.

Every operator accepts a single ``MarkedConfiguration`` (returning a float) or
a ``ConfigBatch`` (returning one value per configuration).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .base_space import (
    DEFAULT_STEP,
    LieElement,
    SmoothFunction,
    as_points,
    directional_derivative_base,
    flow,
)
from .configuration import ConfigBatch, MarkedConfiguration, as_batch, unbatch
from .errors import EvaluationError, TangentError
from .levy_model import LevyModel, beta_point

# ---------------------------------------------------------------------------
# outer functions g: R^N -> R, vectorised over rows


class Outer:
    """Smooth outer function with gradient and Hessian, acting on rows of r (m, N)."""

    bounded: bool = True

    def value(self, r: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad(self, r: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hess(self, r: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(Outer):
    c: float = 1.0

    def value(self, r):
        return np.full(len(r), self.c)

    def grad(self, r):
        return np.zeros(r.shape)

    def hess(self, r):
        return np.zeros(r.shape + (r.shape[1],))


@dataclass(frozen=True)
class Linear(Outer):
    """c0 + <c, r>."""

    c: tuple
    c0: float = 0.0
    bounded = False

    def value(self, r):
        return self.c0 + r @ np.asarray(self.c, dtype=float)

    def grad(self, r):
        return np.broadcast_to(np.asarray(self.c, dtype=float), r.shape).copy()

    def hess(self, r):
        return np.zeros(r.shape + (r.shape[1],))


@dataclass(frozen=True)
class Quadratic(Outer):
    """c0 + <b, r> + r^T A r / 2 with A symmetric."""

    A: tuple
    b: tuple
    c0: float = 0.0
    bounded = False

    def _A(self):
        A = np.asarray(self.A, dtype=float)
        return 0.5 * (A + A.T)

    def value(self, r):
        A = self._A()
        return self.c0 + r @ np.asarray(self.b, dtype=float) + 0.5 * np.einsum("mi,ij,mj->m", r, A, r)

    def grad(self, r):
        return np.asarray(self.b, dtype=float) + r @ self._A()

    def hess(self, r):
        return np.broadcast_to(self._A(), r.shape + (r.shape[1],)).copy()


@dataclass(frozen=True)
class ExpLinear(Outer):
    """exp(<c, r>): the exponential functionals exp<phi, omega>."""

    c: tuple
    bounded = False

    def value(self, r):
        return np.exp(r @ np.asarray(self.c, dtype=float))

    def grad(self, r):
        c = np.asarray(self.c, dtype=float)
        return self.value(r)[:, None] * c

    def hess(self, r):
        c = np.asarray(self.c, dtype=float)
        return self.value(r)[:, None, None] * np.outer(c, c)


@dataclass(frozen=True)
class SinProduct(Outer):
    """amp * sin(<c, r> + shift): bounded with bounded derivatives."""

    c: tuple
    shift: float = 0.0
    amp: float = 1.0

    def value(self, r):
        return self.amp * np.sin(r @ np.asarray(self.c, dtype=float) + self.shift)

    def grad(self, r):
        c = np.asarray(self.c, dtype=float)
        return self.amp * np.cos(r @ c + self.shift)[:, None] * c

    def hess(self, r):
        c = np.asarray(self.c, dtype=float)
        return -self.amp * np.sin(r @ c + self.shift)[:, None, None] * np.outer(c, c)


@dataclass(frozen=True)
class GaussianBump(Outer):
    """exp(-|r - center|^2 / (2 w^2))."""

    center: tuple
    width: float = 1.0

    def _z(self, r):
        return (r - np.asarray(self.center, dtype=float)) / self.width

    def value(self, r):
        z = self._z(r)
        return np.exp(-0.5 * np.sum(z * z, axis=1))

    def grad(self, r):
        z = self._z(r)
        return -(self.value(r)[:, None] * z) / self.width

    def hess(self, r):
        z = self._z(r)
        n = r.shape[1]
        v = self.value(r)[:, None, None]
        return v * (np.einsum("mi,mj->mij", z, z) - np.eye(n)) / self.width**2


@dataclass(frozen=True)
class ProductOuter(Outer):
    """g(r[:k]) * h(r[k:]); represents the product of two cylinder functions."""

    f: Outer
    g: Outer
    k: int

    @property
    def bounded(self):
        return self.f.bounded and self.g.bounded

    def value(self, r):
        return self.f.value(r[:, : self.k]) * self.g.value(r[:, self.k:])

    def grad(self, r):
        a, b = r[:, : self.k], r[:, self.k:]
        fa, gb = self.f.value(a), self.g.value(b)
        return np.concatenate([self.f.grad(a) * gb[:, None], fa[:, None] * self.g.grad(b)], axis=1)

    def hess(self, r):
        a, b = r[:, : self.k], r[:, self.k:]
        fa, gb = self.f.value(a), self.g.value(b)
        dfa, dgb = self.f.grad(a), self.g.grad(b)
        m, n = r.shape
        out = np.zeros((m, n, n))
        out[:, : self.k, : self.k] = self.f.hess(a) * gb[:, None, None]
        out[:, self.k:, self.k:] = fa[:, None, None] * self.g.hess(b)
        cross = np.einsum("mi,mj->mij", dfa, dgb)
        out[:, : self.k, self.k:] = cross
        out[:, self.k:, : self.k] = np.transpose(cross, (0, 2, 1))
        return out


@dataclass(frozen=True)
class SumOuter(Outer):
    """f(r[:k]) + g(r[k:])."""

    f: Outer
    g: Outer
    k: int

    @property
    def bounded(self):
        return self.f.bounded and self.g.bounded

    def value(self, r):
        return self.f.value(r[:, : self.k]) + self.g.value(r[:, self.k:])

    def grad(self, r):
        return np.concatenate([self.f.grad(r[:, : self.k]), self.g.grad(r[:, self.k:])], axis=1)

    def hess(self, r):
        m, n = r.shape
        out = np.zeros((m, n, n))
        out[:, : self.k, : self.k] = self.f.hess(r[:, : self.k])
        out[:, self.k:, self.k:] = self.g.hess(r[:, self.k:])
        return out


# ---------------------------------------------------------------------------
# cylinder functions


class CylinderFunction:
    """F(omega) = g(<phi_1, omega>, ..., <phi_N, omega>)."""

    def __init__(self, phis: Sequence[SmoothFunction], outer: Outer):
        self.phis = tuple(phis)
        if not self.phis:
            raise ValueError("a cylinder function needs at least one test function")
        self.outer = outer
        self.dim = self.phis[0].dim

    @property
    def bounded(self) -> bool:
        return self.outer.bounded

    @property
    def N(self) -> int:
        return len(self.phis)

    @classmethod
    def linear(cls, phi: SmoothFunction, c: float = 1.0) -> "CylinderFunction":
        return cls([phi], Linear((c,)))

    @classmethod
    def exponential(cls, phi: SmoothFunction) -> "CylinderFunction":
        return cls([phi], ExpLinear((1.0,)))

    @classmethod
    def constant(cls, phi: SmoothFunction, c: float = 1.0) -> "CylinderFunction":
        return cls([phi], Constant(c))

    def __mul__(self, other: "CylinderFunction") -> "CylinderFunction":
        return CylinderFunction(self.phis + other.phis, ProductOuter(self.outer, other.outer, self.N))

    def __add__(self, other: "CylinderFunction") -> "CylinderFunction":
        return CylinderFunction(self.phis + other.phis, SumOuter(self.outer, other.outer, self.N))

    def pairings(self, batch: ConfigBatch) -> np.ndarray:
        """(m, N) matrix of <phi_j, omega>."""
        return np.stack([batch.pair(p.value) for p in self.phis], axis=1)

    def __call__(self, omega):
        return eval_cyl(self, omega)


def _finite(vals, what: str, single: bool):
    if single and not np.all(np.isfinite(vals)):
        raise EvaluationError(f"non-finite {what}")
    return vals


def eval_cyl(F: CylinderFunction, omega):
    batch, single = as_batch(omega)
    return unbatch(_finite(F.outer.value(F.pairings(batch)), "value", single), single)


def _dir_batch(le: LieElement, F: CylinderFunction, batch: ConfigBatch) -> np.ndarray:
    if le.is_zero or isinstance(F.outer, Constant):
        return np.zeros(batch.m)
    dg = F.outer.grad(F.pairings(batch))
    out = np.zeros(batch.m)
    for j, phi in enumerate(F.phis):
        out += dg[:, j] * batch.pair(lambda x, s, phi=phi: directional_derivative_base(le, phi, x, s))
    return out


def dir_derivative(le: LieElement, F: CylinderFunction, omega):
    """Directional derivative of F along (v, a)."""
    batch, single = as_batch(omega)
    return unbatch(_dir_batch(le, F, batch), single)


# ---------------------------------------------------------------------------
# tangent vectors


@dataclass(frozen=True)
class TangentVector:
    """Per-point spatial parts u (n, d) and mark parts r (n,) over the points of omega."""

    x: np.ndarray
    s: np.ndarray
    u: np.ndarray
    r: np.ndarray

    def __len__(self):
        return len(self.r)


def gradient(F: CylinderFunction, omega) -> TangentVector:
    """Per-point (spatial, mark) parts of the intrinsic gradient at a configuration."""
    x, s = omega.x, omega.s
    if len(s) == 0:
        return TangentVector(x, s, np.zeros((0, F.dim)), np.zeros(0))
    dg = F.outer.grad(F.pairings(omega.to_batch()))[0]
    u = np.zeros((len(s), F.dim))
    r = np.zeros(len(s))
    for j, phi in enumerate(F.phis):
        u += dg[j] * phi.grad_x(x, s)
        r += dg[j] * s * phi.ds(x, s)
    return TangentVector(x, s, u, r)


def lift(le: LieElement, omega: MarkedConfiguration) -> TangentVector:
    """The tangent vector (v(x), a(x)) at every point of omega."""
    x = omega.x
    return TangentVector(x, omega.s, le.v(x) if len(x) else np.zeros((0, omega.dim)),
                         le.a(x) if len(x) else np.zeros(0))


def tangent_inner(V1: TangentVector, V2: TangentVector) -> float:
    if V1.x.shape != V2.x.shape or not (np.array_equal(V1.x, V2.x) and np.array_equal(V1.s, V2.s)):
        raise TangentError("tangent vectors live over different configurations")
    return float(np.sum(V1.u * V2.u) + np.sum(V1.r * V2.r))


def _point_grads(F: CylinderFunction, batch: ConfigBatch):
    """Per-point gradient parts (u, r) for each configuration of the batch."""
    dg = F.outer.grad(F.pairings(batch))[batch.owner]
    u = np.zeros(batch.x.shape)
    r = np.zeros(len(batch.s))
    for j, phi in enumerate(F.phis):
        u += dg[:, j:j + 1] * phi.grad_x(batch.x, batch.s)
        r += dg[:, j] * batch.s * phi.ds(batch.x, batch.s)
    return u, r


def dirichlet_integrand(F: CylinderFunction, G: CylinderFunction, omega):
    """<grad F, grad G> in the tangent space at omega."""
    batch, single = as_batch(omega)
    if len(batch.s) == 0:
        return unbatch(np.zeros(batch.m), single)
    uf, rf = _point_grads(F, batch)
    ug, rg = _point_grads(G, batch)
    return unbatch(batch.reduce(np.sum(uf * ug, axis=1) + rf * rg), single)


def log_derivative_B(le: LieElement, model: LevyModel, omega):
    batch, single = as_batch(omega)
    return unbatch(batch.pair(lambda x, s: beta_point(le, model, x, s)), single)


def divergence_cyl(fields: Sequence[tuple[CylinderFunction, LieElement]], model: LevyModel, omega):
    """div of V = sum_j G_j (v_j, a_j)."""
    batch, single = as_batch(omega)
    out = np.zeros(batch.m)
    for G, le in fields:
        out += _dir_batch(le, G, batch)
        out += batch.pair(lambda x, s, le=le: beta_point(le, model, x, s)) * G.outer.value(G.pairings(batch))
    return unbatch(out, single)


def vector_field_inner(fields: Sequence[tuple[CylinderFunction, LieElement]], F: CylinderFunction, omega):
    """<V(omega), grad F(omega)> for V = sum_j G_j (v_j, a_j); equals sum_j G_j * dF along (v_j, a_j)."""
    batch, single = as_batch(omega)
    out = np.zeros(batch.m)
    for G, le in fields:
        out += G.outer.value(G.pairings(batch)) * _dir_batch(le, F, batch)
    return unbatch(out, single)


def ibp_terms(F: CylinderFunction, G: CylinderFunction, le: LieElement, model: LevyModel,
              batch: ConfigBatch) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-configuration (dF * G, F * dG, F * G * B); their sum has mean zero."""
    f = F.outer.value(F.pairings(batch))
    g = G.outer.value(G.pairings(batch))
    B = batch.pair(lambda x, s: beta_point(le, model, x, s))
    return _dir_batch(le, F, batch) * g, f * _dir_batch(le, G, batch), f * g * B


def ibp_integrand(F: CylinderFunction, G: CylinderFunction, le: LieElement, model: LevyModel, omega):
    batch, single = as_batch(omega)
    if le.is_zero:
        return unbatch(np.zeros(batch.m), single)
    a, b, c = ibp_terms(F, G, le, model, batch)
    return unbatch(a + b + c, single)


def ibp_residual(F, G, le, model, sampler, n: int, rng_spec, workers: int = 1):
    """Monte Carlo estimate of E[(dF) G + F (dG) + F G B]; exact zero for (v, a) = 0 or F, G constant."""
    from .montecarlo import McEstimate, estimate

    if le.is_zero or (isinstance(F.outer, Constant) and isinstance(G.outer, Constant)):
        return McEstimate(0.0, 0.0, n, 0.0)
    return estimate(sampler, lambda b: ibp_integrand(F, G, le, model, b), n, rng_spec, workers, target=0.0)


# ---------------------------------------------------------------------------
# Dirichlet operators


def base_dirichlet_apply(model: LevyModel, phi: SmoothFunction, x, s) -> np.ndarray:
    """H phi = -lap phi - <grad log q, grad phi> - s^2 phi_ss - 2 s phi_s - (s d_s log q)(s phi_s)."""
    x = as_points(x, model.dim)
    s = np.asarray(s, dtype=float).reshape(-1)
    if len(s) == 0:
        return np.zeros(0)
    gphi = phi.grad_x(x, s)
    sphi = s * phi.ds(x, s)
    active = np.any(gphi != 0, axis=1) | (sphi != 0) | (phi.lap_x(x, s) != 0) | (phi.dss(x, s) != 0)
    with np.errstate(all="ignore"):
        out = (-phi.lap_x(x, s) - np.einsum("ni,ni->n", model.grad_x_log_q(x, s), gphi)
               - s * s * phi.dss(x, s) - 2.0 * sphi - model.s_ds_log_q(x, s) * sphi)
    return np.where(active, out, 0.0)


def base_tangent_inner(phi: SmoothFunction, xi: SmoothFunction, x, s) -> np.ndarray:
    """<grad phi, grad xi> in T(X x R+): spatial dot plus (s phi_s)(s xi_s)."""
    return (np.einsum("ni,ni->n", phi.grad_x(x, s), xi.grad_x(x, s))
            + s * s * phi.ds(x, s) * xi.ds(x, s))


def dirichlet_operator_apply(model: LevyModel, F: CylinderFunction, omega, base_apply: Callable | None = None):
    """Intrinsic Dirichlet operator applied to F at omega.

    ``base_apply(phi, x, s)`` overrides the base operator (e.g. a spectral one).
    """
    batch, single = as_batch(omega)
    if len(batch.s) == 0 or isinstance(F.outer, Constant):
        return unbatch(np.zeros(batch.m), single)
    apply = base_apply or (lambda phi, x, s: base_dirichlet_apply(model, phi, x, s))
    R = F.pairings(batch)
    dg, d2g = F.outer.grad(R), F.outer.hess(R)
    out = np.zeros(batch.m)
    for j, pj in enumerate(F.phis):
        out += dg[:, j] * batch.pair(lambda x, s, pj=pj: apply(pj, x, s))
        for k, pk in enumerate(F.phis):
            if k < j:
                continue
            w = 1.0 if k == j else 2.0
            out -= w * d2g[:, j, k] * batch.pair(lambda x, s, pj=pj, pk=pk: base_tangent_inner(pj, pk, x, s))
    return unbatch(out, single)


# ---------------------------------------------------------------------------
# Lie brackets and generators


FD_STEP = 1e-5


def _fd_jacobian(field: Callable, x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    n, d = x.shape
    cols = []
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        cols.append((field(x + e) - field(x - e)) / (2 * h))
    return np.stack(cols, axis=-1)


def lie_bracket(e1: LieElement, e2: LieElement) -> LieElement:
    """([v1, v2], <grad a2, v1> - <grad a1, v2>) with [v1, v2] = Dv2 v1 - Dv1 v2."""
    d = e1.dim
    if e1.is_zero or e2.is_zero:
        return LieElement.zero(d)

    def v(x):
        x = as_points(x, d)
        return np.einsum("nij,nj->ni", e2.jac(x), e1.v(x)) - np.einsum("nij,nj->ni", e1.jac(x), e2.v(x))

    def a(x):
        x = as_points(x, d)
        return np.einsum("ni,ni->n", e2.grad_a(x), e1.v(x)) - np.einsum("ni,ni->n", e1.grad_a(x), e2.v(x))

    def jac(x):
        return _fd_jacobian(v, as_points(x, d))

    def grad_a(x):
        x = as_points(x, d)
        return _fd_jacobian(lambda y: a(y)[:, None], x)[:, 0, :]

    sup = e1.support.intersect(e2.support)
    if sup is None:
        return LieElement.zero(d)
    return LieElement(d, v, jac, a, grad_a, sup, name=f"[{e1.name},{e2.name}]")


def flow_config(le: LieElement, t: float, batch: ConfigBatch, h0: float = DEFAULT_STEP) -> ConfigBatch:
    """Move every point by (psi_t^v, theta_t^a): (x, s) -> (psi_t(x), exp(t a(psi_t(x))) s)."""
    if le.is_zero or len(batch.s) == 0:
        return batch
    y = flow(le, t, batch.x, h0)
    return batch.with_points(y, batch.s * np.exp(t * le.a(y)))


def real_generator(le: LieElement, model: LevyModel, F: CylinderFunction, omega):
    """D F = dF + B F / 2, so that the generator of V along (v, a) equals -i D."""
    batch, single = as_batch(omega)
    B = batch.pair(lambda x, s: beta_point(le, model, x, s))
    return unbatch(_dir_batch(le, F, batch) + 0.5 * B * F.outer.value(F.pairings(batch)), single)


def generator_R(le: LieElement, model: LevyModel, F: CylinderFunction, omega):
    """(re, im) of R(v, a)F = (1/i)(dF + B F / 2)."""
    val = real_generator(le, model, F, omega)
    return np.zeros_like(val) if np.ndim(val) else 0.0, -val


def flow_derivative(functional: Callable, le: LieElement, omega, h: float = FD_STEP,
                    h0: float = DEFAULT_STEP):
    """d/dt functional((psi_t, theta_t) omega) at t = 0, central differences with Richardson."""
    batch, single = as_batch(omega)

    def diff(step):
        return (functional(flow_config(le, step, batch, h0)) - functional(flow_config(le, -step, batch, h0))) / (2 * step)

    d1, d2 = diff(h), diff(0.5 * h)
    return unbatch(np.asarray((4.0 * d2 - d1) / 3.0, dtype=float).reshape(-1), single)


def commutator_residual(e1: LieElement, e2: LieElement, model: LevyModel, F: CylinderFunction,
                        omega, h: float = FD_STEP) -> tuple[float, float]:
    """[R1, R2]F - (-i) R([e1, e2])F at a single configuration, returned with its scale.

    With D_k = dF + B F / 2 and R_k = -i D_k, [R1, R2] = -[D1, D2]; nested
    derivatives D1(D2 F) come from differentiating D2 F along the flow of e1.
    """
    D2F = lambda b: real_generator(e2, model, F, b)
    D1F = lambda b: real_generator(e1, model, F, b)
    batch, _ = as_batch(omega)
    B1 = lambda b: b.pair(lambda x, s: beta_point(e1, model, x, s))
    B2 = lambda b: b.pair(lambda x, s: beta_point(e2, model, x, s))
    # D1 G = dG along e1 + B1 G / 2 for G = D2 F, and symmetrically
    d12 = flow_derivative(D2F, e1, batch, h) + 0.5 * B1(batch) * D2F(batch)
    d21 = flow_derivative(D1F, e2, batch, h) + 0.5 * B2(batch) * D1F(batch)
    lhs = -(d12 - d21)
    br = lie_bracket(e1, e2)
    rhs = -real_generator(br, model, F, batch)
    scale = max(1.0, float(np.max(np.abs(lhs))))
    return float(np.max(np.abs(lhs - rhs))), scale

"""Poisson exponentials, Charlier polynomials and the add-one-point gradient."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .base_space import MarkedPoint, QuadratureRule, SmoothFunction
from .calculus import CylinderFunction, base_dirichlet_apply, base_tangent_inner
from .configuration import ConfigBatch, MarkedConfiguration, as_batch, unbatch
from .errors import CoincidenceError, DomainError, TruncationError
from .levy_model import LevyModel

DEFAULT_ORDER = 8
NODE_CHUNK = 256


# ---------------------------------------------------------------------------
# formal power series in one parameter


class TruncatedSeries:
    """c_0 + c_1 t + ... + c_K t^K; coefficients may carry trailing batch axes."""

    __slots__ = ("c",)

    def __init__(self, coeffs):
        self.c = np.asarray(coeffs, dtype=float)
        if self.c.ndim == 0 or len(self.c) == 0:
            raise ValueError("series needs at least one coefficient")

    @property
    def order(self) -> int:
        return len(self.c) - 1

    @classmethod
    def constant(cls, a, order: int) -> "TruncatedSeries":
        a = np.asarray(a, dtype=float)
        c = np.zeros((order + 1,) + a.shape)
        c[0] = a
        return cls(c)

    @classmethod
    def variable(cls, order: int, scale=1.0) -> "TruncatedSeries":
        scale = np.asarray(scale, dtype=float)
        c = np.zeros((order + 1,) + scale.shape)
        if order >= 1:
            c[1] = scale
        return cls(c)

    def coeff(self, k: int):
        if k > self.order:
            raise TruncationError(f"order {k} exceeds truncation order {self.order}")
        return self.c[k]

    def _coerce(self, other) -> "TruncatedSeries":
        if isinstance(other, TruncatedSeries):
            if other.order != self.order:
                raise TruncationError("series orders differ")
            return other
        return TruncatedSeries.constant(np.broadcast_to(other, self.c.shape[1:]), self.order)

    def __add__(self, other):
        return TruncatedSeries(self.c + self._coerce(other).c)

    __radd__ = __add__

    def __neg__(self):
        return TruncatedSeries(-self.c)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, TruncatedSeries):
            return TruncatedSeries(self.c * np.asarray(other, dtype=float))
        o = self._coerce(other).c
        K = self.order
        out = np.zeros(np.broadcast_shapes(self.c.shape, o.shape))
        for k in range(K + 1):
            out[k] = np.sum(self.c[: k + 1] * o[k::-1], axis=0)
        return TruncatedSeries(out)

    __rmul__ = __mul__

    def deriv_coeffs(self) -> np.ndarray:
        """Coefficients of t * f'(t)."""
        k = np.arange(self.order + 1).reshape((-1,) + (1,) * (self.c.ndim - 1))
        return k * self.c

    def exp(self) -> "TruncatedSeries":
        """exp(f) via k e_k = sum_j j f_j e_{k-j}."""
        K = self.order
        e = np.zeros(self.c.shape)
        e[0] = np.exp(self.c[0])
        jf = self.deriv_coeffs()
        for k in range(1, K + 1):
            e[k] = np.sum(jf[1: k + 1] * e[k - 1:: -1][:k], axis=0) / k
        return TruncatedSeries(e)

    def reciprocal(self) -> "TruncatedSeries":
        K = self.order
        if np.any(self.c[0] == 0):
            raise DomainError("series with zero constant term has no reciprocal")
        r = np.zeros(self.c.shape)
        r[0] = 1.0 / self.c[0]
        for k in range(1, K + 1):
            r[k] = -np.sum(self.c[1: k + 1] * r[k - 1:: -1][:k], axis=0) / self.c[0]
        return TruncatedSeries(r)

    def log(self) -> "TruncatedSeries":
        """log f for f_0 > 0, from (log f)' = f' / f."""
        if np.any(self.c[0] <= 0):
            raise DomainError("log of a series with non-positive constant term")
        K = self.order
        q = TruncatedSeries(self.deriv_coeffs()) * self.reciprocal()
        out = np.zeros(self.c.shape)
        out[0] = np.log(self.c[0])
        k = np.arange(1, K + 1).reshape((-1,) + (1,) * (self.c.ndim - 1))
        out[1:] = q.c[1:] / k
        return TruncatedSeries(out)

    def compose(self, inner: "TruncatedSeries") -> "TruncatedSeries":
        """f(g(t)) for g with zero constant term (Horner)."""
        if np.any(inner.c[0] != 0):
            raise ValueError("inner series must have zero constant term")
        out = TruncatedSeries.constant(self.c[-1], self.order)
        for k in range(self.order - 1, -1, -1):
            out = out * inner + self.c[k]
        return out

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros(np.broadcast_shapes(self.c.shape[1:], t.shape))
        for k in range(self.order, -1, -1):
            out = out * t + self.c[k]
        return out


@dataclass(frozen=True)
class DualSeries:
    """a(t) + mu b(t) with mu^2 = 0: a two-parameter series kept to first order in mu."""

    a: TruncatedSeries
    b: TruncatedSeries

    def __add__(self, o):
        if isinstance(o, DualSeries):
            return DualSeries(self.a + o.a, self.b + o.b)
        return DualSeries(self.a + o, self.b)

    def __mul__(self, o):
        if isinstance(o, DualSeries):
            return DualSeries(self.a * o.a, self.a * o.b + self.b * o.a)
        return DualSeries(self.a * o, self.b * o)

    def exp(self):
        e = self.a.exp()
        return DualSeries(e, e * self.b)

    def log(self):
        return DualSeries(self.a.log(), self.b * self.a.reciprocal())


# ---------------------------------------------------------------------------
# sigma~ moments and power sums


def sigma_moments(phi: SmoothFunction, model: LevyModel, rule: QuadratureRule | None, kmax: int) -> np.ndarray:
    """[0, int phi dsigma, ..., int phi^kmax dsigma]."""
    rule = rule if rule is not None else QuadratureRule.for_functions([phi], order=32)
    vals = phi(rule.x, rule.s) if len(rule) else np.zeros(0)
    wq = rule.w * model.q(rule.x, rule.s) if len(rule) else np.zeros(0)
    return np.array([0.0] + [float(np.sum(wq * vals**k)) for k in range(1, kmax + 1)])


def power_sums(phi: SmoothFunction, batch: ConfigBatch, kmax: int) -> np.ndarray:
    """(kmax + 1, m) array with row k = <phi^k, omega> (row 0 unused)."""
    out = np.zeros((kmax + 1, batch.m))
    if len(batch.s) == 0:
        return out
    v = phi(batch.x, batch.s)
    for k in range(1, kmax + 1):
        out[k] = batch.reduce(v**k)
    return out


def charlier_from_powersums(p: np.ndarray, m1: float, K: int) -> np.ndarray:
    """Q_0..Q_K from power sums p_k (rows 1..K) via exp(sum (-1)^{k+1} p_k t^k / k - m1 t)."""
    shape = p.shape[1:]
    c = np.zeros((K + 1,) + shape)
    for k in range(1, K + 1):
        c[k] = (-1) ** (k + 1) * p[k] / k
    c[1] = c[1] - m1
    e = TruncatedSeries(c).exp()
    fact = np.array([math.factorial(n) for n in range(K + 1)], dtype=float).reshape((-1,) + (1,) * len(shape))
    return fact * e.c


@dataclass(frozen=True)
class ChaosCoefficients:
    """Q_0..Q_K at each configuration for a fixed phi; Q[0] == 1."""

    Q: np.ndarray

    def __getitem__(self, n):
        return self.Q[n]


def charlier_all(phi: SmoothFunction, model: LevyModel, omega, rule: QuadratureRule | None = None,
                 K: int = DEFAULT_ORDER, moments: np.ndarray | None = None) -> ChaosCoefficients:
    batch, single = as_batch(omega)
    mom = moments if moments is not None else sigma_moments(phi, model, rule, 1)
    Q = charlier_from_powersums(power_sums(phi, batch, K), mom[1], K)
    return ChaosCoefficients(Q[:, 0] if single else Q)


def charlier(n: int, phi: SmoothFunction, model: LevyModel, omega, rule: QuadratureRule | None = None,
             K: int = DEFAULT_ORDER, moments: np.ndarray | None = None):
    """Q_n(phi^{(x)n}; omega) = n! [t^n] e(t phi; omega)."""
    if n > K or n < 0:
        raise TruncationError(f"order {n} outside 0..{K}")
    batch, single = as_batch(omega)
    Q = charlier_all(phi, model, batch, rule, K, moments).Q
    return unbatch(Q[n], single)


def mixed_charlier(n: int, phi: SmoothFunction, model: LevyModel, batch: ConfigBatch,
                   moments: np.ndarray, K: int = DEFAULT_ORDER) -> np.ndarray:
    """Q_n(phi^{(x)(n-1)} (x) phi^2) as (n-1)! [t^{n-1} mu] e(t phi + mu phi^2)."""
    if n < 1:
        return np.zeros(batch.m)
    if n - 1 > K:
        raise TruncationError(f"order {n} outside 1..{K + 1}")
    # per-point log(1 + t phi + mu phi^2) by series arithmetic
    v = phi(batch.x, batch.s) if len(batch.s) else np.zeros(0)
    one = np.ones_like(v)
    a = TruncatedSeries.constant(one, K) + TruncatedSeries.variable(K, v)
    b = TruncatedSeries.constant(v * v, K)
    L = DualSeries(a, b).log()
    # pair over points, subtract t <phi> + mu <phi^2>
    pa = np.stack([batch.reduce(L.a.c[k]) if len(v) else np.zeros(batch.m) for k in range(K + 1)])
    pb = np.stack([batch.reduce(L.b.c[k]) if len(v) else np.zeros(batch.m) for k in range(K + 1)])
    pa[1] -= moments[1]
    pb[0] -= moments[2]
    E = DualSeries(TruncatedSeries(pa), TruncatedSeries(pb)).exp()
    return math.factorial(n - 1) * E.b.c[n - 1]


def charlier_recursion(n: int, phi: SmoothFunction, model: LevyModel, omega, rule: QuadratureRule | None = None,
                       K: int = DEFAULT_ORDER):
    """Q_n by the three-term recursion with the mixed term from the two-parameter series."""
    if n > K or n < 0:
        raise TruncationError(f"order {n} outside 0..{K}")
    batch, single = as_batch(omega)
    mom = sigma_moments(phi, model, rule, 2)
    p1 = batch.pair(phi.value) if len(batch.s) else np.zeros(batch.m)
    prev, cur = np.zeros(batch.m), np.ones(batch.m)
    for k in range(n):
        nxt = cur * (p1 - mom[1]) - k * mixed_charlier(k, phi, model, batch, mom, K) - k * prev * mom[2]
        prev, cur = cur, nxt
    return unbatch(cur, single)


def poisson_exponential(phi: SmoothFunction, model: LevyModel, omega, rule: QuadratureRule | None = None,
                        moments: np.ndarray | None = None):
    """e(phi; omega) = exp(<log(1 + phi), omega> - int phi dsigma~)."""
    batch, single = as_batch(omega)
    mom = moments if moments is not None else sigma_moments(phi, model, rule, 1)
    if len(batch.s) == 0:
        return unbatch(np.full(batch.m, math.exp(-mom[1])), single)
    v = phi(batch.x, batch.s)
    bad = v <= -1.0
    if single and np.any(bad):
        raise DomainError("1 + phi must be positive at every point")
    with np.errstate(invalid="ignore", divide="ignore"):
        lp = np.where(bad, np.nan, np.log1p(np.where(bad, 0.0, v)))
    return unbatch(np.exp(batch.reduce(lp) - mom[1]), single)


# ---------------------------------------------------------------------------
# add-one-point gradient


def mp_gradient(F: Callable, omega: MarkedConfiguration, p: MarkedPoint) -> float:
    """F(omega + eps_p) - F(omega)."""
    if len(omega) and np.any(np.linalg.norm(omega.x - np.asarray(p.x), axis=1) <= 1e-12):
        raise CoincidenceError("added point coincides with a point of omega")
    return float(F(omega.add(p)) - F(omega))


def cyl_gradient_kernel(F: CylinderFunction, batch: ConfigBatch, x, s) -> np.ndarray:
    """(m, n_nodes) array of g(R + Phi(x, s)) - g(R) for a cylinder function."""
    R = F.pairings(batch)
    Phi = np.stack([phi(x, s) for phi in F.phis], axis=1)
    m, n = R.shape[0], Phi.shape[0]
    shifted = (R[:, None, :] + Phi[None, :, :]).reshape(m * n, -1)
    return F.outer.value(shifted).reshape(m, n) - F.outer.value(R)[:, None]


def cyl_gradient_kernel_H(F: CylinderFunction, model: LevyModel, batch: ConfigBatch, x, s) -> np.ndarray:
    """H applied in (x, s) to the kernel g(R + Phi(x, s)) - g(R), by the composite rule."""
    R = F.pairings(batch)
    Phi = np.stack([phi(x, s) for phi in F.phis], axis=1)
    m, n = R.shape[0], Phi.shape[0]
    shifted = (R[:, None, :] + Phi[None, :, :]).reshape(m * n, -1)
    dg = F.outer.grad(shifted).reshape(m, n, -1)
    d2g = F.outer.hess(shifted).reshape(m, n, F.N, F.N)
    Hphi = np.stack([base_dirichlet_apply(model, phi, x, s) for phi in F.phis], axis=1)
    T = np.stack([np.stack([base_tangent_inner(pj, pk, x, s) for pk in F.phis], axis=1) for pj in F.phis], axis=1)
    return np.einsum("mnj,nj->mn", dg, Hphi) - np.einsum("mnjk,njk->mn", d2g, T)


def charlier_gradient_kernel(n: int, psi: SmoothFunction, batch: ConfigBatch, x, s, m1: float,
                             K: int = DEFAULT_ORDER) -> np.ndarray:
    """(m, n_nodes) array of Q_n(psi; omega + eps_(x,s)) - Q_n(psi; omega)."""
    p = power_sums(psi, batch, K)
    v = psi(x, s)
    pk = p[:, :, None] + np.stack([np.zeros_like(v)] + [v**k for k in range(1, K + 1)])[:, None, :]
    Qs = charlier_from_powersums(pk, m1, K)[n]
    Q0 = charlier_from_powersums(p, m1, K)[n]
    return Qs - Q0[:, None]


def mp_directional(phi: SmoothFunction, F, model: LevyModel, omega, rule: QuadratureRule | None = None):
    """(grad^MP F(omega), phi) in L^2(sigma~), by quadrature over phi's support.

    ``F`` is a CylinderFunction or a kernel callable (batch, x, s) -> (m, n_nodes).
    """
    batch, single = as_batch(omega)
    rule = rule if rule is not None else QuadratureRule.for_functions([phi], order=24)
    kern = (lambda b, x, s: cyl_gradient_kernel(F, b, x, s)) if isinstance(F, CylinderFunction) else F
    w = rule.w * model.q(rule.x, rule.s) * phi(rule.x, rule.s)
    return unbatch(kern(batch, rule.x, rule.s) @ w, single)


def l2_inner(phi: SmoothFunction, psi: SmoothFunction, model: LevyModel, rule: QuadratureRule | None = None) -> float:
    rule = rule if rule is not None else QuadratureRule.for_functions([phi, psi], order=32, intersect=True)
    if len(rule) == 0:
        return 0.0
    return float(np.sum(rule.w * model.q(rule.x, rule.s) * phi(rule.x, rule.s) * psi(rule.x, rule.s)))


def second_quant_integrand(kind: str, kF: Callable, kG: Callable, model: LevyModel, rule: QuadratureRule,
                           batch: ConfigBatch) -> np.ndarray:
    """Per configuration (grad^MP F, A grad^MP G)_{L^2(sigma~)} by quadrature.

    ``kF`` returns the gradient kernel of F at the nodes; for ``kind ==
    'base_dirichlet'`` ``kG`` must return H applied to the kernel of G.
    """
    if kind not in ("identity", "base_dirichlet"):
        raise ValueError(f"unknown second-quantisation operator {kind!r}")
    wq = rule.w * model.q(rule.x, rule.s)
    out = np.zeros(batch.m)
    # chunk the nodes to keep the (m, nodes) kernels small
    for a in range(0, len(wq), NODE_CHUNK):
        x, s = rule.x[a:a + NODE_CHUNK], rule.s[a:a + NODE_CHUNK]
        out += np.einsum("mn,mn,n->m", kF(batch, x, s), kG(batch, x, s), wq[a:a + NODE_CHUNK])
    return out


def second_quant_form(kind: str, F: CylinderFunction, G: CylinderFunction, model: LevyModel, sampler, n: int,
                      rng_spec, workers: int = 1, rule: QuadratureRule | None = None):
    """Monte Carlo estimate of E[(grad^MP F, A grad^MP G)] for A = identity or the base operator."""
    from .montecarlo import estimate

    rule = rule if rule is not None else QuadratureRule.for_functions(list(F.phis) + list(G.phis), order=24)
    kF = lambda b, x, s: cyl_gradient_kernel(F, b, x, s)
    if kind == "identity":
        kG = lambda b, x, s: cyl_gradient_kernel(G, b, x, s)
    else:
        kG = lambda b, x, s: cyl_gradient_kernel_H(G, model, b, x, s)
    return estimate(sampler, lambda b: second_quant_integrand(kind, kF, kG, model, rule, b), n, rng_spec, workers)


__all__ = [
    "TruncatedSeries",
    "DualSeries",
    "ChaosCoefficients",
    "charlier",
    "charlier_all",
    "charlier_recursion",
    "mixed_charlier",
    "poisson_exponential",
    "mp_gradient",
    "mp_directional",
    "second_quant_form",
    "l2_inner",
]

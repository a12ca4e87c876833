"""Geometry of the base space X x R+ with X = R^d.

All evaluators are vectorised: positions are arrays of shape ``(n, d)`` and
marks arrays of shape ``(n,)``.  Smooth functions are built from separable
products of one-dimensional C^2 profiles, which keeps every derivative in
closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import IntegrationDivergedError, QuadratureError

DEFAULT_STEP = 1e-3
DEFAULT_T_MAX = 10.0


def as_points(x, dim: int | None = None) -> np.ndarray:
    """Coerce positions to a float array of shape (n, d)."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1) if dim in (None, 1) else arr.reshape(1, -1)
    if dim is not None and arr.shape[1] != dim:
        raise ValueError(f"expected dimension {dim}, got {arr.shape[1]}")
    return arr


@dataclass(frozen=True)
class MarkedPoint:
    """A point (x, s) of X x R+ with s > 0."""

    x: tuple
    s: float

    def __post_init__(self):
        x = tuple(float(v) for v in np.atleast_1d(self.x))
        s = float(self.s)
        if not (all(math.isfinite(v) for v in x) and math.isfinite(s)):
            raise ValueError("marked point must be finite")
        if s <= 0.0:
            raise ValueError("mark must be strictly positive")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "s", s)

    @property
    def dim(self) -> int:
        return len(self.x)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray([self.x]), np.asarray([self.s])


# ---------------------------------------------------------------------------
# boxes


@dataclass(frozen=True)
class Box:
    """Axis-aligned box [lo, hi] in R^d."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        if len(lo) != len(hi):
            raise ValueError("box bounds differ in dimension")
        if any(h < l for l, h in zip(lo, hi)):
            raise ValueError(f"empty box {lo} {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.hi, self.lo)))

    def contains(self, x) -> np.ndarray:
        x = as_points(x, self.dim)
        return np.all((x >= self.lo) & (x <= self.hi), axis=1)

    def union(self, other: "Box") -> "Box":
        return Box(np.minimum(self.lo, other.lo), np.maximum(self.hi, other.hi))

    def intersect(self, other: "Box") -> "Box | None":
        lo = np.maximum(self.lo, other.lo)
        hi = np.minimum(self.hi, other.hi)
        if np.any(hi <= lo):
            return None
        return Box(lo, hi)

    def pad(self, r: float) -> "Box":
        return Box(np.subtract(self.lo, r), np.add(self.hi, r))


def union_boxes(boxes) -> Box | None:
    out = None
    for b in boxes:
        if b is None:
            continue
        out = b if out is None else out.union(b)
    return out


# ---------------------------------------------------------------------------
# one-dimensional profiles


class Profile:
    """Scalar C^2 function of one variable with first and second derivative."""

    support: tuple | None = None
    breaks: tuple = ()

    def value(self, y):
        raise NotImplementedError

    def d1(self, y):
        raise NotImplementedError

    def d2(self, y):
        raise NotImplementedError

    def __mul__(self, other: "Profile") -> "Profile":
        return ProductProfile(self, other)


class Bump(Profile):
    """(1 - u^2)^3 on [lo, hi] after the affine map to [-1, 1]; zero outside."""

    def __init__(self, lo: float, hi: float, amp: float = 1.0):
        if not hi > lo:
            raise ValueError("bump needs hi > lo")
        self.lo, self.hi, self.amp = float(lo), float(hi), float(amp)
        self.k = 2.0 / (self.hi - self.lo)
        self.c = 0.5 * (self.lo + self.hi)
        self.support = (self.lo, self.hi)
        self.breaks = (self.lo, self.hi)

    def _uw(self, y):
        y = np.asarray(y, dtype=float)
        u = self.k * (y - self.c)
        # mask by the bounds too: the affine map can round |u| just below 1 at the ends
        inside = (y > self.lo) & (y < self.hi)
        return u, np.where(inside, np.maximum(1.0 - u * u, 0.0), 0.0)

    def value(self, y):
        _, w = self._uw(y)
        return self.amp * (w * w * w)

    def d1(self, y):
        u, w = self._uw(y)
        return (-6.0 * self.amp * self.k) * (u * w * w)

    def d2(self, y):
        u, w = self._uw(y)
        return (self.amp * self.k**2) * (w * (24.0 * u * u - 6.0 * w))

    def __repr__(self):
        return f"Bump({self.lo}, {self.hi}, amp={self.amp})"


def _smoothstep(u):
    return u**3 * (10.0 - 15.0 * u + 6.0 * u * u)


def _smoothstep_d1(u):
    return 30.0 * u * u * (1.0 - u) ** 2


def _smoothstep_d2(u):
    return 60.0 * u * (1.0 - u) * (1.0 - 2.0 * u)


class Plateau(Profile):
    """Equal to ``amp`` on [a, b], C^2 ramps on [lo, a] and [b, hi], zero outside."""

    def __init__(self, lo: float, a: float, b: float, hi: float, amp: float = 1.0):
        if not lo < a <= b < hi:
            raise ValueError("plateau needs lo < a <= b < hi")
        self.lo, self.a, self.b, self.hi, self.amp = map(float, (lo, a, b, hi, amp))
        self.support = (self.lo, self.hi)
        self.breaks = (self.lo, self.a, self.b, self.hi)

    def _parts(self, y):
        y = np.asarray(y, dtype=float)
        up = (y > self.lo) & (y < self.a)
        flat = (y >= self.a) & (y <= self.b)
        down = (y > self.b) & (y < self.hi)
        ku = 1.0 / (self.a - self.lo)
        kd = 1.0 / (self.hi - self.b)
        uu = np.clip((y - self.lo) * ku, 0.0, 1.0)
        ud = np.clip((self.hi - y) * kd, 0.0, 1.0)
        return up, flat, down, uu, ud, ku, kd

    def value(self, y):
        up, flat, down, uu, ud, _, _ = self._parts(y)
        out = np.where(up, _smoothstep(uu), 0.0)
        out = np.where(flat, 1.0, out)
        out = np.where(down, _smoothstep(ud), out)
        return self.amp * out

    def d1(self, y):
        up, _, down, uu, ud, ku, kd = self._parts(y)
        out = np.where(up, _smoothstep_d1(uu) * ku, 0.0)
        out = np.where(down, -_smoothstep_d1(ud) * kd, out)
        return self.amp * out

    def d2(self, y):
        up, _, down, uu, ud, ku, kd = self._parts(y)
        out = np.where(up, _smoothstep_d2(uu) * ku * ku, 0.0)
        out = np.where(down, _smoothstep_d2(ud) * kd * kd, out)
        return self.amp * out

    def __repr__(self):
        return f"Plateau({self.lo}, {self.a}, {self.b}, {self.hi}, amp={self.amp})"


class Polynomial(Profile):
    """Polynomial c0 + c1 y + c2 y^2 + ... (no compact support)."""

    def __init__(self, coeffs: Sequence[float]):
        self.p = np.polynomial.Polynomial(np.asarray(coeffs, dtype=float))
        self.p1 = self.p.deriv(1)
        self.p2 = self.p.deriv(2)

    def value(self, y):
        return self.p(np.asarray(y, dtype=float))

    def d1(self, y):
        return self.p1(np.asarray(y, dtype=float))

    def d2(self, y):
        return self.p2(np.asarray(y, dtype=float))


class GaussianProfile(Profile):
    """amp * exp(-(y - c)^2 / (2 w^2)) (no compact support)."""

    def __init__(self, center: float, width: float, amp: float = 1.0):
        self.c, self.w, self.amp = float(center), float(width), float(amp)

    def value(self, y):
        z = (np.asarray(y, dtype=float) - self.c) / self.w
        return self.amp * np.exp(-0.5 * z * z)

    def d1(self, y):
        z = (np.asarray(y, dtype=float) - self.c) / self.w
        return -self.amp * z / self.w * np.exp(-0.5 * z * z)

    def d2(self, y):
        z = (np.asarray(y, dtype=float) - self.c) / self.w
        return self.amp * (z * z - 1.0) / self.w**2 * np.exp(-0.5 * z * z)


class HermiteProfile(Profile):
    """Probabilists' Hermite polynomial He_n."""

    def __init__(self, n: int):
        self.n = int(n)

    @staticmethod
    def he(n: int, y):
        y = np.asarray(y, dtype=float)
        if n < 0:
            return np.zeros_like(y)
        h0, h1 = np.ones_like(y), y
        if n == 0:
            return h0
        for k in range(1, n):
            h0, h1 = h1, y * h1 - k * h0
        return h1

    def value(self, y):
        return self.he(self.n, y)

    def d1(self, y):
        return self.n * self.he(self.n - 1, y)

    def d2(self, y):
        return self.n * (self.n - 1) * self.he(self.n - 2, y)


class ProductProfile(Profile):
    def __init__(self, f: Profile, g: Profile):
        self.f, self.g = f, g
        if f.support is None:
            self.support = g.support
        elif g.support is None:
            self.support = f.support
        else:
            lo, hi = max(f.support[0], g.support[0]), min(f.support[1], g.support[1])
            self.support = (lo, max(lo, hi))
        self.breaks = tuple(sorted(set(f.breaks) | set(g.breaks)))

    def value(self, y):
        return self.f.value(y) * self.g.value(y)

    def d1(self, y):
        return self.f.d1(y) * self.g.value(y) + self.f.value(y) * self.g.d1(y)

    def d2(self, y):
        return (self.f.d2(y) * self.g.value(y) + 2.0 * self.f.d1(y) * self.g.d1(y)
                + self.f.value(y) * self.g.d2(y))


class LogArg(Profile):
    """Mark profile s -> P(log s), for functions that are smooth in log-mark."""

    def __init__(self, inner: Profile):
        self.inner = inner
        if inner.support is not None:
            self.support = (math.exp(inner.support[0]), math.exp(inner.support[1]))
        self.breaks = tuple(math.exp(b) for b in inner.breaks)

    def value(self, s):
        return self.inner.value(np.log(s))

    def d1(self, s):
        s = np.asarray(s, dtype=float)
        return self.inner.d1(np.log(s)) / s

    def d2(self, s):
        s = np.asarray(s, dtype=float)
        u = np.log(s)
        return (self.inner.d2(u) - self.inner.d1(u)) / (s * s)


class ConstantProfile(Profile):
    def __init__(self, c: float = 1.0):
        self.c = float(c)

    def value(self, y):
        return np.full(np.shape(y), self.c)

    def d1(self, y):
        return np.zeros(np.shape(y))

    def d2(self, y):
        return np.zeros(np.shape(y))


# ---------------------------------------------------------------------------
# functions on X x R+


@dataclass(frozen=True)
class SeparableTerm:
    amp: float
    x_profiles: tuple
    s_profile: Profile

    def parts(self, x, s):
        fx = [p.value(x[:, k]) for k, p in enumerate(self.x_profiles)]
        return fx, self.s_profile.value(s)


class SmoothFunction:
    """Finite sum of separable terms amp * prod_k P_k(x_k) * Q(s).

    Exposes the value, spatial gradient, Laplacian and the first two mark
    derivatives.  ``support`` is the bounding box (x-box, s-interval) when every
    profile is compactly supported, else ``None``.
    """

    def __init__(self, terms: Sequence[SeparableTerm]):
        self.terms = tuple(terms)
        if not self.terms:
            raise ValueError("need at least one term")
        self.dim = len(self.terms[0].x_profiles)
        self.x_box, self.s_range = self._support()

    def _support(self):
        xb, sr = None, None
        for t in self.terms:
            if t.s_profile.support is None or any(p.support is None for p in t.x_profiles):
                return None, None
            b = Box([p.support[0] for p in t.x_profiles], [p.support[1] for p in t.x_profiles])
            xb = b if xb is None else xb.union(b)
            lo, hi = t.s_profile.support
            sr = (lo, hi) if sr is None else (min(sr[0], lo), max(sr[1], hi))
        return xb, sr

    @property
    def compact(self) -> bool:
        return self.x_box is not None

    def x_breaks(self, k: int) -> tuple:
        return tuple(sorted({b for t in self.terms for b in t.x_profiles[k].breaks}))

    def s_breaks(self) -> tuple:
        return tuple(sorted({b for t in self.terms for b in t.s_profile.breaks}))

    # evaluators ------------------------------------------------------------
    def __call__(self, x, s):
        return self.value(x, s)

    def value(self, x, s):
        x = as_points(x, self.dim)
        s = np.asarray(s, dtype=float).reshape(-1)
        out = np.zeros(len(s))
        for t in self.terms:
            fx, fs = t.parts(x, s)
            out += t.amp * np.prod(fx, axis=0) * fs
        return out

    def grad_x(self, x, s):
        x = as_points(x, self.dim)
        s = np.asarray(s, dtype=float).reshape(-1)
        out = np.zeros((len(s), self.dim))
        for t in self.terms:
            fx, fs = t.parts(x, s)
            for i, p in enumerate(t.x_profiles):
                others = np.prod([fx[k] for k in range(self.dim) if k != i], axis=0) if self.dim > 1 else 1.0
                out[:, i] += t.amp * p.d1(x[:, i]) * others * fs
        return out

    def lap_x(self, x, s):
        x = as_points(x, self.dim)
        s = np.asarray(s, dtype=float).reshape(-1)
        out = np.zeros(len(s))
        for t in self.terms:
            fx, fs = t.parts(x, s)
            for i, p in enumerate(t.x_profiles):
                others = np.prod([fx[k] for k in range(self.dim) if k != i], axis=0) if self.dim > 1 else 1.0
                out += t.amp * p.d2(x[:, i]) * others * fs
        return out

    def ds(self, x, s):
        x = as_points(x, self.dim)
        s = np.asarray(s, dtype=float).reshape(-1)
        out = np.zeros(len(s))
        for t in self.terms:
            fx, _ = t.parts(x, s)
            out += t.amp * np.prod(fx, axis=0) * t.s_profile.d1(s)
        return out

    def dss(self, x, s):
        x = as_points(x, self.dim)
        s = np.asarray(s, dtype=float).reshape(-1)
        out = np.zeros(len(s))
        for t in self.terms:
            fx, _ = t.parts(x, s)
            out += t.amp * np.prod(fx, axis=0) * t.s_profile.d2(s)
        return out

    # algebra -----------------------------------------------------------------
    def _wrap(self, terms):
        f = SmoothFunction(terms)
        return TestFunction(terms) if f.compact else f

    def __add__(self, other: "SmoothFunction"):
        return self._wrap(self.terms + other.terms)

    def __mul__(self, c: float):
        return self._wrap([SeparableTerm(t.amp * float(c), t.x_profiles, t.s_profile) for t in self.terms])

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __repr__(self):
        return f"{type(self).__name__}({list(self.terms)!r})"


class TestFunction(SmoothFunction):
    """Element of the test class: compactly supported, mark support in (0, inf)."""

    __test__ = False  # not a pytest class

    def __init__(self, terms):
        super().__init__(terms)
        if not self.compact:
            raise ValueError("test functions need compactly supported profiles")
        if self.s_range[0] <= 0.0:
            raise ValueError("mark support must stay away from s = 0")

    @property
    def support(self):
        return self.x_box, self.s_range


def bump_test_function(x_lo, x_hi, s_lo, s_hi, amp: float = 1.0) -> TestFunction:
    """amp * prod_k Bump(x_lo[k], x_hi[k])(x_k) * Bump(s_lo, s_hi)(s)."""
    x_lo, x_hi = np.atleast_1d(x_lo), np.atleast_1d(x_hi)
    profs = tuple(Bump(a, b) for a, b in zip(x_lo, x_hi))
    return TestFunction([SeparableTerm(float(amp), profs, Bump(s_lo, s_hi))])


def separable(amp: float, x_profiles: Sequence[Profile], s_profile: Profile) -> SmoothFunction:
    f = SmoothFunction([SeparableTerm(float(amp), tuple(x_profiles), s_profile)])
    return TestFunction(f.terms) if f.compact else f


# ---------------------------------------------------------------------------
# spatial fields and Lie algebra elements


class ScalarField:
    """Sum of separable terms amp * prod_k P_k(x_k) on X."""

    def __init__(self, terms: Sequence[tuple]):
        self.terms = tuple((float(a), tuple(ps)) for a, ps in terms)
        self.dim = len(self.terms[0][1]) if self.terms else 1
        boxes = []
        for _, ps in self.terms:
            if any(p.support is None for p in ps):
                raise ValueError("scalar fields must be compactly supported")
            boxes.append(Box([p.support[0] for p in ps], [p.support[1] for p in ps]))
        self.support = union_boxes(boxes)
        self.sup_bound = sum(abs(a) * np.prod([_sup(p) for p in ps]) for a, ps in self.terms)

    @classmethod
    def zero(cls, dim: int = 1) -> "ScalarField":
        f = cls([])
        f.dim = dim
        return f

    def __call__(self, x):
        x = as_points(x, self.dim)
        if self.dim == 1 and len(self.terms) == 1:
            a, ps = self.terms[0]
            return a * ps[0].value(x[:, 0])
        out = np.zeros(len(x))
        for a, ps in self.terms:
            out += a * np.prod([p.value(x[:, k]) for k, p in enumerate(ps)], axis=0)
        return out

    def grad(self, x):
        x = as_points(x, self.dim)
        if self.dim == 1 and len(self.terms) == 1:
            a, ps = self.terms[0]
            return (a * ps[0].d1(x[:, 0]))[:, None]
        out = np.zeros((len(x), self.dim))
        for a, ps in self.terms:
            vals = [p.value(x[:, k]) for k, p in enumerate(ps)]
            for i, p in enumerate(ps):
                others = np.prod([vals[k] for k in range(self.dim) if k != i], axis=0) if self.dim > 1 else 1.0
                out[:, i] += a * p.d1(x[:, i]) * others
        return out

    def hess(self, x):
        x = as_points(x, self.dim)
        out = np.zeros((len(x), self.dim, self.dim))
        for a, ps in self.terms:
            vals = [p.value(x[:, k]) for k, p in enumerate(ps)]
            d1 = [p.d1(x[:, k]) for k, p in enumerate(ps)]
            d2 = [p.d2(x[:, k]) for k, p in enumerate(ps)]
            for i in range(self.dim):
                for j in range(self.dim):
                    fac = np.ones(len(x))
                    for k in range(self.dim):
                        if i == j == k:
                            fac = fac * d2[k]
                        elif k in (i, j):
                            fac = fac * d1[k]
                        else:
                            fac = fac * vals[k]
                    out[:, i, j] += a * fac
        return out


def _sup(p: Profile) -> float:
    if isinstance(p, (Bump, Plateau)):
        return abs(p.amp)
    if p.support is None:
        return math.inf
    grid = np.linspace(p.support[0], p.support[1], 2001)
    return float(np.max(np.abs(p.value(grid))))


@dataclass(frozen=True)
class LieElement:
    """Pair (v, a): compactly supported vector field and scalar field on X.

    ``v``/``jac`` map (n, d) positions to (n, d) vectors and (n, d, d) Jacobians,
    ``a``/``grad_a`` to (n,) values and (n, d) gradients.
    """

    dim: int
    v: Callable
    jac: Callable
    a: Callable
    grad_a: Callable
    support: Box | None
    speed_bound: float = math.inf
    a_bound: float = math.inf
    name: str = ""
    div_fn: Callable | None = None

    def div(self, x) -> np.ndarray:
        if self.div_fn is not None:
            return self.div_fn(as_points(x, self.dim))
        return np.trace(self.jac(as_points(x, self.dim)), axis1=1, axis2=2)

    @property
    def is_zero(self) -> bool:
        return self.support is None

    @classmethod
    def zero(cls, dim: int = 1) -> "LieElement":
        zv = lambda x: np.zeros((len(as_points(x, dim)), dim))
        return cls(dim, zv, lambda x: np.zeros((len(as_points(x, dim)), dim, dim)),
                   lambda x: np.zeros(len(as_points(x, dim))), zv, None, 0.0, 0.0, "zero")

    @classmethod
    def from_fields(cls, components: Sequence[ScalarField] | None = None,
                    a: ScalarField | None = None, dim: int = 1, name: str = "") -> "LieElement":
        """Build (v, a) with v_i = components[i] (or zero) and current field a."""
        if components is not None:
            dim = len(components)
        comps = list(components) if components is not None else []
        has_v = bool(comps) and any(c.terms for c in comps)
        has_a = a is not None and bool(a.terms)

        def v(x):
            x = as_points(x, dim)
            if not has_v:
                return np.zeros((len(x), dim))
            if dim == 1:
                return comps[0](x)[:, None]
            return np.stack([c(x) for c in comps], axis=1)

        def jac(x):
            x = as_points(x, dim)
            if not has_v:
                return np.zeros((len(x), dim, dim))
            return np.stack([c.grad(x) for c in comps], axis=1)

        def div(x):
            x = as_points(x, dim)
            if not has_v:
                return np.zeros(len(x))
            if dim == 1:
                return comps[0].grad(x)[:, 0]
            return sum(c.grad(x)[:, k] for k, c in enumerate(comps))

        def av(x):
            x = as_points(x, dim)
            return a(x) if has_a else np.zeros(len(x))

        def ga(x):
            x = as_points(x, dim)
            return a.grad(x) if has_a else np.zeros((len(x), dim))

        boxes = [c.support for c in comps if c.terms] + ([a.support] if has_a else [])
        speed = float(np.sqrt(sum(c.sup_bound**2 for c in comps))) if has_v else 0.0
        return cls(dim, v, jac, av, ga, union_boxes(boxes), speed,
                   float(a.sup_bound) if has_a else 0.0, name, div)

    def scaled(self, c: float) -> "LieElement":
        c = float(c)
        return LieElement(self.dim, lambda x: c * self.v(x), lambda x: c * self.jac(x),
                          lambda x: c * self.a(x), lambda x: c * self.grad_a(x),
                          self.support if c != 0 else None, abs(c) * self.speed_bound,
                          abs(c) * self.a_bound, self.name,
                          None if self.div_fn is None else (lambda x: c * self.div_fn(x)))

    def vector_part(self) -> "LieElement":
        zero = LieElement.zero(self.dim)
        return LieElement(self.dim, self.v, self.jac, zero.a, zero.grad_a, self.support,
                          self.speed_bound, 0.0, self.name + ":v", self.div_fn)

    def current_part(self) -> "LieElement":
        zero = LieElement.zero(self.dim)
        return LieElement(self.dim, zero.v, zero.jac, self.a, self.grad_a, self.support,
                          0.0, self.a_bound, self.name + ":a")


# ---------------------------------------------------------------------------
# flows


def _n_steps(t: float, h0: float, t_max: float) -> int:
    if abs(t) > t_max:
        raise ValueError(f"|t| = {abs(t)} exceeds t_max = {t_max}")
    return max(1, int(math.ceil(abs(t) / h0 - 1e-12))) if t != 0 else 0


def _moving(v: LieElement, x: np.ndarray) -> np.ndarray:
    if v.support is None:
        return np.zeros(len(x), dtype=bool)
    return v.support.contains(x)


def flow(v: LieElement, t: float, x, h0: float = DEFAULT_STEP, t_max: float = DEFAULT_T_MAX) -> np.ndarray:
    """psi_t^v(x) by fixed-step RK4 with h = t / ceil(|t| / h0).

    Points outside the support of v are returned unchanged.
    """
    x = as_points(x, v.dim).copy()
    n = _n_steps(t, h0, t_max)
    if n == 0:
        return x
    idx = np.nonzero(_moving(v, x))[0]
    if idx.size == 0:
        return x
    h = t / n
    y = x[idx]
    f = v.v
    for _ in range(n):
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(y)):
        raise IntegrationDivergedError("flow produced a non-finite state")
    x[idx] = y
    return x


def flow_with_jacobian(v: LieElement, t: float, x, h0: float = DEFAULT_STEP,
                       t_max: float = DEFAULT_T_MAX) -> tuple[np.ndarray, np.ndarray]:
    """Flow together with its Jacobian from the variational equation dJ/dt = Dv(psi) J."""
    x = as_points(x, v.dim).copy()
    d = v.dim
    J = np.broadcast_to(np.eye(d), (len(x), d, d)).copy()
    n = _n_steps(t, h0, t_max)
    if n == 0:
        return x, J
    idx = np.nonzero(_moving(v, x))[0]
    if idx.size == 0:
        return x, J
    h = t / n
    y = x[idx]
    M = J[idx]

    def rhs(yy, MM):
        return v.v(yy), np.einsum("nij,njk->nik", v.jac(yy), MM)

    for _ in range(n):
        a1, b1 = rhs(y, M)
        a2, b2 = rhs(y + 0.5 * h * a1, M + 0.5 * h * b1)
        a3, b3 = rhs(y + 0.5 * h * a2, M + 0.5 * h * b2)
        a4, b4 = rhs(y + h * a3, M + h * b3)
        y = y + (h / 6.0) * (a1 + 2 * a2 + 2 * a3 + a4)
        M = M + (h / 6.0) * (b1 + 2 * b2 + 2 * b3 + b4)
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(M))):
        raise IntegrationDivergedError("flow produced a non-finite state")
    x[idx] = y
    J[idx] = M
    return x, J


def flow_with_logdet(v: LieElement, t: float, x, h0: float = DEFAULT_STEP,
                     t_max: float = DEFAULT_T_MAX) -> tuple[np.ndarray, np.ndarray]:
    """Flow and log det of its Jacobian; d/dt log det J = div v(psi_t), the trace of the variational equation."""
    x = as_points(x, v.dim).copy()
    ld = np.zeros(len(x))
    n = _n_steps(t, h0, t_max)
    if n == 0:
        return x, ld
    idx = np.nonzero(_moving(v, x))[0]
    if idx.size == 0:
        return x, ld
    h = t / n
    y = x[idx]
    L = np.zeros(len(idx))
    f, dv = v.v, v.div
    for _ in range(n):
        k1, l1 = f(y), dv(y)
        y2 = y + 0.5 * h * k1
        k2, l2 = f(y2), dv(y2)
        y3 = y + 0.5 * h * k2
        k3, l3 = f(y3), dv(y3)
        y4 = y + h * k3
        k4, l4 = f(y4), dv(y4)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        L = L + (h / 6.0) * (l1 + 2.0 * l2 + 2.0 * l3 + l4)
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(L))):
        raise IntegrationDivergedError("flow produced a non-finite state")
    x[idx] = y
    ld[idx] = L
    return x, ld


def flow_jacobian(v: LieElement, t: float, x, h0: float = DEFAULT_STEP,
                  t_max: float = DEFAULT_T_MAX) -> np.ndarray:
    return flow_with_jacobian(v, t, x, h0, t_max)[1]


def current(a, t: float, x) -> np.ndarray:
    """theta_t^a(x) = exp(t a(x)); ``a`` is a ScalarField or a LieElement."""
    vals = a.a(x) if isinstance(a, LieElement) else a(x)
    return np.exp(t * vals)


def directional_derivative_base(le: LieElement, phi: SmoothFunction, x, s) -> np.ndarray:
    """<grad_x phi, v> + s * d_s phi * a at the points (x, s)."""
    x = as_points(x, le.dim)
    s = np.asarray(s, dtype=float).reshape(-1)
    if le.is_zero:
        return np.zeros(len(s))
    return (np.einsum("ni,ni->n", phi.grad_x(x, s), le.v(x))
            + s * phi.ds(x, s) * le.a(x))


def act_flow_point(le: LieElement, t: float, x, s, h0: float = DEFAULT_STEP):
    """(psi_t^v, theta_t^a) applied to the marked points (x, s)."""
    y = flow(le, t, x, h0) if not le.is_zero else as_points(x, le.dim)
    s = np.asarray(s, dtype=float).reshape(-1)
    return y, s * np.exp(t * le.a(y)) if not le.is_zero else s


# ---------------------------------------------------------------------------
# quadrature


def _gl_segments(points: Sequence[float], order: int) -> tuple[np.ndarray, np.ndarray]:
    g, w = np.polynomial.legendre.leggauss(order)
    nodes, weights = [], []
    for a, b in zip(points[:-1], points[1:]):
        if b <= a:
            continue
        nodes.append(0.5 * (b - a) * g + 0.5 * (a + b))
        weights.append(0.5 * (b - a) * w)
    return np.concatenate(nodes), np.concatenate(weights)


def _cuts(lo: float, hi: float, breaks: Sequence[float]) -> list[float]:
    inner = sorted(b for b in set(breaks) if lo < b < hi)
    return [lo, *inner, hi]


@dataclass(frozen=True)
class QuadratureRule:
    """Tensor Gauss-Legendre rule on a box x [s_lo, s_hi] (Lebesgue measure).

    With ``log_marks`` the mark nodes are laid out in u = log s and the weights
    carry the Jacobian s, which suits integrands that are smooth in log s.
    """

    x: np.ndarray
    s: np.ndarray
    w: np.ndarray
    box: Box
    s_range: tuple
    order: int
    log_marks: bool = False

    @classmethod
    def build(cls, box: Box, s_range, order: int = 32, x_breaks=None, s_breaks=(),
              log_marks: bool = False) -> "QuadratureRule":
        d = box.dim
        axes = []
        for k in range(d):
            brk = () if x_breaks is None else x_breaks[k]
            axes.append(_gl_segments(_cuts(box.lo[k], box.hi[k], brk), order))
        s_lo, s_hi = map(float, s_range)
        if log_marks:
            u, wu = _gl_segments(_cuts(math.log(s_lo), math.log(s_hi), [math.log(b) for b in s_breaks if b > 0]), order)
            sn, ws = np.exp(u), wu * np.exp(u)
        else:
            sn, ws = _gl_segments(_cuts(s_lo, s_hi, s_breaks), order)
        grids = np.meshgrid(*[a[0] for a in axes], sn, indexing="ij")
        wgrids = np.meshgrid(*[a[1] for a in axes], ws, indexing="ij")
        xs = np.stack([g.reshape(-1) for g in grids[:-1]], axis=1)
        return cls(xs, grids[-1].reshape(-1), np.prod([g.reshape(-1) for g in wgrids], axis=0),
                   box, (s_lo, s_hi), order, log_marks)

    @classmethod
    def for_functions(cls, funcs: Sequence[SmoothFunction], order: int = 32,
                      intersect: bool = False, log_marks: bool = False) -> "QuadratureRule":
        """Rule over the union (or intersection) of test-function supports, split at kinks."""
        boxes = [f.x_box for f in funcs]
        sr = [f.s_range for f in funcs]
        if intersect:
            box = boxes[0]
            for b in boxes[1:]:
                box = box.intersect(b) if box is not None else None
            s_lo, s_hi = max(r[0] for r in sr), min(r[1] for r in sr)
            if box is None or s_hi <= s_lo:
                return cls.empty(funcs[0].dim)
        else:
            box = union_boxes(boxes)
            s_lo, s_hi = min(r[0] for r in sr), max(r[1] for r in sr)
        xb = [sorted({b for f in funcs for b in f.x_breaks(k)}) for k in range(box.dim)]
        sb = sorted({b for f in funcs for b in f.s_breaks()})
        return cls.build(box, (s_lo, s_hi), order, xb, sb, log_marks)

    @classmethod
    def empty(cls, dim: int = 1) -> "QuadratureRule":
        return cls(np.zeros((0, dim)), np.zeros(0), np.zeros(0), Box([0.0] * dim, [0.0] * dim), (1.0, 1.0), 0)

    def __len__(self):
        return len(self.w)


def integrate(f: Callable, rule: QuadratureRule) -> float:
    """Sum_i w_i f(x_i, s_i) (Lebesgue measure on the rule's window)."""
    if len(rule) == 0:
        return 0.0
    vals = np.asarray(f(rule.x, rule.s), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise QuadratureError("non-finite integrand at a quadrature node")
    return float(np.sum(rule.w * vals))

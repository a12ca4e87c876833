"""Levy measures q(x, s) dx ds = rho(x) p(x, s) dx ds and their samplers."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import special

from .base_space import Box, LieElement, QuadratureRule, ScalarField, SmoothFunction, as_points, integrate
from .errors import DomainError, ModelError, SamplingError

# ---------------------------------------------------------------------------
# spatial densities


class SpatialDensity:
    dim: int

    def rho(self, x) -> np.ndarray:
        raise NotImplementedError

    def grad_log(self, x) -> np.ndarray:
        raise NotImplementedError

    def mass(self, window: Box) -> float:
        raise NotImplementedError

    def sample(self, window: Box, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class UniformSpatial(SpatialDensity):
    """rho = level on ``box`` (all of R^d when box is None), zero elsewhere."""

    level: float = 1.0
    dim: int = 1
    box: Box | None = None

    def __post_init__(self):
        if not self.level >= 0 or not math.isfinite(self.level):
            raise ModelError("uniform level must be finite and nonnegative")
        if self.box is not None and self.box.dim != self.dim:
            raise ModelError("uniform box has the wrong dimension")

    def rho(self, x):
        x = as_points(x, self.dim)
        if self.box is None:
            return np.full(len(x), self.level)
        return np.where(self.box.contains(x), self.level, 0.0)

    def grad_log(self, x):
        return np.zeros(as_points(x, self.dim).shape)

    def _clip(self, window: Box) -> Box | None:
        if self.box is None:
            return window
        return window.intersect(self.box)

    def mass(self, window):
        w = self._clip(window)
        return 0.0 if w is None else self.level * w.volume

    def sample(self, window, rng, n):
        w = self._clip(window)
        if w is None or w.volume == 0.0:
            raise SamplingError("zero-mass window")
        return rng.uniform(w.lo, w.hi, size=(n, self.dim))


@dataclass(frozen=True)
class GaussianSpatial(SpatialDensity):
    """rho = total_mass * N(mean, var I_d)."""

    mean: float = 0.0
    var: float = 1.0
    total_mass: float = 1.0
    dim: int = 1

    def __post_init__(self):
        if not (self.var > 0 and self.total_mass >= 0):
            raise ModelError("gaussian needs var > 0 and total_mass >= 0")

    def rho(self, x):
        x = as_points(x, self.dim)
        z2 = np.sum((x - self.mean) ** 2, axis=1) / self.var
        return self.total_mass * np.exp(-0.5 * z2) / (2 * math.pi * self.var) ** (self.dim / 2)

    def grad_log(self, x):
        return -(as_points(x, self.dim) - self.mean) / self.var

    def _cdf_bounds(self, window):
        sd = math.sqrt(self.var)
        lo = special.ndtr((np.asarray(window.lo) - self.mean) / sd)
        hi = special.ndtr((np.asarray(window.hi) - self.mean) / sd)
        return lo, hi

    def mass(self, window):
        lo, hi = self._cdf_bounds(window)
        return float(self.total_mass * np.prod(hi - lo))

    def sample(self, window, rng, n):
        # truncated normal by inverse CDF, coordinate-wise
        lo, hi = self._cdf_bounds(window)
        if np.any(hi - lo <= 0) or self.total_mass == 0:
            raise SamplingError("zero-mass window")
        u = rng.uniform(size=(n, self.dim))
        x = self.mean + math.sqrt(self.var) * special.ndtri(lo + u * (hi - lo))
        return np.clip(x, window.lo, window.hi)


# ---------------------------------------------------------------------------
# mark densities (each normalised: p(x, R+) = 1)


def _field(field: ScalarField | None, x):
    x = as_points(x)
    if field is None:
        return np.zeros(len(x)), np.zeros(x.shape)
    return field(x), field.grad(x)


class MarkDensity:
    def density(self, x, s) -> np.ndarray:
        raise NotImplementedError

    def s_ds_log(self, x, s) -> np.ndarray:
        raise NotImplementedError

    def grad_log(self, x, s) -> np.ndarray:
        raise NotImplementedError

    def sample(self, x, rng) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class ExponentialMarks(MarkDensity):
    """p(x, s) = lam(x) exp(-lam(x) s) with lam(x) = rate * exp(tilt * b(x))."""

    rate: float = 1.0
    tilt: float = 0.0
    bump: ScalarField | None = None

    def __post_init__(self):
        if not self.rate > 0:
            raise ModelError("exponential rate must be positive")

    def lam(self, x):
        b, gb = _field(self.bump if self.tilt else None, x)
        lam = self.rate * np.exp(self.tilt * b)
        return lam, (lam * self.tilt)[:, None] * gb

    def density(self, x, s):
        lam, _ = self.lam(x)
        s = np.asarray(s, dtype=float)
        return np.where(s > 0, lam * np.exp(-lam * s), 0.0)

    def s_ds_log(self, x, s):
        lam, _ = self.lam(x)
        return -lam * np.asarray(s, dtype=float)

    def grad_log(self, x, s):
        lam, glam = self.lam(x)
        return glam * (1.0 / lam - np.asarray(s, dtype=float))[:, None]

    def sample(self, x, rng):
        lam, _ = self.lam(x)
        return rng.exponential(1.0, size=len(lam)) / lam


@dataclass(frozen=True)
class GammaMarks(MarkDensity):
    """p(s) = rate^k s^(k-1) exp(-rate s) / Gamma(k)."""

    shape: float = 2.0
    rate: float = 1.0

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise ModelError("gamma needs positive shape and rate")

    def density(self, x, s):
        s = np.asarray(s, dtype=float)
        k, r = self.shape, self.rate
        with np.errstate(divide="ignore"):
            logp = k * math.log(r) + (k - 1) * np.log(s) - r * s - special.gammaln(k)
        return np.where(s > 0, np.exp(logp), 0.0)

    def s_ds_log(self, x, s):
        return (self.shape - 1.0) - self.rate * np.asarray(s, dtype=float)

    def grad_log(self, x, s):
        return np.zeros(as_points(x).shape)

    def sample(self, x, rng):
        return rng.gamma(self.shape, 1.0 / self.rate, size=len(as_points(x)))


@dataclass(frozen=True)
class LognormalMarks(MarkDensity):
    """log s ~ N(mu(x), sigma2) with mu(x) = mu0 + mu1 * b(x)."""

    mu0: float = 0.0
    sigma2: float = 1.0
    mu1: float = 0.0
    bump: ScalarField | None = None

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ModelError("lognormal needs sigma2 > 0")

    def mu(self, x):
        b, gb = _field(self.bump if self.mu1 else None, x)
        return self.mu0 + self.mu1 * b, self.mu1 * gb

    def density(self, x, s):
        mu, _ = self.mu(x)
        s = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = (np.log(s) - mu) ** 2 / (2 * self.sigma2)
            p = np.exp(-z) / (s * math.sqrt(2 * math.pi * self.sigma2))
        return np.where(s > 0, p, 0.0)

    def s_ds_log(self, x, s):
        mu, _ = self.mu(x)
        return -1.0 - (np.log(s) - mu) / self.sigma2

    def grad_log(self, x, s):
        mu, gmu = self.mu(x)
        return gmu * ((np.log(s) - mu) / self.sigma2)[:, None]

    def sample(self, x, rng):
        mu, _ = self.mu(x)
        return np.exp(mu + math.sqrt(self.sigma2) * rng.standard_normal(len(mu)))


# ---------------------------------------------------------------------------
# the model


@dataclass(frozen=True)
class LevyModel:
    """sigma~(dx, ds) = scale * rho(x) p(x, s) dx ds."""

    spatial: SpatialDensity
    marks: MarkDensity
    scale: float = 1.0

    @property
    def dim(self) -> int:
        return self.spatial.dim

    def scaled(self, z: float) -> "LevyModel":
        return replace(self, scale=self.scale * float(z))

    def q(self, x, s):
        x = as_points(x, self.dim)
        return self.scale * self.spatial.rho(x) * self.marks.density(x, np.asarray(s, dtype=float).reshape(-1))

    def grad_x_log_q(self, x, s):
        x = as_points(x, self.dim)
        s = np.asarray(s, dtype=float).reshape(-1)
        return self.spatial.grad_log(x) + self.marks.grad_log(x, s)

    def s_ds_log_q(self, x, s):
        x = as_points(x, self.dim)
        return self.marks.s_ds_log(x, np.asarray(s, dtype=float).reshape(-1))

    def sigma_mass(self, window: Box) -> float:
        if window.dim != self.dim:
            raise ModelError("window dimension does not match the model")
        m = self.scale * self.spatial.mass(window)
        if not math.isfinite(m):
            raise ModelError("non-integrable model on this window")
        return float(m)

    def sample_points(self, window: Box, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
        """n i.i.d. points from sigma~ restricted to the window, normalised."""
        if self.sigma_mass(window) <= 0.0:
            raise SamplingError("zero-mass window")
        if n == 0:
            return np.zeros((0, self.dim)), np.zeros(0)
        x = self.spatial.sample(window, rng, n)
        return x, self.marks.sample(x, rng)

    def sample_point(self, window: Box, rng: np.random.Generator):
        from .base_space import MarkedPoint

        x, s = self.sample_points(window, rng, 1)
        return MarkedPoint(tuple(x[0]), float(s[0]))

    def integrate(self, f, rule: QuadratureRule) -> float:
        """Integral of f against sigma~ on the rule's window."""
        return integrate(lambda x, s: f(x, s) * self.q(x, s), rule)


def beta_point(le: LieElement, model: LevyModel, x, s) -> np.ndarray:
    """Logarithmic derivative beta_(v,a)(x, s) of sigma~."""
    x = as_points(x, model.dim)
    s = np.asarray(s, dtype=float).reshape(-1)
    if le.is_zero or len(s) == 0:
        return np.zeros(len(s))
    v, a = le.v(x), le.a(x)
    with np.errstate(all="ignore"):
        gl = model.grad_x_log_q(x, s)
        sl = model.s_ds_log_q(x, s)
        out = np.einsum("ni,ni->n", gl, v) + le.div(x) + sl * a + a
    # only points in the support contribute; elsewhere v and a vanish
    active = (np.any(v != 0, axis=1) | (a != 0) | (le.div(x) != 0))
    bad = active & ~np.isfinite(out)
    if np.any(bad) or np.any(active & (model.q(x, s) <= 0)):
        raise DomainError("logarithmic derivative evaluated where q = 0")
    return np.where(active, out, 0.0)


def base_ibp_residual(le: LieElement, phi1: SmoothFunction, phi2: SmoothFunction, model: LevyModel,
                      rule: QuadratureRule, density=None) -> float:
    """(grad phi1, phi2) + (phi1, grad phi2) + (phi1 phi2 beta) against sigma~.

    ``density`` replaces q as the integrating density while beta still comes
    from ``model``; a mismatched density gives a nonzero residual.
    """
    from .base_space import directional_derivative_base

    def integrand(x, s):
        f1, f2 = phi1(x, s), phi2(x, s)
        d1 = directional_derivative_base(le, phi1, x, s)
        d2 = directional_derivative_base(le, phi2, x, s)
        return d1 * f2 + f1 * d2 + f1 * f2 * beta_point(le, model, x, s)

    if density is None:
        return model.integrate(integrand, rule)
    return integrate(lambda x, s: integrand(x, s) * density(x, s), rule)

"""Spectral heat semigroup of the solvable base operator and its lift to exponentials.

For sigma~ = M N(0, 1)(dx) LogNormal(0, 1)(ds) the substitution u = log s turns
the base operator into the sum of two Ornstein-Uhlenbeck generators, with
eigenfunctions He_n(x) He_m(u) and eigenvalues n + m.  Internally we use the
orthonormal basis h_n = He_n / sqrt(n!).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from .base_space import Box, as_points
from .calculus import base_dirichlet_apply
from .configuration import ConfigBatch, MixingLaw, as_batch, sample_batch, unbatch
from .errors import DomainError
from .levy_model import GaussianSpatial, LevyModel, LognormalMarks
from .montecarlo import RngSpec, McEstimate, collect, finite_rows

TAIL_TOL = 1e-8


def solvable_model(total_mass: float = 1.0) -> LevyModel:
    return LevyModel(GaussianSpatial(0.0, 1.0, total_mass), LognormalMarks(0.0, 1.0))


def hermite_basis(y, N: int) -> np.ndarray:
    """(N + 1, n) array of orthonormal h_k(y) = He_k(y) / sqrt(k!)."""
    y = np.asarray(y, dtype=float).reshape(-1)
    out = np.zeros((N + 1, len(y)))
    out[0] = 1.0
    if N >= 1:
        out[1] = y
    for k in range(1, N):
        out[k + 1] = (y * out[k] - math.sqrt(k) * out[k - 1]) / math.sqrt(k + 1)
    return out


def _gauss_hermite(order: int) -> tuple[np.ndarray, np.ndarray]:
    z, w = hermegauss(order)
    return z, w / math.sqrt(2 * math.pi)


@dataclass(frozen=True)
class SpectralFunction:
    """sum_{n,m} a[n, m] h_n(x) h_m(log s)."""

    a: np.ndarray

    @property
    def eig(self) -> np.ndarray:
        n, m = self.a.shape
        return np.add.outer(np.arange(n), np.arange(m)).astype(float)

    def _eval(self, coef, x, s):
        x = as_points(x, 1)[:, 0]
        s = np.asarray(s, dtype=float).reshape(-1)
        if np.any(s <= 0):
            raise DomainError("marks must be positive")
        Hx = hermite_basis(x, coef.shape[0] - 1)
        Hu = hermite_basis(np.log(s), coef.shape[1] - 1)
        return np.einsum("ni,nm,mi->i", Hx, coef, Hu)

    def __call__(self, x, s):
        return self._eval(self.a, x, s)

    value = __call__

    def H(self, x, s):
        """Base operator applied spectrally."""
        return self._eval(self.eig * self.a, x, s)

    def heat(self, t: float) -> "SpectralFunction":
        return SpectralFunction(np.exp(-t * self.eig) * self.a)

    def mean(self) -> float:
        """Integral against the normalised measure N(0,1) x LogNormal(0,1)."""
        return float(self.a[0, 0])

    def he_coeffs(self) -> np.ndarray:
        """c_{nm} in the He_n He_m basis."""
        n, m = self.a.shape
        fn = np.sqrt([float(math.factorial(k)) for k in range(n)])
        fm = np.sqrt([float(math.factorial(k)) for k in range(m)])
        return self.a / np.outer(fn, fm)


class SpectralBaseOperator:
    """Truncated eigen-expansion of the base operator for the solvable model."""

    def __init__(self, Nx: int = 24, Nu: int = 24, total_mass: float = 1.0, quad_order: int | None = None):
        self.Nx, self.Nu = int(Nx), int(Nu)
        self.model = solvable_model(total_mass)
        self.mass = float(total_mass)
        self.quad_order = quad_order or max(64, 2 * max(self.Nx, self.Nu) + 16)
        self.zq, self.wq = _gauss_hermite(self.quad_order)
        # independent rule for integrals against sigma~
        self.zc, self.wc = _gauss_hermite(self.quad_order + 17)

    def _grid(self, z):
        X, U = np.meshgrid(z, z, indexing="ij")
        return X.reshape(-1, 1), np.exp(U.reshape(-1))

    def project(self, phi) -> SpectralFunction:
        """Coefficients against h_n h_m; warns when the truncation misses > 1e-8 of the energy."""
        if isinstance(phi, SpectralFunction):
            return phi
        x, s = self._grid(self.zq)
        vals = np.asarray(phi(x, s), dtype=float).reshape(len(self.zq), len(self.zq))
        W = np.outer(self.wq, self.wq)
        Hx = hermite_basis(self.zq, self.Nx)
        Hu = hermite_basis(self.zq, self.Nu)
        a = Hx @ (W * vals) @ Hu.T
        energy = float(np.sum(W * vals**2))
        tail = energy - float(np.sum(a * a))
        if tail > TAIL_TOL * max(1.0, energy):
            warnings.warn(f"spectral truncation misses energy {tail:.3e}", RuntimeWarning, stacklevel=2)
        return SpectralFunction(a)

    def spectral_coeffs(self, phi) -> np.ndarray:
        """c_{nm} = (phi, He_n He_m)_{L^2(sigma~)} / (M n! m!)."""
        return self.project(phi).he_coeffs()

    def heat_apply(self, t: float, phi) -> SpectralFunction:
        if t < 0:
            raise ValueError("heat semigroup needs t >= 0")
        return self.project(phi).heat(t)

    def apply_H(self, phi, x, s) -> np.ndarray:
        return self.project(phi).H(x, s)

    def integrate(self, f: Callable) -> float:
        """int f dsigma~ by tensor Gauss-Hermite in (x, log s)."""
        x, s = self._grid(self.zc)
        vals = np.asarray(f(x, s), dtype=float).reshape(len(self.zc), len(self.zc))
        return self.mass * float(np.sum(np.outer(self.wc, self.wc) * vals))

    def conservation_defect(self, t: float, phi) -> float:
        """int (e^{-tH} phi - phi) dsigma~ by quadrature."""
        pt = self.project(phi).heat(t)
        return self.integrate(pt) - self.integrate(phi)

    def _lifted(self, t: float, phi, batch: ConfigBatch, single: bool) -> np.ndarray:
        sp = self.project(phi)
        pt = sp.heat(t) if t >= 0 else SpectralFunction(np.exp(-t * sp.eig) * sp.a)
        corr = self.integrate(pt) - self.integrate(phi)
        if len(batch.s) == 0:
            return np.full(batch.m, math.exp(-corr))
        v = pt(batch.x, batch.s)
        bad = v <= -1.0
        if single and np.any(bad):
            raise DomainError("1 + e^{-tH} phi must be positive at every point")
        with np.errstate(invalid="ignore", divide="ignore"):
            lp = np.where(bad, np.nan, np.log1p(np.where(bad, 0.0, v)))
        return np.exp(batch.reduce(lp) - corr)

    def lifted_semigroup(self, t: float, phi, omega):
        """exp(<log(1 + e^{-tH} phi), omega> - int (e^{-tH} phi - phi) dsigma~)."""
        if t < 0:
            raise ValueError("heat semigroup needs t >= 0")
        batch, single = as_batch(omega)
        return unbatch(self._lifted(t, phi, batch, single), single)

    def generator_residual(self, phi, omega, h: float = 1e-3):
        """|-(d/dt) lifted(t)|_0 - <(1 + phi)^{-1} H phi, omega> exp<log(1 + phi), omega>|.

        The derivative is a Richardson-extrapolated central difference; the
        spectral series is evaluated at small negative times for the left point.
        """
        batch, single = as_batch(omega)
        L = lambda t: self._lifted(t, phi, batch, single)
        d1 = (L(h) - L(-h)) / (2 * h)
        d2 = (L(h / 2) - L(-h / 2)) / h
        deriv = (4 * d2 - d1) / 3
        if len(batch.s):
            v = phi(batch.x, batch.s)
            Hv = base_dirichlet_apply(self.model, phi, batch.x, batch.s)
            rhs = batch.reduce(Hv / (1 + v)) * np.exp(batch.reduce(np.log1p(v)))
        else:
            rhs = np.zeros(batch.m)
        return unbatch(np.abs(-deriv - rhs), single)


def variance_estimate(values: np.ndarray) -> tuple[float, float]:
    """Sample variance and its standard error from the fourth central moment."""
    v = np.asarray(values, dtype=float)
    n = len(v)
    c = v - np.sum(v) / n
    m2 = float(np.sum(c * c) / n)
    m4 = float(np.sum(c**4) / n)
    var = m2 * n / (n - 1)
    return var, math.sqrt(max(m4 - m2 * m2, 0.0) / n)


def ergodicity_probe(op: SpectralBaseOperator, phi, t_grid: Sequence[float], n: int, rng: RngSpec,
                     mixing: MixingLaw | None = None, window: Box | None = None,
                     workers: int = 1) -> list[McEstimate]:
    """Var of T(t)F, F = exp<log(1 + phi), .>, under pi_sigma~ or the mixture, at each t."""
    window = window or Box([-10.0], [10.0])
    sp = op.project(phi)

    def functional(batch):
        return np.stack([op._lifted(t, sp, batch, False) for t in t_grid], axis=1)

    sampler = lambda g, m: sample_batch(op.model, window, g, m, mixing)
    vals, skipped = finite_rows(collect(sampler, functional, n, rng, workers))
    out = []
    for k in range(len(t_grid)):
        var, se = variance_estimate(vals[:, k])
        out.append(McEstimate(var, se, len(vals), None, None, True, skipped))
    return out

"""Finite marked configurations, batches of them, and Poisson/mixed samplers."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .base_space import Box, MarkedPoint, as_points
from .errors import CoincidenceError, EvaluationError, SamplingError
from .levy_model import LevyModel

EPS_COINCIDE = 1e-12


def _lexsort(x: np.ndarray) -> np.ndarray:
    return np.lexsort(x.T[::-1]) if x.shape[0] else np.zeros(0, dtype=int)


def _close_pairs(x: np.ndarray, eps: float) -> list[tuple[int, int]]:
    """Index pairs (in the given order) with distance <= eps; x sorted by first coordinate."""
    n = len(x)
    if n < 2:
        return []
    near = np.nonzero(np.diff(x[:, 0]) <= eps)[0]
    pairs = []
    for i in near:
        j = i + 1
        while j < n and x[j, 0] - x[i, 0] <= eps:
            if np.linalg.norm(x[j] - x[i]) <= eps:
                pairs.append((i, j))
            j += 1
    return pairs


class MarkedConfiguration:
    """Finite set of marked points with distinct positions, sorted lexicographically."""

    __slots__ = ("x", "s")

    def __init__(self, x, s, dim: int | None = None, eps: float = EPS_COINCIDE):
        s = np.asarray(s, dtype=float).reshape(-1)
        if len(s) == 0:
            x = np.zeros((0, dim or (np.shape(x)[1] if np.ndim(x) == 2 else 1)))
        else:
            x = as_points(x, dim)
            if len(x) != len(s):
                raise ValueError("positions and marks differ in length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(s))):
            raise ValueError("configuration must be finite")
        if np.any(s <= 0):
            raise ValueError("marks must be positive")
        order = _lexsort(x)
        x, s = x[order], s[order]
        if _close_pairs(x, eps):
            raise CoincidenceError("two points share a position")
        x.setflags(write=False)
        s.setflags(write=False)
        self.x, self.s = x, s

    @classmethod
    def empty(cls, dim: int = 1) -> "MarkedConfiguration":
        return cls(np.zeros((0, dim)), np.zeros(0), dim)

    @classmethod
    def from_points(cls, points: Iterable[MarkedPoint], dim: int = 1) -> "MarkedConfiguration":
        pts = list(points)
        if not pts:
            return cls.empty(dim)
        return cls([p.x for p in pts], [p.s for p in pts], len(pts[0].x))

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def __len__(self) -> int:
        return len(self.s)

    def __iter__(self):
        for xi, si in zip(self.x, self.s):
            yield MarkedPoint(tuple(xi), float(si))

    def __eq__(self, other) -> bool:
        return (isinstance(other, MarkedConfiguration) and self.x.shape == other.x.shape
                and np.array_equal(self.x, other.x) and np.array_equal(self.s, other.s))

    def __hash__(self):
        return hash((self.x.tobytes(), self.s.tobytes()))

    def __repr__(self):
        return f"MarkedConfiguration(n={len(self)}, d={self.dim})"

    def add(self, p: MarkedPoint) -> "MarkedConfiguration":
        """omega + eps_(x, s); raises CoincidenceError on a repeated position."""
        return MarkedConfiguration(np.vstack([self.x, np.asarray([p.x])]), np.append(self.s, p.s), self.dim)

    def union(self, other: "MarkedConfiguration") -> "MarkedConfiguration":
        return MarkedConfiguration(np.vstack([self.x, other.x]), np.concatenate([self.s, other.s]), self.dim)

    def to_batch(self) -> "ConfigBatch":
        return ConfigBatch(self.x, self.s, np.zeros(len(self), dtype=np.int64), 1)


def pair(f: Callable, omega) -> float | np.ndarray:
    """<f, omega> = sum of f over the points; vectorised over a ConfigBatch."""
    if isinstance(omega, MarkedConfiguration):
        if len(omega) == 0:
            return 0.0
        vals = np.asarray(f(omega.x, omega.s), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise EvaluationError("non-finite term in pairing")
        return float(np.sum(vals))
    return omega.pair(f)


def count(box: Box, s_range: tuple, omega) -> int | np.ndarray:
    """N_B for B = box x [s_lo, s_hi]."""
    lo, hi = s_range
    f = lambda x, s: (box.contains(x) & (s >= lo) & (s <= hi)).astype(float)
    out = pair(f, omega)
    return int(round(out)) if np.ndim(out) == 0 else np.rint(out).astype(np.int64)


# ---------------------------------------------------------------------------
# batches


@dataclass(frozen=True)
class ConfigBatch:
    """m configurations stored flat: point i belongs to configuration owner[i]."""

    x: np.ndarray
    s: np.ndarray
    owner: np.ndarray
    m: int
    z: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.owner, minlength=self.m)

    def reduce(self, vals) -> np.ndarray:
        """Per-configuration sums of per-point values."""
        vals = np.asarray(vals, dtype=float)
        if vals.ndim == 1:
            return np.bincount(self.owner, weights=vals, minlength=self.m)
        out = np.zeros((self.m,) + vals.shape[1:])
        np.add.at(out, self.owner, vals)
        return out

    def pair(self, f: Callable) -> np.ndarray:
        if len(self.s) == 0:
            return np.zeros(self.m)
        vals = np.asarray(f(self.x, self.s), dtype=float)
        return self.reduce(vals)

    def config(self, i: int) -> MarkedConfiguration:
        sel = self.owner == i
        return MarkedConfiguration(self.x[sel], self.s[sel], self.dim)

    def configs(self) -> list[MarkedConfiguration]:
        starts = np.searchsorted(self.owner, np.arange(self.m + 1))
        return [MarkedConfiguration(self.x[a:b], self.s[a:b], self.dim) for a, b in zip(starts[:-1], starts[1:])]

    def with_points(self, x, s) -> "ConfigBatch":
        return ConfigBatch(as_points(x, self.dim), np.asarray(s, dtype=float), self.owner, self.m, self.z)

    def select(self, mask: np.ndarray) -> "ConfigBatch":
        """Sub-batch of the configurations where ``mask`` holds (re-indexed)."""
        mask = np.asarray(mask, dtype=bool)
        new_id = np.cumsum(mask) - 1
        keep = mask[self.owner]
        return ConfigBatch(self.x[keep], self.s[keep], new_id[self.owner[keep]], int(mask.sum()),
                           None if self.z is None else self.z[mask])

    def restrict(self, window: Box) -> "ConfigBatch":
        """Drop points whose positions lie outside the window."""
        keep = window.contains(self.x)
        return ConfigBatch(self.x[keep], self.s[keep], self.owner[keep], self.m, self.z)

    @classmethod
    def from_configs(cls, configs: Sequence[MarkedConfiguration], dim: int = 1) -> "ConfigBatch":
        if configs:
            dim = configs[0].dim
        xs = [c.x for c in configs] or [np.zeros((0, dim))]
        ss = [c.s for c in configs] or [np.zeros(0)]
        owner = np.repeat(np.arange(len(configs)), [len(c) for c in configs]).astype(np.int64)
        return cls(np.vstack(xs), np.concatenate(ss), owner, len(configs))


def as_batch(omega) -> tuple[ConfigBatch, bool]:
    """(batch, single) where single says whether a lone configuration was passed."""
    if isinstance(omega, MarkedConfiguration):
        return omega.to_batch(), True
    return omega, False


def unbatch(vals: np.ndarray, single: bool):
    return float(vals[0]) if single else vals


# ---------------------------------------------------------------------------
# sampling


@dataclass(frozen=True)
class MixingLaw:
    """Finite discrete law nu = sum_k w_k delta_{z_k}."""

    z: tuple
    w: tuple

    def __post_init__(self):
        z = tuple(float(v) for v in self.z)
        w = tuple(float(v) for v in self.w)
        if len(z) != len(w) or not z:
            raise ValueError("mixing law needs matching non-empty atoms and weights")
        if any(v < 0 or not math.isfinite(v) for v in z) or any(v <= 0 for v in w):
            raise ValueError("atoms must be finite >= 0 and weights > 0")
        if abs(sum(w) - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "w", w)

    @classmethod
    def dirac(cls, z: float = 1.0) -> "MixingLaw":
        return cls((z,), (1.0,))

    @property
    def mean(self) -> float:
        return float(np.dot(self.z, self.w))

    def moment(self, k: int) -> float:
        return float(np.dot(np.power(self.z, k), self.w))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if len(self.z) == 1:
            return np.full(n, self.z[0])
        idx = np.searchsorted(np.cumsum(self.w), rng.uniform(size=n), side="right")
        return np.asarray(self.z)[np.minimum(idx, len(self.z) - 1)]


def _fix_collisions(model: LevyModel, window: Box, rng, x, s, owner, eps=EPS_COINCIDE):
    order = np.lexsort((x[:, 0], owner))
    xs, own = x[order], owner[order]
    same = own[1:] == own[:-1]
    if not np.any(same & (np.abs(np.diff(xs[:, 0])) <= eps)):
        return x, s
    for _ in range(100):
        bad = set()
        for c in np.unique(owner):
            idx = np.nonzero(owner == c)[0]
            loc = idx[np.argsort(x[idx, 0], kind="stable")]
            for i, j in _close_pairs(x[loc], eps):
                bad.add(int(loc[j]))
        if not bad:
            return x, s
        bad = np.asarray(sorted(bad))
        x[bad], s[bad] = model.sample_points(window, rng, len(bad))
    raise SamplingError("could not resolve coincident positions")


def sample_batch(model: LevyModel, window: Box, rng: np.random.Generator, m: int,
                 mixing: MixingLaw | None = None) -> ConfigBatch:
    """m independent configurations from pi_sigma~ (or the mixture over ``mixing``)."""
    mass = model.sigma_mass(window)
    z = np.ones(m) if mixing is None else mixing.sample(rng, m)
    counts = rng.poisson(mass * z) if mass > 0 else np.zeros(m, dtype=np.int64)
    owner = np.repeat(np.arange(m, dtype=np.int64), counts)
    total = int(counts.sum())
    if total:
        x, s = model.sample_points(window, rng, total)
        x, s = _fix_collisions(model, window, rng, x, s, owner)
    else:
        x, s = np.zeros((0, model.dim)), np.zeros(0)
    return ConfigBatch(x, s, owner, m, z if mixing is not None else None)


def sample_poisson(model: LevyModel, window: Box, rng: np.random.Generator) -> MarkedConfiguration:
    b = sample_batch(model, window, rng, 1)
    return MarkedConfiguration(b.x, b.s, model.dim)


def sample_mixed(model: LevyModel, mixing: MixingLaw, window: Box,
                 rng: np.random.Generator) -> tuple[float, MarkedConfiguration]:
    b = sample_batch(model, window, rng, 1, mixing)
    return float(b.z[0]), MarkedConfiguration(b.x, b.s, model.dim)


# ---------------------------------------------------------------------------
# compound measures


@dataclass(frozen=True)
class CompoundMeasure:
    """Weighted atomic measure sum_x s_x delta_x."""

    atoms: np.ndarray
    weights: np.ndarray

    def integrate(self, u: Callable) -> float:
        if len(self.weights) == 0:
            return 0.0
        return float(np.sum(self.weights * u(self.atoms)))

    def __eq__(self, other):
        return (isinstance(other, CompoundMeasure) and np.array_equal(self.atoms, other.atoms)
                and np.array_equal(self.weights, other.weights))

    def __hash__(self):
        return hash((self.atoms.tobytes(), self.weights.tobytes()))


def to_compound(omega: MarkedConfiguration) -> CompoundMeasure:
    return CompoundMeasure(omega.x.copy(), omega.s.copy())


def from_compound(u: CompoundMeasure) -> MarkedConfiguration:
    return MarkedConfiguration(u.atoms, u.weights, u.atoms.shape[1] if u.atoms.ndim == 2 else 1)


# ---------------------------------------------------------------------------
# CSV dump


def write_csv(path, configs: Sequence[MarkedConfiguration], dim: int = 1) -> None:
    """One point per row under the header x1,...,xd,s, configurations written back to back."""
    if configs:
        dim = configs[0].dim
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{k + 1}" for k in range(dim)] + ["s"])
        for c in configs:
            for xi, si in zip(c.x, c.s):
                w.writerow([repr(float(v)) for v in xi] + [repr(float(si))])


def read_csv(path) -> MarkedConfiguration:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    d = len(header) - 1
    if header != [f"x{k + 1}" for k in range(d)] + ["s"]:
        raise ValueError(f"unexpected header {header}")
    if not body:
        return MarkedConfiguration.empty(d)
    arr = np.asarray(body, dtype=float)
    return MarkedConfiguration(arr[:, :d], arr[:, d], d)

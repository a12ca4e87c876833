"""Reproducible block-parallel Monte Carlo with counter-based random streams.

Sample i lives in block i // BLOCK; every block draws from its own Philox
stream keyed by (seed, stream, block), so results do not depend on how blocks
are spread over workers.  Per-sample values are gathered in block order and
reduced with numpy's pairwise summation.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .errors import ExperimentError

BLOCK = 2048
Z_MAX = 4.0
SKIP_LIMIT = 0.01
ZERO_TOL = 1e-12


@dataclass(frozen=True)
class RngSpec:
    seed: int
    stream: int = 0

    def generator(self, block: int = 0) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed) % 2**64, spawn_key=(int(self.stream), int(block)))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, k: int) -> "RngSpec":
        """Independent stream for a sub-task (distinct stream index)."""
        return RngSpec(self.seed, self.stream * 1000 + int(k) + 1)


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    n: int
    target: float | None = None
    z: float | None = None
    verdict: bool = True
    skipped: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        return {"mean": d["mean"], "stderr": d["stderr"], "target": d["target"], "z": d["z"]}


def z_score(mean: float, stderr: float, target: float) -> float:
    diff = mean - target
    # a standard error at rounding level means the values were constant
    if stderr > ZERO_TOL * max(1.0, abs(target)):
        return diff / stderr
    return 0.0 if abs(diff) <= ZERO_TOL * max(1.0, abs(target)) else math.copysign(math.inf, diff)


def summarize(values, target: float | None = None, z_max: float = Z_MAX, skipped: int = 0) -> McEstimate:
    """Mean and standard error of finite per-sample values."""
    v = np.asarray(values, dtype=float)
    n = len(v)
    if n < 2:
        raise ExperimentError("need at least two samples")
    mean = float(np.sum(v) / n)
    var = float(np.sum((v - mean) ** 2) / (n - 1))
    se = math.sqrt(var / n)
    if target is None:
        return McEstimate(mean, se, n, None, None, True, skipped)
    z = z_score(mean, se, target)
    return McEstimate(mean, se, n, float(target), z, bool(abs(z) <= z_max), skipped)


def collect(sampler: Callable, functional: Callable, n: int, rng: RngSpec, workers: int = 1) -> np.ndarray:
    """Per-sample functional values, shape (n,) or (n, k), in sample order.

    ``sampler(generator, m)`` returns a batch of m samples and
    ``functional(batch)`` an array with one row per sample.
    """
    if n < 1:
        raise ExperimentError("need n >= 1")
    sizes = [min(BLOCK, n - b * BLOCK) for b in range((n + BLOCK - 1) // BLOCK)]

    def run(b):
        with np.errstate(all="ignore"):
            return np.asarray(functional(sampler(rng.generator(b), sizes[b])), dtype=float)

    if workers <= 1 or len(sizes) == 1:
        parts = [run(b) for b in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    return np.concatenate(parts, axis=0)


def finite_rows(values: np.ndarray) -> tuple[np.ndarray, int]:
    """Drop samples with any non-finite entry; more than 1% dropped is an error."""
    ok = np.isfinite(values) if values.ndim == 1 else np.all(np.isfinite(values), axis=1)
    skipped = int(len(values) - ok.sum())
    if skipped > SKIP_LIMIT * len(values):
        raise ExperimentError(f"{skipped} of {len(values)} samples were non-finite")
    return values[ok], skipped


def estimate(sampler: Callable, functional: Callable, n: int, rng: RngSpec, workers: int = 1,
             target: float | None = None, z_max: float = Z_MAX) -> McEstimate:
    if n < 2:
        raise ExperimentError("need n >= 2")
    vals, skipped = finite_rows(collect(sampler, functional, n, rng, workers))
    return summarize(vals, target, z_max, skipped)


def paired_estimate(sampler: Callable, f: Callable, g: Callable, n: int, rng: RngSpec, workers: int = 1,
                    target: float | None = 0.0, z_max: float = Z_MAX) -> McEstimate:
    """Estimate of E[f - g] with both functionals on the same samples."""
    both = lambda batch: np.stack([np.asarray(f(batch), float), np.asarray(g(batch), float)], axis=1)
    vals, skipped = finite_rows(collect(sampler, both, n, rng, workers))
    return summarize(vals[:, 0] - vals[:, 1], target, z_max, skipped)


def combined_z(a: McEstimate, b: McEstimate, z_max: float = Z_MAX) -> McEstimate:
    """Difference of two independent estimates with combined standard error."""
    se = math.hypot(a.stderr, b.stderr)
    z = z_score(a.mean - b.mean, se, 0.0)
    return McEstimate(a.mean - b.mean, se, min(a.n, b.n), 0.0, z, bool(abs(z) <= z_max))

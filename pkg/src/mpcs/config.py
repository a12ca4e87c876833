"""Experiment configuration (JSON, unknown keys rejected)."""

from __future__ import annotations

import hashlib
import json
from importlib import resources
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .base_space import Box, Bump, ScalarField
from .configuration import MixingLaw
from .errors import ConfigError
from .levy_model import (
    ExponentialMarks,
    GammaMarks,
    GaussianSpatial,
    LevyModel,
    LognormalMarks,
    UniformSpatial,
)

DEFAULT_TOLERANCES = {
    "rn_oracle": 1e-5,
    "base_ibp": 1e-6,
    "negative_control": 1e-4,
    "derivative": 1e-5,
    "lie": 1e-4,
    "commutator": 1e-4,
    "unitary_composition": 1e-8,
    "charlier": 1e-10,
    "annihilation": 1e-6,
    "eigen": 1e-8,
    "composition": 1e-7,
    "generator": 1e-4,
    "conservation": 1e-8,
    "exp_functional": 1e-8,
    "ergodic_decay": 0.01,
    "ergodic_floor": 10.0,
}


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SpatialSpec(_Strict):
    family: Literal["uniform", "gaussian"] = "uniform"
    level: float = Field(1.0, ge=0)
    box_lo: list[float] | None = None
    box_hi: list[float] | None = None
    mean: float = 0.0
    var: float = Field(1.0, gt=0)
    total_mass: float = Field(1.0, ge=0)


class MarkSpec(_Strict):
    family: Literal["exponential", "gamma", "lognormal"] = "exponential"
    rate: float = Field(1.0, gt=0)
    tilt: float = 0.5
    shape: float = Field(2.0, gt=0)
    mu0: float = 0.0
    mu1: float = 0.0
    sigma2: float = Field(1.0, gt=0)
    bump_lo: float = 0.1
    bump_hi: float = 0.9


class ModelSpec(_Strict):
    dim: int = Field(1, ge=1, le=3)
    spatial: SpatialSpec = SpatialSpec()
    marks: MarkSpec = MarkSpec()


class WindowSpec(_Strict):
    lo: list[float] = [0.0]
    hi: list[float] = [1.0]

    @model_validator(mode="after")
    def _check(self):
        if len(self.lo) != len(self.hi) or any(h <= l for l, h in zip(self.lo, self.hi)):
            raise ValueError("window needs lo < hi in every coordinate")
        return self


class MixingSpec(_Strict):
    z: list[float] = [1.0, 2.0]
    w: list[float] = [0.5, 0.5]


class SemigroupSpec(_Strict):
    Nx: int = Field(32, ge=1, le=200)
    Nu: int = Field(32, ge=1, le=200)
    ergodic_mass: float = Field(60.0, gt=0)
    ergodic_t_grid: list[float] = [0.0, 1.0, 5.0]
    ergodic_delta: float = 0.05
    ergodic_offset: float = 0.02
    ergodic_Nx: int = Field(40, ge=1, le=200)

    @field_validator("ergodic_t_grid")
    @classmethod
    def _grid(cls, v):
        if 0.0 not in v or 5.0 not in v or any(t < 0 for t in v):
            raise ValueError("ergodic_t_grid must be nonnegative and contain 0 and 5")
        return v


class ExperimentConfig(_Strict):
    seed: int = Field(20240601, ge=0, lt=2**64)
    workers: int = Field(1, ge=1, le=256)
    n: int = Field(100_000, ge=2)
    n_inner: int = Field(10_000, ge=2)
    z_max: float = Field(4.0, gt=0)
    flow_step: float = Field(1e-3, gt=0)
    t_max: float = Field(10.0, gt=0)
    quad_order: int = Field(64, ge=4, le=256)
    model: ModelSpec = ModelSpec()
    window: WindowSpec = WindowSpec()
    mixing: MixingSpec = MixingSpec()
    measure: Literal["poisson", "mixed"] = "poisson"
    semigroup: SemigroupSpec = SemigroupSpec()
    experiments: list[str] | None = None
    tolerances: dict[str, float] = {}

    @field_validator("tolerances")
    @classmethod
    def _tol(cls, v):
        unknown = set(v) - set(DEFAULT_TOLERANCES)
        if unknown:
            raise ValueError(f"unknown tolerance keys {sorted(unknown)}")
        return v

    @model_validator(mode="after")
    def _dims(self):
        if len(self.window.lo) != self.model.dim:
            raise ValueError("window dimension must match model.dim")
        try:
            MixingLaw(tuple(self.mixing.z), tuple(self.mixing.w))
        except ValueError as exc:
            raise ValueError(f"mixing: {exc}") from None
        return self

    # derived objects ---------------------------------------------------------
    def tol(self, key: str) -> float:
        return float(self.tolerances.get(key, DEFAULT_TOLERANCES[key]))

    def window_box(self) -> Box:
        return Box(self.window.lo, self.window.hi)

    def mixing_law(self) -> MixingLaw:
        return MixingLaw(tuple(self.mixing.z), tuple(self.mixing.w))

    def build_model(self) -> LevyModel:
        d = self.model.dim
        sp = self.model.spatial
        if sp.family == "uniform":
            box = None
            if sp.box_lo is not None or sp.box_hi is not None:
                if sp.box_lo is None or sp.box_hi is None:
                    raise ConfigError("uniform box needs both box_lo and box_hi")
                box = Box(sp.box_lo, sp.box_hi)
            spatial = UniformSpatial(sp.level, d, box)
        else:
            spatial = GaussianSpatial(sp.mean, sp.var, sp.total_mass, d)
        mk = self.model.marks
        bump = None
        if (mk.family == "exponential" and mk.tilt) or (mk.family == "lognormal" and mk.mu1):
            if d != 1:
                raise ConfigError("position-dependent marks are only built for d = 1")
            bump = ScalarField([(1.0, (Bump(mk.bump_lo, mk.bump_hi),))])
        if mk.family == "exponential":
            marks = ExponentialMarks(mk.rate, mk.tilt, bump)
        elif mk.family == "gamma":
            marks = GammaMarks(mk.shape, mk.rate)
        else:
            marks = LognormalMarks(mk.mu0, mk.sigma2, mk.mu1, bump)
        return LevyModel(spatial, marks)

    def canonical(self) -> dict:
        """Settings that determine the report; the worker count is excluded."""
        d = self.model_dump(mode="json")
        d.pop("workers")
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def default_config_path() -> Path:
    """The bundled JSON file holding every default setting."""
    return Path(str(resources.files("mpcs") / "data" / "default.json"))


def load_config(path: str | Path | None = None, **overrides) -> ExperimentConfig:
    """Read and validate a JSON config; ``overrides`` replace top-level keys."""
    data = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None

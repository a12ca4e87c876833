"""Deterministic JSON and CSV reports."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Sequence

from . import __version__
from .config import ExperimentConfig
from .experiments import Outcome
from .fixtures import FIXTURE_VERSION

SUITE_VERSION = f"{__version__}+fixtures.{FIXTURE_VERSION}"


def _clean(obj):
    """JSON has no inf/nan; spell them as strings."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def build_report(cfg: ExperimentConfig, outcomes: Sequence[Outcome]) -> dict:
    return {
        "suite_version": SUITE_VERSION,
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "experiments": [o.to_dict() for o in outcomes],
        "verdict": "pass" if all(o.passed for o in outcomes) else "fail",
    }


def dumps(report: dict) -> str:
    return json.dumps(_clean(report), indent=2) + "\n"


def write_report(path: str | Path, report: dict) -> None:
    Path(path).write_text(dumps(report))


CSV_FIELDS = ["kind", "label", "mean", "stderr", "target", "z", "value", "tolerance", "pass"]


def write_csv_dir(directory: str | Path, outcomes: Sequence[Outcome]) -> list[Path]:
    """One CSV per experiment with its estimates and residuals."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for o in outcomes:
        p = d / f"{o.name}.csv"
        with open(p, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=CSV_FIELDS, extrasaction="ignore")
            w.writeheader()
            for e in o.estimates:
                w.writerow(_clean({"kind": "estimate", **e}))
            for r in o.residuals:
                w.writerow(_clean({"kind": "residual", **r}))
        paths.append(p)
    return paths

import csv
import json

import pytest

from mpcs.cli import main
from mpcs.config import DEFAULT_TOLERANCES, default_config_path, load_config
from mpcs.errors import ConfigError
from mpcs.experiments import get, names, run_experiment
from mpcs.report import SUITE_VERSION


def _write(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def test_bundled_defaults_match_model_defaults():
    assert load_config(default_config_path()) == load_config(None)


def test_unknown_keys_rejected(tmp_path):
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, {"sed": 1}))
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, {"model": {"marks": {"famly": "gamma"}}}))
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, {"tolerances": {"nope": 1.0}}))


@pytest.mark.parametrize("bad", [{"n": 1}, {"workers": 0}, {"window": {"lo": [1.0], "hi": [0.0]}},
                                 {"mixing": {"z": [1.0], "w": [0.4]}}, {"model": {"dim": 2}},
                                 {"semigroup": {"ergodic_t_grid": [0.0, 1.0]}}])
def test_invalid_values_rejected(tmp_path, bad):
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, bad))


def test_hash_ignores_workers():
    a, b = load_config(None, workers=1), load_config(None, workers=4)
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != load_config(None, seed=1).config_hash()


def test_tolerance_override():
    cfg = load_config(None, tolerances={"lie": 1e-3})
    assert cfg.tol("lie") == 1e-3 and cfg.tol("eigen") == DEFAULT_TOLERANCES["eigen"]


def test_registry():
    assert len(names()) == len(set(names())) == 19
    with pytest.raises(ConfigError):
        get("nope")


def test_cli_list(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert [line.split()[0] for line in out] == names()


def test_cli_usage_errors(tmp_path, capsys):
    assert main([]) == 2
    assert main(["run"]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["run", "--config", _write(tmp_path, {"bogus": 1})]) == 2
    assert main(["run", "--config", _write(tmp_path, {}), "--experiment", "nope"]) == 2
    assert main(["sample", "--config", _write(tmp_path, {}), "--n", "0", "--out", str(tmp_path / "p.csv")]) == 2


def test_cli_sample(tmp_path):
    out = tmp_path / "points.csv"
    cfg = _write(tmp_path, {"model": {"dim": 2, "marks": {"tilt": 0.0}}, "window": {"lo": [0, 0], "hi": [1, 2]}})
    assert main(["sample", "--config", cfg, "--n", "50", "--out", str(out), "--seed", "3"]) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["x1", "x2", "s"]
    # E N = 2 per configuration on a window of area 2
    assert 40 <= len(rows) - 1 <= 170
    for r in rows[1:]:
        x1, x2, s = map(float, r)
        assert 0 <= x1 <= 1 and 0 <= x2 <= 2 and s > 0


def test_cli_run_single_experiment(tmp_path):
    cfg = _write(tmp_path, {"n": 4096})
    rep, cdir = tmp_path / "r.json", tmp_path / "csv"
    code = main(["run", "--config", cfg, "--experiment", "laplace", "--out", str(rep),
                 "--csv", str(cdir), "--quiet"])
    report = json.loads(rep.read_text())
    assert code == (0 if report["verdict"] == "pass" else 1)
    assert set(report) == {"suite_version", "config_hash", "seed", "experiments", "verdict"}
    assert report["suite_version"] == SUITE_VERSION
    (exp,) = report["experiments"]
    assert exp["name"] == "laplace" and exp["anchor"]
    for e in exp["estimates"]:
        assert {"mean", "stderr", "target", "z"} <= set(e)
    assert (cdir / "laplace.csv").exists()


def test_selection_does_not_change_numbers():
    cfg = load_config(None, n=2048)
    alone = run_experiment("base_ibp", cfg).to_dict()
    from mpcs.experiments import run_suite

    both = [o.to_dict() for o in run_suite(cfg, ["laplace", "base_ibp"])]
    assert both[1] == alone

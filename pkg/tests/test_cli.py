import filecmp
import json
import math
import os

import pytest

from torus_lab.cli import EXIT_CONFIG, EXIT_INCONCLUSIVE, EXIT_NUMERIC, EXIT_OK, main
from torus_lab.experiments import ConfigError, expand_config
from torus_lab.fourier import make_example_potential

SMALL = {
    "potential": {"builtin": "pendulum-rotator"},
    "eps": [1e-3],
    "scan": {"n_orbits": 70, "tolerances": {"window_periods": 20}},
    "zones": {"grid": 21},
    "chart": {"z_points": 5},
}


def write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


@pytest.mark.parametrize("raw", [
    {"bogus": 1},
    {"a": 0.2},
    {"annulus": {"r": 2.0, "R": 1.0}},
    {"eps": []},
    {"potential": {"builtin": "nope"}},
    {"scan": {"tolerances": {"not_a_field": 1}}},
    {"normal_form": {"resonances": [[2, 4]]}},
])
def test_config_validation(raw):
    with pytest.raises(ConfigError):
        expand_config(raw)


def test_defaults_filled():
    cfg = expand_config({})
    assert cfg["potential"]["builtin"] == "esempietto"
    assert cfg["scan"]["tolerances"]["tol_freq"] == 1e-7


def test_exit_code_config_error(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["zones", "--config", write_config(tmp_path, {"bogus": 1}), "--out", str(out)])
    assert code == EXIT_CONFIG
    err = json.loads((out / "error.json").read_text())
    assert err["exit_code"] == 2
    assert "bogus" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["zones", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_invalid_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert main(["zones", "--config", str(p), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_potential_file_relative_to_config(tmp_path):
    make_example_potential(1.0, 0.5, 3).save(tmp_path / "pot.json")
    cfg = write_config(tmp_path, {"potential": {"file": "pot.json"}, "genericity": {"Kmax": 3}})
    out = tmp_path / "out"
    assert main(["check-potential", "--config", cfg, "--out", str(out)]) == EXIT_OK
    rep = json.loads((out / "genericity.json").read_text())
    assert rep["passed"] is True
    assert rep["config"]["potential"]["file"] == str(tmp_path / "pot.json")


def test_exit_code_numeric_failure(tmp_path):
    cfg = write_config(tmp_path, {"potential": {"builtin": "esempietto", "Kmax": 3},
                                  "chart": {"strict_width": True}})
    out = tmp_path / "out"
    assert main(["chart", "--config", cfg, "--out", str(out)]) == EXIT_NUMERIC
    assert json.loads((out / "error.json").read_text())["error"] == "numeric"


def test_exit_code_inconclusive(tmp_path):
    raw = dict(SMALL, eps=[1e-3, 5e-4, 2.5e-4])
    out = tmp_path / "out"
    code = main(["all", "--config", write_config(tmp_path, raw), "--out", str(out)])
    assert code == EXIT_INCONCLUSIVE
    assert json.loads((out / "fit.json").read_text())["status"] == "below resolution"


def test_fit_requires_scan(tmp_path):
    out = tmp_path / "out"
    raw = dict(SMALL, eps=[1e-3, 5e-4, 2.5e-4])
    assert main(["fit", "--config", write_config(tmp_path, raw), "--out", str(out)]) == EXIT_CONFIG


@pytest.fixture(scope="module")
def two_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("runs")
    cfg = write_config(base, SMALL)
    codes = [main(["all", "--config", cfg, "--out", str(base / f"w{w}"), "--workers", str(w)])
             for w in (1, 2)]
    return base, codes


def test_all_writes_every_artifact(two_runs):
    base, codes = two_runs
    assert codes == [EXIT_OK, EXIT_OK]
    names = set(os.listdir(base / "w1"))
    for expected in ("config.json", "meta.json", "genericity.json", "zones_eps0p001.csv",
                     "normal_form_D0_0.json", "normal_form_k1_0.json", "chart_k1_0.json",
                     "chart_k1_0_rot.csv", "kam.json", "scan_eps0p001.json", "scan_eps0p001.csv",
                     "fit.json"):
        assert expected in names
    scan = json.loads((base / "w1" / "scan_eps0p001.json").read_text())
    assert scan["config"]["scan"]["n_orbits"] == 70
    assert sum(scan["counts"].values()) == 70


def test_results_identical_across_workers(two_runs):
    base, _ = two_runs
    names = sorted(n for n in os.listdir(base / "w1") if n != "meta.json")
    match, mismatch, errors = filecmp.cmpfiles(base / "w1", base / "w2", names, shallow=False)
    assert mismatch == [] and errors == []
    assert json.loads((base / "w2" / "meta.json").read_text())["workers"] == 2


def test_seed_changes_sample(two_runs, tmp_path):
    base, _ = two_runs
    out = tmp_path / "s7"
    assert main(["scan", "--config", write_config(tmp_path, SMALL), "--out", str(out), "--seed", "7"]) == 0
    assert not filecmp.cmp(out / "scan_eps0p001.csv", base / "w1" / "scan_eps0p001.csv", shallow=False)


def test_check_potential_builtin_passes(tmp_path):
    out = tmp_path / "out"
    assert main(["check-potential", "--config", write_config(tmp_path, {}), "--out", str(out)]) == EXIT_OK
    rep = json.loads((out / "genericity.json").read_text())
    assert rep["passed"] is True
    assert rep["p1_failures"] == rep["p2_failures"] == rep["p3_failures"] == []


def test_pendulum_scan_matches_closed_form(tmp_path):
    eps = 1e-3
    raw = {"potential": {"builtin": "pendulum-rotator"}, "eps": [eps],
           "scan": {"n_orbits": 400, "tolerances": {"window_periods": 50}}}
    out = tmp_path / "out"
    assert main(["all", "--config", write_config(tmp_path, raw), "--out", str(out)]) == EXIT_OK
    scan = json.loads((out / "scan_eps0p001.json").read_text())
    target = 1 - 4 / (math.pi * 2.0) * math.sqrt(eps)
    lo, hi = scan["primary_ci"]
    assert lo <= target <= hi


def test_unperturbed_scan_has_no_non_torus(tmp_path):
    raw = dict(SMALL, eps=[0.0])
    out = tmp_path / "out"
    assert main(["scan", "--config", write_config(tmp_path, raw), "--out", str(out)]) == EXIT_OK
    scan = json.loads((out / "scan_eps0.json").read_text())
    assert scan["counts"]["non-torus"] == 0


def test_echoed_config_reproduces_run(two_runs, tmp_path):
    base, _ = two_runs
    out = tmp_path / "again"
    assert main(["all", "--config", str(base / "w1" / "config.json"), "--out", str(out)]) == EXIT_OK
    names = sorted(n for n in os.listdir(base / "w1") if n != "meta.json")
    match, mismatch, errors = filecmp.cmpfiles(base / "w1", out, names, shallow=False)
    assert mismatch == [] and errors == []

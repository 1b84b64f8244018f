import json
import subprocess
import sys

import pytest

from kperturb.cli import main


def run(tmp_path, cmd, cfg, *extra, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return main([cmd, "--config", str(p), *extra])


def report(path):
    return json.loads((path / "report.json").read_text())


def test_stable_default_passes(tmp_path):
    out = tmp_path / "out"
    assert run(tmp_path, "stable", {"alpha": 1.0, "times": [1.0], "output_dir": str(out)}) == 0
    diag = json.loads((out / "diagnostics.json").read_text())
    assert diag["passed"] and diag["results"]["1"]["checks"]["cauchy"]
    header = (out / "density_t1.csv").read_text().splitlines()[0]
    assert header == "x,value"


@pytest.mark.parametrize("cfg", [
    {"alpha": 2.5, "output_dir": "x"},
    {"alpha": 1.0},
    {"alpha": 1.0, "bogus": 1, "output_dir": "x"},
    {"alpha": 1.0, "grid": {"n": 7}, "output_dir": "x"},
    {"alpha": 1.0, "grid": {"n_steps": 4}, "output_dir": "x"},
    {"alpha": "one", "output_dir": "x"},
    {"alpha": 1.0, "times": [], "output_dir": "x"},
    {"alpha": 1.0, "seed": -1, "output_dir": "x"},
])
def test_stable_config_errors(tmp_path, cfg):
    assert run(tmp_path, "stable", cfg) == 2


def test_malformed_inputs(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["stable", "--config", str(bad)]) == 2
    assert main(["stable", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["frobnicate"]) == 2
    assert main(["stable", "--threads", "0", "--output", str(tmp_path)]) == 2
    assert run(tmp_path, "perturb", {"jump": {"kind": "weird"}, "output_dir": str(tmp_path)}) == 2
    assert run(tmp_path, "perturb", {"series": {"n_max": 500}, "output_dir": str(tmp_path)}) == 2


def test_perturb_zero_epsilon(tmp_path):
    out = tmp_path / "p0"
    assert run(tmp_path, "perturb", {"jump": {"epsilon": 0.0}, "output_dir": str(out)}) == 0
    r = report(out)
    assert (r["eta"], r["c"]) == (0.0, 0.0)
    w = r["certificate"]["worst_ratios"]
    assert w["estJ1"] == w["estJn"] == w["product"] == w["pf_defect"] == 0.0


def test_perturb_certified(tmp_path):
    out = tmp_path / "p1"
    assert run(tmp_path, "perturb", {"jump": {"epsilon": 0.01}, "output_dir": str(out)}) == 0
    r = report(out)
    assert r["status"] == "certified" and r["eta"] < 0.2 and r["passed"]
    assert all(r["checks"].values())
    assert len(r["extreme_fits"]) == 3
    assert (out / "k_tilde.kpk").exists()


def test_perturb_no_certificate(tmp_path):
    out = tmp_path / "p10"
    assert run(tmp_path, "perturb", {"jump": {"epsilon": 10.0}, "output_dir": str(out)}) == 1
    r = report(out)
    assert r["status"] == "no-certificate" and r["eta"] >= 1


def test_meyer_modes(tmp_path):
    out = tmp_path / "m0"
    assert run(tmp_path, "meyer", {"jump": {"mu_spec": {"shape": "none"}}, "output_dir": str(out)}) == 0
    out = tmp_path / "m1"
    assert run(tmp_path, "meyer", {"jump": {"mu_spec": {"mass": 0.5}}, "seed": 9, "output_dir": str(out)}) == 0
    r = report(out)
    assert r["checks"]["mass_law"] and r["checks"]["monte_carlo"]
    assert (out / "monte_carlo.csv").exists() and (out / "meyer_add.csv").exists()
    out = tmp_path / "m2"
    cfg = {"jump": {"mu_spec": {"mass": 0.5, "center": 1.0}}, "mode": "remove", "output_dir": str(out)}
    assert run(tmp_path, "meyer", cfg) == 1
    assert report(out)["status"] == "precondition-violation"
    out = tmp_path / "m3"
    cfg = {"jump": {"mu_spec": {"mass": 0.25}}, "mode": "remove", "tau": 2.0, "output_dir": str(out)}
    assert run(tmp_path, "meyer", cfg) == 0


def test_fundsol(tmp_path):
    out = tmp_path / "f"
    assert run(tmp_path, "fundsol", {"jump": {"epsilon": 0.01}, "test_functions": ["centred"],
                                     "output_dir": str(out)}) == 0
    r = report(out)
    assert set(r["residuals"]["centred"]) == {"p", "p~"}
    assert r["residuals"]["centred"]["p"]["ratios"][0] >= 1.8
    bad = {"test_functions": [{"center": 0.0, "radius": 30.0}], "output_dir": str(tmp_path / "g")}
    assert run(tmp_path, "fundsol", bad) == 2


def test_deterministic_outputs(tmp_path):
    cfg = {"jump": {"mu_spec": {"mass": 0.5}}, "seed": 4, "output_dir": str(tmp_path / "a")}
    assert run(tmp_path, "meyer", cfg) == 0
    assert run(tmp_path, "meyer", cfg, "--output", str(tmp_path / "b")) == 0
    for f in ("monte_carlo.csv", "meyer_add.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    ra, rb = report(tmp_path / "a"), report(tmp_path / "b")
    ra["config"].pop("output_dir"), rb["config"].pop("output_dir")
    assert ra == rb
    assert run(tmp_path, "meyer", cfg, "--seed", "5", "--output", str(tmp_path / "c")) == 0
    assert (tmp_path / "c" / "monte_carlo.csv").read_bytes() != (tmp_path / "a" / "monte_carlo.csv").read_bytes()


def test_kernel_cache(tmp_path, monkeypatch):
    cache = tmp_path / "cache"
    monkeypatch.setenv("KP_CACHE_DIR", str(cache))
    cfg = {"jump": {"epsilon": 0.01}, "grid": {"n_steps": 4}}
    assert run(tmp_path, "perturb", cfg, "--output", str(tmp_path / "a")) == 0
    files = list(cache.glob("*.kpk"))
    assert len(files) == 1
    stamp = files[0].stat().st_mtime_ns
    assert run(tmp_path, "perturb", cfg, "--output", str(tmp_path / "b")) == 0
    assert files[0].stat().st_mtime_ns == stamp  # reused, not rewritten
    assert report(tmp_path / "a")["certificate"] == report(tmp_path / "b")["certificate"]


def test_console_entry_point(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"alpha": 1.5, "times": [0.5], "output_dir": str(tmp_path / "o")}))
    proc = subprocess.run([sys.executable, "-m", "kperturb.cli", "stable", "--config", str(cfg)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "Traceback" not in proc.stderr


def test_perturb_epsilon_scan(tmp_path):
    out = tmp_path / "scan"
    cfg = {"jump": {"epsilon": 0.01}, "epsilon_scan": [0.001, 0.1, 1.0], "output_dir": str(out)}
    assert run(tmp_path, "perturb", cfg) == 0
    scan = report(out)["epsilon_scan"]
    assert [r["certified"] for r in scan["rows"]] == [True, True, False]
    assert scan["frontier"] == 0.1
    bad = {"jump": {"kind": "identity"}, "epsilon_scan": [0.1], "output_dir": str(out)}
    assert run(tmp_path, "perturb", bad) == 2


def test_meyer_remove_levy_tail(tmp_path):
    out = tmp_path / "tail"
    cfg = {"jump": {"mu_spec": {"shape": "levy_tail", "radius": 5.0}}, "mode": "remove", "output_dir": str(out)}
    assert run(tmp_path, "meyer", cfg) == 0
    r = report(out)
    assert r["precondition_defect"] == 0.0
    prof = r["ratio_profile"]["remove/rho"]
    assert prof[0] == pytest.approx(1.0, abs=1e-2) and min(prof) < 0.1 * prof[0]

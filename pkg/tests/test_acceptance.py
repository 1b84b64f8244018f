"""Acceptance criteria 1-15, one test each; every test prints its PASS/FAIL line.

Tolerances are pinned here and compared against what the acceptance module
reports, so loosening a threshold in the library makes these tests fail.
"""
import json
import subprocess
import sys
import time

import pytest

from kperturb import acceptance

PINNED = {
    1: {"tol": 1e-6, "runtime_limit_s": 1.0},
    2: {"tol": 1e-6},
    3: {"change_tol": 0.05},
    4: {"tol": 1e-12, "runtime_limit_s": 10.0},
    5: {"tol": 1e-6},
    6: {},
    7: {"base_tol": 2e-3, "floor": 1e-10},
    8: {"tol": 1e-6},
    9: {"tol": 1e-8},
    10: {"tol": 1e-6},
    11: {"tol": 0.05, "runtime_limit_s": 60.0},
    12: {"defect_tol": 1e-6, "spread_tol": 2.0},
    13: {"tol": 1e-6},
    14: {"residual_tol": 5e-2, "ratio_min": 1.8},
}
SELFTEST_LIMIT_S = 600.0


@pytest.mark.parametrize("k", sorted(PINNED))
def test_criterion(k):
    r = acceptance.run_criterion(k)
    print(r.line())
    for key, value in PINNED[k].items():
        assert r.details[key] == value, f"tolerance {key} drifted"
    assert r.passed, r.line()


def test_criterion_bound_factor_values():
    r = acceptance.run_criterion(5)
    assert r.details["bound_factor(0,1)"] == pytest.approx(2.718281828459045, abs=1e-12)
    assert r.details["bound_factor(.5,.5)"] == pytest.approx(4.0, abs=1e-12)


def test_criterion_6_margin():
    r = acceptance.run_criterion(6)
    assert r.details["worst_excess_over_tail+1e-7"] <= 0.0


def test_criterion_15_selftest(tmp_path):
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "kperturb.cli", "selftest", "--output", str(tmp_path)],
                          capture_output=True, text=True, timeout=SELFTEST_LIMIT_S)
    secs = time.perf_counter() - t0
    ok = proc.returncode == 0 and secs < SELFTEST_LIMIT_S
    print(f"[{'PASS' if ok else 'FAIL'}] criterion 15 selftest ({secs:.2f}s): exit={proc.returncode}, "
          f"runtime_limit_s={SELFTEST_LIMIT_S}")
    assert ok, proc.stdout + proc.stderr
    assert proc.stdout.count("[PASS]") == 15
    report = json.loads((tmp_path / "selftest.json").read_text())
    assert report["passed"] and len(report["criteria"]) == 14

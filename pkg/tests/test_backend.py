import os
import subprocess
import sys

import numpy as np
import pytest

from kperturb import _backend, _pykernels

ckernels = pytest.importorskip("kperturb._ckernels")


def _lag_case(rng, P=2, A=9, F=17):
    a = rng.standard_normal((P, A, F)) + 1j * rng.standard_normal((P, A, F))
    b = rng.standard_normal((P, A, F)) + 1j * rng.standard_normal((P, A, F))
    w = np.array([0.0, 0.25])[:P] if P == 2 else np.array([0.125])
    return a, b, np.ascontiguousarray(w), 0.3


@pytest.mark.parametrize("P", [1, 2])
def test_lag_convolve_backends_agree(rng, P):
    a, b, w, s = _lag_case(rng, P=P)
    py = _pykernels.lag_convolve(a, b, w, s)
    cy = ckernels.lag_convolve(a, b, w, s)
    assert np.max(np.abs(py - cy)) <= 1e-13 * np.max(np.abs(py))


def test_dense_compose_backends_agree(rng):
    T, N = 7, 5
    a = rng.random((T, N, T, N))
    b = rng.random((T, N, T, N))
    w = np.tile([0.0, 0.2], 4)[:T]
    py = _pykernels.dense_compose(a, b, w, 0.5)
    cy = ckernels.dense_compose(a, b, w, 0.5)
    assert np.max(np.abs(py - cy)) <= 1e-13 * np.max(np.abs(py))


def test_lag_convolve_small_axis(rng):
    a, b, w, s = _lag_case(rng, A=2)
    assert not np.any(ckernels.lag_convolve(a, b, w, s))
    assert not np.any(_pykernels.lag_convolve(a, b, w, s))


def test_backend_selection():
    assert _backend.NAME in ("cython", "python")
    code = "from kperturb import _backend; print(_backend.NAME)"
    env = dict(os.environ, KP_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    env.pop("KP_PURE_PYTHON")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "cython"


def test_pure_python_series_matches_compiled():
    code = (
        "import numpy as np\n"
        "from kperturb import TimeGrid, SpaceGrid, StableParams, stable_kernel, perturbation_series, QFunction\n"
        "from kperturb.analysis import EpsilonJumpSpec\n"
        "sg = SpaceGrid(1, 10.0, 64); K = stable_kernel(StableParams(1.0), TimeGrid(0.0, 1.0, 4), sg)\n"
        "P = perturbation_series(K, EpsilonJumpSpec(0.01, 1.0).build(sg), QFunction(2.0), 0.1)\n"
        "import sys; sys.stdout.buffer.write(P.series_sum.data.tobytes())\n"
    )
    runs = {}
    for flag in ("1", "0"):
        env = dict(os.environ, KP_PURE_PYTHON=flag)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, check=True)
        runs[flag] = np.frombuffer(out.stdout, dtype=float)
    assert np.max(np.abs(runs["1"] - runs["0"])) <= 1e-13 * np.max(runs["0"])

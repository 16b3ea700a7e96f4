import importlib.util
import os
import subprocess
import sys

import numpy as np
import pytest

from difftts import _jit, kernels


def test_maximum_path_twins_agree():
    rng = np.random.default_rng(0)
    for _ in range(300):
        n_tok = int(rng.integers(1, 8))
        n_frm = n_tok + int(rng.integers(0, 20))
        logp = rng.normal(size=(n_tok, n_frm))
        if rng.uniform() < 0.3:
            logp = np.round(logp)  # force ties
        np.testing.assert_array_equal(kernels._maximum_path_py(logp), kernels._maximum_path_nb(logp))


def test_em_forward_twins_agree():
    rng = np.random.default_rng(1)
    x0, mu = rng.normal(size=(6, 3)), rng.normal(size=(6, 3))
    inv_sigma = np.array([4.0, 1.0, 0.25])
    betas = np.linspace(0.05, 20, 40)
    noise = rng.standard_normal((40, 6, 3))
    results = []
    for fn in (kernels._em_forward_py, kernels._em_forward_nb):
        x = x0.copy()
        out = np.empty((8, 6, 3))
        fn(x, mu, inv_sigma, betas, 0.025, noise, out, 5)
        results.append((x, out))
    np.testing.assert_allclose(results[0][0], results[1][0], rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(results[0][1], results[1][1], rtol=1e-12, atol=1e-12)
    np.testing.assert_array_equal(results[0][1][-1], results[0][0])


@pytest.mark.parametrize("flag,expected", [("1", "numpy"), ("true", "numpy"), ("0", None)])
def test_env_flag_selects_backend(flag, expected):
    env = dict(os.environ, DIFFTTS_DISABLE_NUMBA=flag)
    code = "from difftts import kernels; print(kernels.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    if expected is None:
        expected = "numba" if importlib.util.find_spec("numba") else "numpy"
    assert out.stdout.strip() == expected


def test_jit_identity_when_disabled(monkeypatch):
    monkeypatch.setattr(_jit, "HAVE_NUMBA", False)

    def f(x):
        return x + 1

    assert _jit.jit(f) is f


@pytest.mark.skipif(not _jit.HAVE_NUMBA, reason="numba not installed")
def test_benchmark_script(tmp_path):
    import runpy

    script = os.path.join(os.path.dirname(__file__), "..", "benchmarks", "bench_kernels.py")
    mod = runpy.run_path(script)
    assert mod["main"](["--repeats", "1", "--csv", str(tmp_path / "k.csv")]) == 0
    header = (tmp_path / "k.csv").read_text().splitlines()[0]
    assert header == "kernel,size,numpy_ms,numba_ms,speedup"

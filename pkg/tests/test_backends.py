import os
import subprocess
import sys

import numpy as np
import pytest

from mcvl import _backend, _fallback
from mcvl.features import _bin_table, _orientation_votes

compiled = pytest.importorskip("mcvl._kernels", reason="compiled kernels not built")


def test_backend_selected():
    assert _backend.BACKEND == "compiled"


@pytest.mark.parametrize("width,spacing", [(16, 2), (24, 2), (40, 3), (16, 1)])
def test_sift_bin_agrees(rng, width, spacing):
    img = rng.uniform(size=(50, 61))
    w_lo, w_hi, b_lo = _orientation_votes(img, 0.7)
    tab = _bin_table(width)
    a = compiled.sift_bin(w_lo, w_hi, b_lo, tab, spacing)
    b = _fallback.sift_bin(w_lo, w_hi, b_lo, tab, spacing)
    assert a.shape == b.shape
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_sift_bin_too_small(rng):
    w = np.zeros((10, 10))
    assert compiled.sift_bin(w, w, np.zeros((10, 10), np.int64), _bin_table(16), 2).shape == (0, 128)
    assert _fallback.sift_bin(w, w, np.zeros((10, 10), np.int64), _bin_table(16), 2).shape == (0, 128)


def test_vlad_agrees(rng):
    X = rng.normal(size=(500, 32))
    C = rng.normal(size=(20, 32))
    dots = np.ascontiguousarray(X @ C.T)
    va, aa = compiled.vlad_aggregate(X, C, dots)
    vb, ab = _fallback.vlad_aggregate(X, C, dots)
    assert np.array_equal(aa, ab)
    np.testing.assert_allclose(va, vb, atol=1e-12)


def test_vlad_tie_breaking_agrees():
    C = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]])
    X = np.zeros((3, 2))
    dots = np.ascontiguousarray(X @ C.T)
    assert list(compiled.vlad_aggregate(X, C, dots)[1]) == list(_fallback.vlad_aggregate(X, C, dots)[1]) == [0, 0, 0]


def test_sus_agrees(rng):
    for _ in range(300):
        n = int(rng.integers(1, 300))
        w = rng.dirichlet(np.full(n, 0.3))
        u0 = float(rng.uniform(0, 1.0 / n))
        assert np.array_equal(compiled.sus_indices(w, u0), _fallback.sus_indices(w, u0))


def test_sus_unnormalized_tail_agrees():
    w = np.full(10, 0.1 - 1e-15)
    for u0 in (0.0, 0.05, 0.1 - 1e-12):
        assert np.array_equal(compiled.sus_indices(w, u0), _fallback.sus_indices(w, u0))


def test_env_forces_python_fallback():
    env = dict(os.environ, MCVL_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", "import mcvl; print(mcvl.BACKEND)"], env=env,
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"

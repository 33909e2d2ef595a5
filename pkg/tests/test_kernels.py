import os
import subprocess
import sys

import numpy as np
import pytest

from cascadeflow import _kernels_py, kernels

compiled = pytest.importorskip("cascadeflow._kernels")


def test_backend_is_compiled_when_built():
    assert kernels.BACKEND == "compiled"


def test_histogram_backends_agree(rng):
    bins = rng.integers(0, 65, (2000, 7)).astype(np.uint8)
    rows = np.sort(rng.choice(2000, 900, replace=False)).astype(np.int64)
    g, h = rng.normal(size=2000), rng.random(2000)
    a = compiled.build_histogram(bins, rows, g, h, 65)
    b = _kernels_py.build_histogram(bins, rows, g, h, 65)
    assert a.shape == (7, 65, 3)
    assert np.allclose(a, b, rtol=0, atol=1e-12)
    assert np.array_equal(a[:, :, 2].sum(axis=1), np.full(7, 900.0))
    # oracle: one feature, explicit loop
    ref = np.zeros((65, 3))
    for r in rows:
        ref[bins[r, 3]] += (g[r], h[r], 1.0)
    assert np.allclose(a[3], ref, atol=1e-12)


def test_distance_backends_agree(rng):
    q, r = rng.normal(size=(300, 5)), rng.normal(size=(700, 5))
    a = compiled.min_sq_distances(q, r)
    b = _kernels_py.min_sq_distances(q, r)
    brute = ((q[:, None, :] - r[None, :, :]) ** 2).sum(axis=2).min(axis=1)
    assert np.allclose(a, brute, rtol=1e-12) and np.allclose(b, brute, rtol=1e-12)
    assert np.array_equal(kernels.min_sq_distances(r[:4], r), np.zeros(4))


def test_wrapper_validates_shapes():
    with pytest.raises(ValueError):
        kernels.min_sq_distances(np.zeros((2, 3)), np.zeros((2, 4)))


def test_environment_forces_fallback():
    env = {**os.environ, "CASCADEFLOW_PURE_PYTHON": "1"}
    out = subprocess.run([sys.executable, "-c", "from cascadeflow import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"

"""The numba loop kernels and the numpy fallbacks agree."""
import os
import subprocess
import sys

import numpy as np
import pytest

from heatsheet import _kernels as K


def test_bridge_sup_parity(rng):
    values = rng.normal(size=(50, 33))
    u1, u2 = 1 - rng.random((50, 32)), 1 - rng.random((50, 32))
    np.testing.assert_allclose(K.bridge_sup_loop(values, u1, u2, 0.5, 1 / 32),
                               K.bridge_sup_numpy(values, u1, u2, 0.5, 1 / 32), rtol=1e-14)


def test_bridge_sup_dominates_grid(rng):
    values = rng.normal(size=(20, 9))
    out = K.bridge_sup_numpy(values, 1 - rng.random((20, 8)), 1 - rng.random((20, 8)), 1.0, 0.125)
    assert np.all(out >= np.abs(values).max(axis=1) - 1e-15)


@pytest.mark.parametrize("beta,diag", [(1.0, 9.0), (0.0, 3.0), (-1.0, 1.0), (2.5, 100.0)])
def test_riesz_matrix_parity(rng, beta, diag):
    pts = rng.normal(size=(40, 3))
    np.testing.assert_allclose(K.riesz_matrix_loop(pts, beta, diag), K.riesz_matrix_numpy(pts, beta, diag),
                               rtol=1e-13)


def test_frank_wolfe_parity(rng):
    pts = rng.normal(size=(60, 2))
    kmat = K.riesz_matrix_numpy(pts, 1.0, 20.0)
    w0 = np.full(60, 1 / 60)
    a = K.frank_wolfe_loop(kmat, w0, 5000, 1e-8, 100)
    b = K.frank_wolfe_numpy(kmat, w0, 5000, 1e-8, 100)
    assert a[1] == pytest.approx(b[1], rel=1e-7)
    np.testing.assert_allclose(a[0], b[0], atol=1e-5)
    assert a[2] <= 1e-8 * a[1] and b[2] <= 1e-8 * b[1]


def test_frank_wolfe_energy_decreases(rng):
    kmat = K.riesz_matrix_numpy(rng.normal(size=(80, 3)), 1.0, 15.0)
    _, _, _, _, hist = K.frank_wolfe_loop(kmat, np.full(80, 1 / 80), 2000, 1e-9, 50)
    assert np.all(np.diff(hist) <= 1e-12 * hist[0])


def test_ball_distance_parity(rng):
    vals = rng.normal(size=(30, 17, 3))
    c = np.array([0.3, 0.3, 0.3])
    np.testing.assert_allclose(K.ball_distance_loop(vals, c, 0.1), K.ball_distance_numpy(vals, c, 0.1),
                               rtol=1e-14)


def test_env_flag_selects_numpy_backend():
    env = dict(os.environ, HEATSHEET_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", "import heatsheet; print(heatsheet.backend())"],
                         capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == "numpy"

import os
import subprocess
import sys

import numpy as np
import pytest

from bpslda.kernels import _numba, _numpy

from conftest import random_bow, random_phi


def random_case(rng, v=9, k=4):
    phi = random_phi(rng, v, k)
    bow = random_bow(rng, v)
    phi_x = np.ascontiguousarray(phi[bow.term_ids])
    counts = bow.counts.astype(np.float64)
    return phi_x, counts


@pytest.mark.parametrize("line_search", [True, False])
@pytest.mark.parametrize("sq1norm", [True, False])
@pytest.mark.parametrize("alpha", [0.8, 1.0, 1.9])
def test_forward_backends_agree(rng, line_search, sq1norm, alpha):
    for _ in range(6):
        phi_x, counts = random_case(rng)
        args = (phi_x, counts, alpha, 8, 0.6, 0.5, line_search, 30, sq1norm)
        t_nb, s_nb, d_nb, e_nb, ok_nb = _numba.mda_unroll(*args)
        t_np, s_np, d_np, e_np, ok_np = _numpy.mda_unroll(*args)
        assert ok_nb == ok_np and e_nb == e_np
        np.testing.assert_allclose(t_nb, t_np, rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(s_nb, s_np, rtol=1e-12)
        np.testing.assert_allclose(d_nb, d_np, rtol=1e-12)


def test_backward_backends_agree(rng):
    for alpha in (0.9, 1.0, 1.7):
        phi_x, counts = random_case(rng)
        thetas, steps, denoms, _, ok = _numpy.mda_unroll(
            phi_x, counts, alpha, 6, 0.05, 0.5, False, 30, False
        )
        assert ok
        k = phi_x.shape[1]
        xi = rng.standard_normal(k)
        xi -= thetas[-1] @ xi  # a valid top error signal is theta-orthogonal
        b_nb, x_nb = _numba.backward_unroll(phi_x, counts, thetas, steps, denoms, alpha, xi)
        b_np, x_np = _numpy.backward_unroll(phi_x, counts, thetas, steps, denoms, alpha, xi)
        np.testing.assert_allclose(b_nb, b_np, rtol=1e-11, atol=1e-14)
        np.testing.assert_allclose(x_nb, x_np, rtol=1e-11, atol=1e-14)


def test_grid_backends_agree(rng):
    phi_x, counts = random_case(rng, v=7, k=2)
    t_nb, v_nb = _numba.grid_min_k2(phi_x, counts, 1.4, 200, 1e-3)
    t_np, v_np = _numpy.grid_min_k2(phi_x, counts, 1.4, 200, 1e-3)
    np.testing.assert_allclose(t_nb, t_np, rtol=1e-12)
    assert v_nb == pytest.approx(v_np, rel=1e-12)

    phi_x, counts = random_case(rng, v=7, k=3)
    t_nb, v_nb = _numba.grid_min_k3(phi_x, counts, 1.4, 120, 1e-3)
    t_np, v_np = _numpy.grid_min_k3(phi_x, counts, 1.4, 120, 1e-3)
    np.testing.assert_allclose(t_nb, t_np, rtol=1e-12)
    assert v_nb == pytest.approx(v_np, rel=1e-12)


def test_env_flag_selects_backend():
    code = "import bpslda.kernels as k; print(k.BACKEND)"
    for choice in ("numpy", "numba"):
        env = dict(os.environ, BPSLDA_BACKEND=choice)
        out = subprocess.run(
            [sys.executable, "-c", code], env=env, capture_output=True, text=True
        )
        assert out.returncode == 0, out.stderr
        assert out.stdout.strip() == choice


def test_default_backend_prefers_numba():
    code = "import bpslda.kernels as k; print(k.BACKEND)"
    env = {k: v for k, v in os.environ.items() if k != "BPSLDA_BACKEND"}
    out = subprocess.run(
        [sys.executable, "-c", code], env=env, capture_output=True, text=True
    )
    assert out.returncode == 0, out.stderr
    assert out.stdout.strip() == "numba"


def test_unknown_backend_rejected():
    code = "import bpslda.kernels"
    env = dict(os.environ, BPSLDA_BACKEND="fortran")
    out = subprocess.run(
        [sys.executable, "-c", code], env=env, capture_output=True, text=True
    )
    assert out.returncode != 0

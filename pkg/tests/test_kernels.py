import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kelly_riskcal import _kernels

pytestmark = pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not installed")


def _bracket(t, a, lam):
    lo = np.maximum(1.0 / t, (a / t) ** (1.0 / (lam + 1.0)))
    hi = (1.0 + a * lo ** (-lam)) / t
    return lo, hi


@given(
    st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=12),
    st.floats(0.0, 1e6),
    st.floats(0.01, 100.0),
)
def test_backends_agree(ts, a, lam):
    t = np.array(ts)
    lo, hi = _bracket(t, a, lam)
    w_np, _ = _kernels.statewise_roots_numpy(t, a, lam, lo, hi)
    w_nb, _ = _kernels.statewise_roots_numba(t, a, lam, lo, hi)
    # both iterate in log w and stop within 2 eps |log w|, so agreement is a few ulps of log w
    np.testing.assert_allclose(w_nb, w_np, rtol=1e-14, atol=0)
    g = t * w_np - 1.0 - a * w_np ** (-lam)
    scale = t * w_np + 1.0 + a * w_np ** (-lam)
    assert np.all(np.abs(g) <= 1e-13 * scale)


def test_zero_coupling_is_reciprocal():
    t = np.array([0.5, 2.0, 4.0])
    w, _ = _kernels.statewise_roots(t, 0.0, 3.0, 1.0 / t, 1.0 / t * 1.5)
    np.testing.assert_allclose(w, 1.0 / t, rtol=1e-15)


def test_backend_flag_is_reported():
    assert _kernels.BACKEND in ("numba", "numpy")


def test_env_flag_forces_numpy():
    import os
    import subprocess
    import sys

    env = dict(os.environ, KELLY_RISKCAL_NUMBA="0")
    code = "from kelly_riskcal import _kernels, logcal; print(_kernels.BACKEND, logcal.inner_solve(2.0, 1.0, 3.0))"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    backend, z = out.stdout.split()
    assert backend == "numpy"
    assert abs(float(z) - _kernels_inner()) <= 1e-14


def _kernels_inner():
    from kelly_riskcal.logcal import inner_solve

    return inner_solve(2.0, 1.0, 3.0)

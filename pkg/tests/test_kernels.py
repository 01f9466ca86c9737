import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from dissent_sim import _kernels

PROBE = r"""
import json, math
import numpy as np
from dissent_sim import _kernels
from dissent_sim import collective_rates as cr
from dissent_sim.model_core import squeezing_from_z
from dissent_sim.two_level_dynamics import rates_probe_only, steady_moments
p = squeezing_from_z(2.0)
st = steady_moments(30.0, p, rates_probe_only(p))
v, e = cr.integrate_radial(4, np.array([30.0, 2.0]), 0.0, 10.0, math.pi / 30.0)
print(json.dumps({"numba": _kernels.USE_NUMBA, "xi": st.xi, "t": st.time, "re": v.real, "im": v.imag}))
"""


def _run(flag):
    env = dict(os.environ, DISSENT_SIM_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", PROBE], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


@pytest.mark.skipif(not _kernels.USE_NUMBA, reason="numba disabled in this session")
def test_numba_and_numpy_paths_agree():
    fast, slow = _run("1"), _run("0")
    assert fast["numba"] and not slow["numba"]
    assert fast["xi"] == pytest.approx(slow["xi"], rel=1e-12)
    assert fast["t"] == pytest.approx(slow["t"], rel=1e-12)
    assert fast["re"] == pytest.approx(slow["re"], rel=1e-12)
    assert fast["im"] == pytest.approx(slow["im"], rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("kind", range(5))
def test_panel_twins_agree_in_process(kind):
    p = np.array([12.0, 1.5])
    edges = np.linspace(0.0, 6.0, 41)
    a = _kernels.gk15_panels(kind, p, edges)
    b = _kernels.gk15_panels_np(kind, p, edges)
    assert np.allclose(a[0], b[0], rtol=1e-12, atol=1e-15)
    assert np.allclose(a[2], b[2], rtol=1e-12, atol=1e-15)


def test_angular_series_branch_is_continuous():
    x = np.array([_kernels._SERIES_X * (1 - 1e-9), _kernels._SERIES_X * (1 + 1e-9)])
    j0, f2, a1, a2x = _kernels.angular_factors_np(x)
    for arr in (j0, f2, a1, a2x):
        assert arr[0] == pytest.approx(arr[1], rel=1e-8)


def test_shell_moments_series_branch_is_continuous():
    w = np.array([0.5 * (1 - 1e-10) + 0.0j, 0.5 * (1 + 1e-10) + 0.0j])
    for arr in _kernels.shell_moments_np(w):
        assert arr[0] == pytest.approx(arr[1], rel=1e-8)


def test_gk_rule_integrates_polynomials_exactly():
    # the 15-point Kronrod rule is exact to degree 22 on [-1, 1]
    x, w = _kernels.GK_NODES, _kernels.GK_WEIGHTS
    for deg in (0, 4, 10, 22):
        exact = 2.0 / (deg + 1)
        assert np.dot(w, x**deg) == pytest.approx(exact, rel=1e-13)


def test_dopri_tableau_consistency():
    assert np.allclose(_kernels._A.sum(axis=1), _kernels._C[: _kernels._A.shape[0]])
    assert _kernels._B5.sum() == pytest.approx(1.0)
    assert _kernels._E.sum() == pytest.approx(0.0, abs=1e-15)

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dissent_sim import collective_rates as cr
from dissent_sim.model_core import DomainError, EnsembleGeometry


def test_kernel_limits():
    p = cr.DipoleKernelParams(1.0)
    # far along the dipole axis the radiative sin(x)/x term vanishes
    assert abs(cr.gamma_kernel([0.0, 0.0, 1e6], p)) < 2e-6
    with pytest.raises(DomainError):
        cr.gamma_kernel([0.0, 0.0, 0.0], p)
    with pytest.raises(DomainError):
        cr.DipoleKernelParams(1.0, p_hat=(1.0, 1.0, 0.0))


@given(st.floats(1e-3, 5.0))
def test_kernel_short_distance_tends_to_one(x):
    # perpendicular to the dipole the pair rate approaches the single-atom rate 1 at r -> 0
    p = cr.DipoleKernelParams(1.0)
    small = cr.gamma_kernel([0.0, 1e-4, 0.0], p)
    assert small == pytest.approx(1.0, abs=1e-6)
    assert abs(cr.gamma_kernel([0.0, x, 0.0], p)) <= 1.0 + 1e-12


@pytest.mark.parametrize("kl", [50.0, 100.0, 300.0])
def test_single_rate_near_asymptote(kl):
    r = cr.averaged_rate_single(kl, cr.DipoleKernelParams(1.0))
    assert r.real_part == pytest.approx(cr.asymptotic_rate(kl), rel=0.05)
    assert abs(r.imag_part / r.real_part) <= 0.1


def test_leading_closed_form_is_dipole_free_average():
    from scipy.integrate import quad

    kl = 3.0
    f = lambda r: r * r * math.exp(-0.5 * r * r) * (math.sin(kl * r) / (kl * r)) ** 2
    ref = 3.0 / math.sqrt(2.0 * math.pi) * quad(f, 0.0, 8.0, limit=400)[0]
    assert cr.closed_form_single_leading(kl) == pytest.approx(ref, rel=1e-10)


def test_polar_rule_reference_agrees_at_moderate_kl():
    kl = 5.0
    ref = cr.averaged_rate_polar_rule(kl, cr.DipoleKernelParams(1.0))
    r = cr.averaged_rate_single(kl, cr.DipoleKernelParams(1.0))
    assert ref.real == pytest.approx(r.real_part, rel=1e-6)
    assert ref.imag == pytest.approx(r.imag_part, rel=1e-5, abs=1e-8)


def test_imaginary_part_shrinks():
    rows = cr.rate_table([50.0, 100.0, 200.0])
    im = [abs(r["imag_part"]) for r in rows]
    assert im[0] > im[1] > im[2]


def test_inter_ensemble_in_flat_regime():
    L, R = 1e-2, 1.0
    p = cr.DipoleKernelParams(1e5)
    inter = cr.averaged_rate_inter(L, R, p)
    single = cr.averaged_rate_single(L, p)
    assert inter.real_part == pytest.approx(single.real_part, rel=0.02)
    assert inter.closed_form.real == pytest.approx(inter.real_part, rel=0.02)
    assert not inter.flagged


def test_inter_ensemble_out_of_regime_flagged():
    inter = cr.averaged_rate_inter(5.0, 100.0, cr.DipoleKernelParams(1.0))
    assert inter.flagged


def test_geometry_dispatch():
    g = EnsembleGeometry(1e6, 50.0, 1.0)
    assert cr.rates_for_geometry(g).real_part == pytest.approx(cr.asymptotic_rate(50.0), rel=0.05)


@pytest.mark.parametrize("kl", [3.0, 20.0])
def test_panel_quadrature_against_scipy(kl):
    from scipy.integrate import quad

    def j(x):
        j0 = math.sin(x) / x
        j1x = (math.sin(x) - x * math.cos(x)) / x**3
        return j0, j1x

    def kernel_a(r):
        j0, j1x = j(kl * r)
        return r * r * math.exp(-0.5 * r * r) * j0 * (j0 - j1x)

    brk = [math.pi * i / kl for i in range(1, int(8.0 * kl / math.pi) + 1)]
    ref = quad(kernel_a, 1e-12, cr.TRUNCATION, points=brk, limit=2000, epsabs=1e-14)[0]
    v, e = cr.integrate_radial(0, np.array([kl, 0.0]), 0.0, cr.TRUNCATION, math.pi / kl)
    assert v.real == pytest.approx(ref, rel=1e-9)
    assert 0 <= e < 1e-8

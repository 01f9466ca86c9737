import math
import warnings

import pytest
from hypothesis import given, strategies as st

from dissent_sim.model_core import (DomainError, EnsembleGeometry, EntanglementReport, RegimeWarning,
                                    SqueezingParams, optical_depth, squeezing_from_detuning,
                                    squeezing_from_z, xi_ideal, z_of)


def test_z_two_gives_known_weights():
    p = squeezing_from_z(2.0)
    assert p.mu == pytest.approx(1.25)
    assert p.nu == pytest.approx(0.75)
    assert xi_ideal(p) == pytest.approx(0.25)


def test_z_one_is_unsqueezed():
    p = squeezing_from_z(1.0)
    assert (p.mu, p.nu) == (1.0, 0.0)
    assert xi_ideal(p) == 1.0


@pytest.mark.parametrize("z", [0.5, 0.0, -2.0, float("nan")])
def test_z_below_one_rejected(z):
    with pytest.raises(DomainError):
        squeezing_from_z(z)


def test_unnormalized_weights_rejected():
    with pytest.raises(DomainError):
        SqueezingParams(1.0, 0.5)
    with pytest.raises(DomainError):
        SqueezingParams(0.5, 0.0)


@given(st.floats(1.0, 1e3))
def test_z_roundtrip(z):
    p = squeezing_from_z(z)
    assert z_of(p) == pytest.approx(z, rel=1e-12)
    assert p.mu**2 - p.nu**2 == pytest.approx(1.0, abs=1e-9 * p.mu**2)


@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_detuning_map_is_normalized(delta, omega):
    p = squeezing_from_detuning(delta, omega)
    assert p.mu**2 - p.nu**2 == pytest.approx(1.0, abs=1e-9 * p.mu**2)
    # mu - nu = sqrt(omega/delta) for positive detuning and Larmor frequency
    assert p.mu - p.nu == pytest.approx(math.sqrt(omega / delta), rel=1e-9)


def test_detuning_map_needs_same_sign():
    with pytest.raises(DomainError):
        squeezing_from_detuning(1.0, -1.0)
    with pytest.raises(DomainError):
        squeezing_from_detuning(0.0, 1.0)


def test_optical_depth_formula():
    g = EnsembleGeometry(n_atoms=4e4, length_L=1e-2, k_laser=1e4)
    assert optical_depth(g) == pytest.approx(3 * 4e4 / (4 * 100.0**2))


def test_geometry_regime_warnings():
    g = EnsembleGeometry(n_atoms=1.0, length_L=1.0, k_laser=1.0, separation_R=100.0)
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        msgs = g.regime_warnings()
    assert len(msgs) == 2
    assert all(issubclass(w.category, RegimeWarning) for w in rec)
    with pytest.raises(DomainError):
        EnsembleGeometry(n_atoms=1.0, length_L=0.0, k_laser=1.0)


def test_report_rejects_zero_spin():
    assert EntanglementReport.from_parts(2.0, 2.0).xi == 0.5
    with pytest.raises(DomainError):
        EntanglementReport.from_parts(1.0, 0.0)

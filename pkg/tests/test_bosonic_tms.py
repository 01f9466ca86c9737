import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dissent_sim.bosonic_tms import (GaussianState, TmsSpec, drift_diffusion_from_jumps, epr_variance,
                                     evolve_gaussian, random_physical_state, steady_covariance,
                                     steady_state, tms_covariance, vacuum)
from dissent_sim.model_core import DomainError, squeezing_from_z, xi_ideal


@pytest.mark.parametrize("r", [0.0, 0.5, 1.0, 2.0])
def test_steady_state_is_two_mode_squeezed(r):
    cov = steady_covariance(TmsSpec(r))
    assert np.allclose(cov, tms_covariance(r), atol=1e-9 * math.cosh(2 * r))
    assert epr_variance(steady_state(TmsSpec(r))) == pytest.approx(math.exp(-2 * r), abs=1e-9)


@given(st.floats(0.0, 2.5), st.floats(0.2, 5.0), st.floats(0.2, 5.0))
def test_steady_state_independent_of_rates(r, ka, kb):
    cov = steady_covariance(TmsSpec(r, ka, kb))
    assert np.allclose(cov, tms_covariance(r), atol=1e-8 * math.cosh(2 * r))


@given(st.floats(0.0, 2.0))
def test_epr_matches_ideal_spin_measure(r):
    assert epr_variance(steady_state(TmsSpec(r))) == pytest.approx(xi_ideal(squeezing_from_z(math.exp(r))), rel=1e-9)


def test_steady_state_is_stationary_under_propagation():
    spec = TmsSpec(1.0)
    s = steady_state(spec)
    later = evolve_gaussian(s, spec, 3.0)
    assert np.allclose(later.cov, s.cov, atol=1e-10)


def test_vacuum_and_physicality():
    assert vacuum().is_physical()
    bad = GaussianState(np.zeros(4), 0.1 * np.eye(4))
    assert not bad.is_physical()
    with pytest.raises(DomainError):
        evolve_gaussian(bad, TmsSpec(0.5), 1.0)
    with pytest.raises(DomainError):
        TmsSpec(-0.1)


@given(st.integers(0, 2**32 - 1))
def test_random_states_are_physical(seed):
    assert random_physical_state(np.random.default_rng(seed)).is_physical()


def test_drift_is_stable():
    drift, diff = drift_diffusion_from_jumps(TmsSpec(1.2, 0.7, 1.9))
    assert np.all(np.linalg.eigvals(drift).real < 0)
    assert np.all(np.linalg.eigvalsh(diff) >= -1e-12)


def test_propagation_stays_physical():
    rng = np.random.default_rng(5)
    s = random_physical_state(rng)
    for t in (0.1, 1.0, 10.0):
        assert evolve_gaussian(s, TmsSpec(1.0), t).is_physical()


def test_relaxation_from_random_states():
    rng = np.random.default_rng(11)
    spec = TmsSpec(1.0)
    target = tms_covariance(1.0)
    for _ in range(5):
        s = random_physical_state(rng, max_squeeze=0.5, max_thermal=1.0)
        out = evolve_gaussian(s, spec, 60.0)
        assert np.max(np.abs(out.cov - target)) < 1e-8
        assert np.max(np.abs(out.mean)) < 1e-8

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dissent_sim.model_core import DomainError, squeezing_from_z
from dissent_sim.multilevel import (MultilevelConfig, PopulationState, ThreeLevelRates, default_time_grid,
                                    evolve_populations, jx_exp, jy_exp_scale, quasi_steady_trace,
                                    rate_matrix, sigma_exp, sigma_j2, stationary_populations,
                                    two_level_embedding_xi, xi_exp_longtime, xi_exp_stationary)
from dissent_sim.two_level_dynamics import rates_probe_only, rates_with_pump

rate = st.floats(0.0, 50.0)
rates_strategy = st.builds(ThreeLevelRates, rate, rate, rate, rate, rate, rate, rate, rate, rate)


@given(rates_strategy, st.floats(0.0, 100.0))
def test_population_conserved(rates, t):
    traj = evolve_populations(PopulationState(0.7, 0.2, 0.1), rates, [0.0, t])
    assert traj.pops[-1].sum() == pytest.approx(1.0, abs=1e-10)


@given(rates_strategy)
def test_rate_matrix_columns_sum_to_zero(rates):
    assert np.allclose(rate_matrix(rates).sum(axis=0), 0.0, atol=1e-12)


def test_literal_variant_leaks():
    r = ThreeLevelRates(up_h=1.0, h_up=1.0, h_down=1.0)
    assert rate_matrix(r, conserve=False).sum(axis=0)[2] == pytest.approx(-2.0)
    traj = evolve_populations(PopulationState(0.0, 0.0, 1.0), r, [0.0, 1.0], conserve=False)
    assert traj.pops[-1].sum() < 1.0


def test_matrix_exponential_against_expm():
    from scipy.linalg import expm

    r = ThreeLevelRates(1.0, 2.0, 0.3, 0.4, 0.5, 0.6, 1.0, 1.0, 0.0)
    y0 = np.array([1.0, 0.0, 0.0])
    traj = evolve_populations(PopulationState(*y0), r, [0.5, 3.0])
    for t, row in zip(traj.t, traj.pops):
        assert np.allclose(row, expm(rate_matrix(r) * t) @ y0, atol=1e-13)


def test_stationary_is_fixed_point():
    r = ThreeLevelRates(1.0, 2.0, 0.3, 0.4, 0.5, 0.6)
    p = stationary_populations(r).as_array()
    assert np.allclose(rate_matrix(r) @ p, 0.0, atol=1e-13)
    assert p.sum() == pytest.approx(1.0)


def test_stationary_without_hidden_channels():
    p = stationary_populations(ThreeLevelRates(up_down=1.0, down_up=3.0))
    assert (p.n_up, p.n_down, p.n_h) == pytest.approx((0.75, 0.25, 0.0))


def test_rates_must_be_nonnegative():
    with pytest.raises(DomainError):
        ThreeLevelRates(up_down=-1.0)
    with pytest.raises(DomainError):
        MultilevelConfig(squeezing_from_z(2.0), f_quantum_number=Fraction(1, 3))


def test_gamma_bar_excludes_repump_channels():
    r = ThreeLevelRates(1, 2, 3, 4, 5, 6, 7, 8, 9)
    assert r.gamma_bar() == 1 + 2 + 3 + 4 + 7 + 8 + 9


def test_spin_mapping_for_spin_half_is_identity():
    assert jx_exp(0.3, 1.0, Fraction(1, 2)) == 0.3
    assert jy_exp_scale(Fraction(1, 2)) == 1.0
    assert sigma_exp(0.7, 0.2, Fraction(1, 2)) == 0.7


@given(st.floats(1.0, 10.0), st.floats(0.0, 100.0), st.floats(0.0, 30.0), st.floats(0.0, 10.0))
def test_embedding_reproduces_two_level_formula(z, d, add, x):
    p = squeezing_from_z(z)
    a, b = two_level_embedding_xi(d, p, rates_with_pump(p, x, add))
    assert a == pytest.approx(b, rel=1e-10)


def test_longtime_closed_form_cross_check():
    cfg = MultilevelConfig(squeezing_from_z(2.0), 30.0, Fraction(4))
    r = ThreeLevelRates(1.0, 2.0, 0.1, 0.1, 0.5, 0.5)
    assert xi_exp_stationary(cfg, r) > 0
    with pytest.raises(DomainError):
        xi_exp_longtime(cfg, r, 1.0, -0.5, 0.7)


def test_sigma_requires_grid_from_zero():
    cfg = MultilevelConfig(squeezing_from_z(2.0))
    r = ThreeLevelRates(1.0, 2.0)
    traj = evolve_populations(PopulationState(1.0, 0.0), r, [0.1, 1.0])
    with pytest.raises(DomainError):
        sigma_j2(traj.t, cfg, r, traj)


def test_trace_without_leakage_matches_two_level_evolution():
    p = squeezing_from_z(2.0)
    two = rates_probe_only(p)
    cfg = MultilevelConfig(p, 30.0, Fraction(1, 2))
    t = default_time_grid(101)
    trace = quasi_steady_trace(cfg, ThreeLevelRates.from_two_level(two), t)
    assert trace.xi[0] == pytest.approx(1.0)
    assert trace.xi[-1] == pytest.approx(two_level_embedding_xi(30.0, p, two)[1], rel=1e-10)

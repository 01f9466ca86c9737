"""Two-level model: noise-rate composition, steady-state entanglement, and the
closed moment equations for the nonlocal spin variances.

Variances are those of the normalized nonlocal operators
``J_{y,+-} = (J_{y,I} +- J_{y,II})/sqrt(2)`` (same for z), so a coherent spin
state has every variance equal to N/4 and ``xi = (var_y_plus + var_z_minus)/|Jx|``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize

from . import _kernels
from ._kernels import moment_rhs  # noqa: F401  re-exported for callers
from .model_core import (
    ConvergenceError,
    DomainError,
    EntanglementReport,
    SqueezingParams,
    squeezing_from_z,
)

RTOL = 1e-9
ATOL = 1e-12
STEADY_TOL = 1e-10
T_CAP = 1e3
CHECK_GAMMA = 2.0  # rate of the state-preserving collective channels C, D


@dataclass(frozen=True)
class RateBreakdown:
    probe_cool: float
    probe_heat: float
    radiative_dephase: float
    additional_dephase: float
    pump_contribution: float = 0.0


@dataclass(frozen=True)
class NoiseRates:
    """Single-particle rates in units of the atomic decay rate."""

    cool: float
    heat: float
    dephase: float
    breakdown: Optional[RateBreakdown] = None

    def __post_init__(self):
        if min(self.cool, self.heat, self.dephase) < 0:
            raise DomainError("rates must be non-negative")

    def tilde_gamma(self) -> float:
        return self.cool + self.heat + self.dephase

    @property
    def polarizing(self) -> bool:
        return self.cool >= self.heat


def rates_probe_only(params: SqueezingParams, gamma_d_add: float = 0.0) -> NoiseRates:
    return rates_with_pump(params, 0.0, gamma_d_add)


def rates_with_pump(params: SqueezingParams, x: float, gamma_d_add: float = 0.0) -> NoiseRates:
    """Probe noise plus a resonant pump of relative strength ``x``.

    The pump adds ``x*mu^2`` to cooling and twice that to radiative dephasing;
    heating is untouched.
    """
    if x < 0:
        raise DomainError("pump parameter x must be >= 0")
    if gamma_d_add < 0:
        raise DomainError("gamma_d_add must be >= 0")
    mu2, nu2 = params.mu**2, params.nu**2
    cool = (1.0 + x) * mu2
    rad = 2.0 * ((1.0 + x) * mu2 + nu2)
    br = RateBreakdown(mu2, nu2, rad, gamma_d_add, x * mu2)
    return NoiseRates(cool, nu2, rad + gamma_d_add, br)


def pump_parameter(omega_pump, gamma_lw, delta, omega_larmor, omega_probe, k) -> float:
    """x = (omega_pump/gamma_lw)^2 * ((delta - omega_larmor)/omega_probe)^2 * k."""
    if gamma_lw == 0 or omega_probe == 0:
        raise DomainError("gamma_lw and omega_probe must be non-zero")
    if not 0 < k <= 1:
        raise DomainError("k must lie in (0, 1]")
    if min(gamma_lw, delta, omega_larmor, omega_probe) <= 0 or omega_pump < 0:
        raise DomainError("frequencies must be positive")
    return (omega_pump / gamma_lw) ** 2 * ((delta - omega_larmor) / omega_probe) ** 2 * k


def steady_polarization(rates: NoiseRates) -> float:
    s = rates.cool + rates.heat
    if s <= 0:
        raise DomainError("cool + heat must be positive")
    return (rates.cool - rates.heat) / s


def xi_from_parts(p2: float, gt: float, d: float, params: SqueezingParams) -> float:
    """Steady measure from polarization, total noise rate and optical depth."""
    if not 0 < p2 <= 1:
        raise DomainError("polarization must lie in (0, 1]")
    if gt < 0 or d < 0:
        raise DomainError("rates and optical depth must be >= 0")
    ideal = (abs(params.mu) - abs(params.nu)) ** 2
    if gt == 0.0:
        # limit taken analytically so the ideal value comes out exactly
        return ideal if d > 0 else 1.0 / p2
    return (gt + d * p2 * p2 * ideal) / (p2 * (gt + d * p2))


def xi_steady(d: float, params: SqueezingParams, rates: NoiseRates) -> float:
    """Long-time entanglement measure of the large-N two-level model."""
    if d < 0:
        raise DomainError("optical depth must be >= 0")
    p2 = steady_polarization(rates)
    if p2 <= 0:
        raise DomainError(f"steady polarization {p2:g} <= 0, measure undefined")
    return xi_from_parts(p2, rates.tilde_gamma(), d, params)


def xi_time(t, d: float, params: SqueezingParams, rates: NoiseRates,
            p2_of_t: Optional[Callable] = None):
    """Quasi-static xi(t): exponential approach at rate Gt + d*P2(t) with P2 frozen
    inside the exponent. ``p2_of_t`` defaults to the stationary polarization."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise DomainError("t must be >= 0")
    if p2_of_t is None:
        p2 = np.full_like(t_arr, steady_polarization(rates))
    else:
        p2 = np.asarray(p2_of_t(t_arr), dtype=float) * np.ones_like(t_arr)
    if np.any(p2 <= 0):
        raise DomainError("polarization must be positive")
    gt = rates.tilde_gamma()
    lam = gt + d * p2
    decay = np.exp(-lam * t_arr)
    ideal = (abs(params.mu) - abs(params.nu)) ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        stat = np.where(lam > 0, (gt + d * p2 * p2 * ideal) / np.where(lam > 0, lam, 1.0), 1.0)
    out = decay / p2 + stat * (1.0 - decay) / p2
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# moment equations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MomentState:
    mean_jx: float
    var_y_plus: float
    var_y_minus: float
    var_z_plus: float
    var_z_minus: float
    n_atoms: float
    time: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.mean_jx, self.var_y_plus, self.var_y_minus,
                         self.var_z_plus, self.var_z_minus])

    @property
    def polarization(self) -> float:
        return 2.0 * self.mean_jx / self.n_atoms

    def report(self) -> EntanglementReport:
        return EntanglementReport.from_parts(2.0 * (self.var_y_plus + self.var_z_minus), self.mean_jx)

    @property
    def xi(self) -> float:
        return self.report().xi

    def cross_correlators(self) -> tuple[float, float]:
        """<J_yI J_yII> and <J_zI J_zII> recovered from the +- variances."""
        return 0.5 * (self.var_y_plus - self.var_y_minus), 0.5 * (self.var_z_plus - self.var_z_minus)


def coherent_state(n_atoms: float = 1e4) -> MomentState:
    q = n_atoms / 4.0
    return MomentState(n_atoms / 2.0, q, q, q, q, n_atoms, 0.0)


def _rhs_args(state: MomentState, d, params, rates, include_collective_cd, entangling, check_gamma):
    cd = d * check_gamma if include_collective_cd else 0.0
    return np.array([state.n_atoms, d, rates.tilde_gamma(), rates.cool, rates.heat,
                     params.mu, params.nu, cd, 1.0 if entangling else 0.0])


@dataclass
class MomentTrajectory:
    t: np.ndarray
    y: np.ndarray  # columns: mean_jx, var_y+, var_y-, var_z+, var_z-
    n_atoms: float

    def state(self, i: int) -> MomentState:
        return MomentState(*self.y[i], n_atoms=self.n_atoms, time=float(self.t[i]))

    def states(self) -> list[MomentState]:
        return [self.state(i) for i in range(len(self.t))]

    @property
    def xi(self) -> np.ndarray:
        return (self.y[:, 1] + self.y[:, 4]) / np.abs(self.y[:, 0])

    @property
    def polarization(self) -> np.ndarray:
        return 2.0 * self.y[:, 0] / self.n_atoms


def evolve_moments(initial: MomentState, d: float, params: SqueezingParams, rates: NoiseRates,
                   t_end: float, include_collective_cd: bool = False, t_eval=None, *,
                   entangling: bool = True, check_gamma: float = CHECK_GAMMA,
                   rtol: float = RTOL, atol: float = ATOL) -> MomentTrajectory:
    """Integrate the moment equations with P2(t) = 2<Jx>/N fed back live.

    ``entangling=False`` switches off the A/B channels so the C/D terms can be
    studied alone. Raises ConvergenceError with the failure time.
    """
    if t_end <= 0:
        raise DomainError("t_end must be positive")
    if min(initial.var_y_plus, initial.var_y_minus, initial.var_z_plus, initial.var_z_minus) < 0:
        raise DomainError("variances must be non-negative")
    if t_eval is None:
        t_eval = np.linspace(0.0, t_end, 201)
    t_eval = np.asarray(t_eval, dtype=float)
    if np.any(np.diff(t_eval) < 0) or t_eval[0] < 0 or t_eval[-1] > t_end * (1 + 1e-12):
        raise DomainError("t_eval must be increasing within [0, t_end]")
    args = _rhs_args(initial, d, params, rates, include_collective_cd, entangling, check_gamma)
    y0 = initial.as_array()
    scale = _rate_scale(args)
    out, status, t_fail = _kernels.dopri5_grid(args, initial.time, y0, t_eval + initial.time,
                                               rtol, atol * max(1.0, initial.n_atoms), 0.01 / scale, 10**7)
    if status != _kernels.STATUS_OK:
        raise ConvergenceError(f"moment integration failed at t={t_fail:.6g}")
    return MomentTrajectory(t_eval + initial.time, out, initial.n_atoms)


def _rate_scale(args) -> float:
    n, d, gt, cool, heat, mu, nu, cd, ab = args
    return max(gt + ab * d, cool + heat, cd * (mu * mu + nu * nu) / n, 1e-3)


def steady_moments(d: float, params: SqueezingParams, rates: NoiseRates,
                   initial: Optional[MomentState] = None, include_collective_cd: bool = False,
                   tol: float = STEADY_TOL, t_cap: float = T_CAP) -> MomentState:
    """Integrate from ``initial`` (coherent state by default) until every moment
    changes by less than ``tol`` relative over one entangling time
    1/(Gt + d*P2)."""
    initial = initial or coherent_state()
    args = _rhs_args(initial, d, params, rates, include_collective_cd, True, CHECK_GAMMA)
    p2 = steady_polarization(rates) if rates.cool + rates.heat > 0 else initial.polarization
    lam = rates.tilde_gamma() + d * max(p2, 0.0)
    window = 1.0 / lam if lam > 0 else 1.0
    y, t, status, converged = _kernels.dopri5_until_steady(
        args, initial.time, initial.as_array(), window, tol, t_cap,
        RTOL, ATOL * max(1.0, initial.n_atoms), 0.01 / _rate_scale(args), 10**7)
    if status != _kernels.STATUS_OK:
        raise ConvergenceError(f"moment integration failed at t={t:.6g}")
    if not converged:
        raise ConvergenceError(f"no steady state by t={t_cap:g}")
    return MomentState(*y, n_atoms=initial.n_atoms, time=t)


# ---------------------------------------------------------------------------
# optimisation over the squeezing parameter
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseModel:
    """Maps squeezing parameters to noise rates (probe + optional pump)."""

    x_pump: float = 0.0
    gamma_d_add: float = 0.0

    def __call__(self, params: SqueezingParams) -> NoiseRates:
        return rates_with_pump(params, self.x_pump, self.gamma_d_add)


def xi_steady_of_z(z: float, d: float, noise_model: Callable[[SqueezingParams], NoiseRates]) -> float:
    params = squeezing_from_z(z)
    return xi_steady(d, params, noise_model(params))


def xi_optimal_over_z(d: float, noise_model: Callable[[SqueezingParams], NoiseRates],
                      z_grid: Sequence[float]) -> tuple[float, float]:
    """Grid scan followed by golden-section refinement inside the bracketing cell.

    The first (smallest-z) grid minimum wins ties.
    """
    grid = np.asarray(sorted(z_grid), dtype=float)
    if grid.size == 0:
        raise DomainError("empty z grid")
    vals = np.array([xi_steady_of_z(z, d, noise_model) for z in grid])
    i = int(np.argmin(vals))
    if i == 0 or i == grid.size - 1 or not (vals[i] < vals[i - 1] and vals[i] < vals[i + 1]):
        return float(grid[i]), float(vals[i])
    f = lambda z: xi_steady_of_z(z, d, noise_model)
    res = optimize.minimize_scalar(f, bracket=(grid[i - 1], grid[i], grid[i + 1]),
                                   method="golden", options={"xtol": 1e-10})
    if res.fun < vals[i]:
        return float(res.x), float(res.fun)
    return float(grid[i]), float(vals[i])

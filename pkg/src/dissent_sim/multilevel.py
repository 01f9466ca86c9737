"""Three-level reduction of a multilevel ground state.

Populations of |up>, |down> and the hidden level |h> follow linear rate
equations; the two-level subsystem {up, down} carries the entangling
dynamics with an effective optical depth d * N2(t) / N. Experimental spin
operators of the full hyperfine manifold (total spin F) are mapped onto the
two-level ones. Populations are fractions of N throughout.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from ._angular import as_half_integer
from .model_core import DomainError, RegimeWarning, SqueezingParams
from .two_level_dynamics import NoiseRates, xi_steady

CONSERVATION_TOL = 1e-10


@dataclass(frozen=True)
class ThreeLevelRates:
    """Single-atom rates in units of Gamma; ``a_b`` is the |a> -> |b> rate."""
    up_down: float = 0.0
    down_up: float = 0.0
    up_h: float = 0.0
    down_h: float = 0.0
    h_up: float = 0.0
    h_down: float = 0.0
    up_up: float = 0.0
    down_down: float = 0.0
    dephase_add: float = 0.0

    def __post_init__(self):
        for name, v in self.__dict__.items():
            if not (v >= 0 and math.isfinite(v)):
                raise DomainError(f"rate {name} must be finite and >= 0, got {v}")

    def gamma_bar(self) -> float:
        """Total noise rate on the two-level subsystem (repump channels excluded)."""
        return (self.up_down + self.down_up + self.up_h + self.down_h
                + self.up_up + self.down_down + self.dephase_add)

    def plus(self, **extra) -> "ThreeLevelRates":
        vals = dict(self.__dict__)
        for k, v in extra.items():
            vals[k] += v
        return ThreeLevelRates(**vals)

    @classmethod
    def from_two_level(cls, rates: NoiseRates) -> "ThreeLevelRates":
        """Embedding with no hidden-level channels; all dephasing goes to ``dephase_add``."""
        return cls(up_down=rates.heat, down_up=rates.cool, dephase_add=rates.dephase)


@dataclass(frozen=True)
class PopulationState:
    n_up: float
    n_down: float
    n_h: float = 0.0
    time: float = 0.0

    def __post_init__(self):
        if min(self.n_up, self.n_down, self.n_h) < 0:
            raise DomainError("populations must be >= 0")

    def as_array(self) -> np.ndarray:
        return np.array([self.n_up, self.n_down, self.n_h])


@dataclass(frozen=True)
class MultilevelConfig:
    squeezing: SqueezingParams
    d0: float = 30.0
    f_quantum_number: Fraction = Fraction(4)

    def __post_init__(self):
        try:
            f = as_half_integer(self.f_quantum_number)
        except ValueError:
            raise DomainError("F must be a half-integer") from None
        if f < Fraction(1, 2):
            raise DomainError("F must be >= 1/2")
        object.__setattr__(self, "f_quantum_number", f)
        if self.d0 < 0:
            raise DomainError("optical depth must be >= 0")

    @property
    def two_f(self) -> float:
        return float(2 * self.f_quantum_number)


def rate_matrix(rates: ThreeLevelRates, conserve: bool = True) -> np.ndarray:
    """Generator M of d/dt (N_up, N_down, N_h) = M (N_up, N_down, N_h).

    ``conserve=False`` returns the variant whose (h, h) entry carries an extra
    factor 2, so population leaks out of the hidden level.
    """
    r = rates
    hh = (r.h_up + r.h_down) * (1.0 if conserve else 2.0)
    return np.array([
        [-(r.up_down + r.up_h), r.down_up, r.h_up],
        [r.up_down, -(r.down_up + r.down_h), r.h_down],
        [r.up_h, r.down_h, -hh],
    ])


@dataclass
class PopulationTrajectory:
    t: np.ndarray
    pops: np.ndarray  # (len(t), 3)

    @property
    def n2(self) -> np.ndarray:
        return self.pops[:, 0] + self.pops[:, 1]

    @property
    def p2(self) -> np.ndarray:
        n2 = self.n2
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(n2 > 0, (self.pops[:, 0] - self.pops[:, 1]) / np.where(n2 > 0, n2, 1.0), np.nan)

    @property
    def n_down(self) -> np.ndarray:
        return self.pops[:, 1]

    def optical_depth(self, d0: float) -> np.ndarray:
        total = self.pops[0].sum()
        return d0 * self.n2 / total


def evolve_populations(p0: PopulationState, rates: ThreeLevelRates, t_grid: Sequence[float],
                       conserve: bool = True) -> PopulationTrajectory:
    """Matrix-exponential propagation; exact for each grid time independently."""
    t = np.asarray(t_grid, dtype=float)
    if np.any(t < 0):
        raise DomainError("times must be >= 0")
    m = rate_matrix(rates, conserve)
    # diagonalize once when possible; fall back to expm for defective matrices
    # or when LAPACK returns inaccurate eigenvectors (badly scaled rates)
    y0 = p0.as_array()
    out = np.empty((t.size, 3))
    w, v = np.linalg.eig(m)
    residual = np.abs(m @ v - v * w).max()
    if np.linalg.cond(v) < 1e8 and residual <= 1e-12 * max(1.0, np.abs(m).max()):
        c = np.linalg.solve(v, y0)
        out[:] = np.real((v[None, :, :] * (np.exp(np.outer(t, w)) * c)[:, None, :]).sum(axis=2))
    else:
        for i, ti in enumerate(t):
            out[i] = linalg.expm(m * ti) @ y0
    out[t == 0.0] = y0
    return PopulationTrajectory(t, out)


def stationary_populations(rates: ThreeLevelRates) -> PopulationState:
    """Normalized null vector of the conserving rate matrix.

    When no channel touches |h> that level is dropped and the answer is the
    two-level balance with N_h = 0.
    """
    m = rate_matrix(rates, True)
    if rates.up_h == rates.down_h == rates.h_up == rates.h_down == 0.0:
        m = m[:2, :2]
    ns = linalg.null_space(m)
    if ns.shape[1] != 1:
        raise DomainError(f"stationary populations not unique (kernel dimension {ns.shape[1]})")
    v = ns[:, 0]
    v = np.concatenate((v / v.sum(), np.zeros(3 - v.size)))
    return PopulationState(*np.clip(v, 0.0, None))


# ---------------------------------------------------------------------------
# spin mapping
# ---------------------------------------------------------------------------

def jx_exp(jx_two_level, n2, f) -> float:
    """Longitudinal spin of the full manifold from the two-level one."""
    return jx_two_level + (2 * float(f) - 1) / 2.0 * n2


def jy_exp_scale(f) -> float:
    """Transverse spin of the full manifold is this factor times the two-level one."""
    return math.sqrt(2 * float(f))


def sigma_exp(sigma_two_level, n_down, f) -> float:
    """Summed nonlocal transverse variance of the full manifold."""
    two_f = 2 * float(f)
    return two_f * sigma_two_level + 2 * (two_f - 1) * n_down


# ---------------------------------------------------------------------------
# variance dynamics and the measurable xi
# ---------------------------------------------------------------------------

def _entangling_ratio(gbar, d_t, p2, params):
    ideal = (abs(params.mu) - abs(params.nu)) ** 2
    return (gbar + d_t * p2 * p2 * ideal) / (gbar + d_t * p2)


def sigma_j2(t, config: MultilevelConfig, rates: ThreeLevelRates, populations: PopulationTrajectory):
    """Quasi-static summed nonlocal variance of the two-level subsystem.

    Relaxes from N2(0) at rate Gbar + d(t) P2(t) toward
    N2(t) (Gbar + d(t) P2^2 (mu - nu)^2) / (Gbar + d(t) P2), with N2, P2, d
    read from ``populations`` at the same times.
    """
    t = np.asarray(t, dtype=float)
    if t.shape != populations.t.shape or np.any(t != populations.t):
        raise DomainError("population trajectory must be sampled on the same grid")
    if t[0] != 0.0:
        raise DomainError("time grid must start at t = 0")
    p2 = populations.p2
    if np.any(~(p2 > 0)):
        raise DomainError("two-level polarization must stay positive")
    n2 = populations.n2
    d_t = populations.optical_depth(config.d0)
    gbar = rates.gamma_bar()
    lam = gbar + d_t * p2
    decay = np.exp(-lam * t)
    return n2[0] * decay + n2 * _entangling_ratio(gbar, d_t, p2, config.squeezing) * (1.0 - decay)


def xi_exp_time(t, config: MultilevelConfig, rates: ThreeLevelRates,
                populations: PopulationTrajectory) -> np.ndarray:
    """Measurable xi along a trajectory, assembled through the spin mapping."""
    sig2 = sigma_j2(t, config, rates, populations)
    f = config.f_quantum_number
    n2, p2 = populations.n2, populations.p2
    num = sigma_exp(sig2, populations.n_down, f)
    jx2 = 0.5 * p2 * n2
    return num / (2.0 * jx_exp(jx2, n2, f))


def xi_exp_longtime(config: MultilevelConfig, rates: ThreeLevelRates, n2: float, p2: float,
                    n_down: float, check: bool = True) -> float:
    """Long-time measurable xi from the closed two-term expression.

    With ``check`` the same value is assembled through the spin mapping and
    the two are required to agree to 1e-12.
    """
    if not p2 > 0:
        raise DomainError("two-level polarization must be positive")
    if not n2 > 0:
        raise DomainError("two-level population vanished")
    two_f = config.two_f
    d_t = config.d0 * n2
    x = _entangling_ratio(rates.gamma_bar(), d_t, p2, config.squeezing)
    direct = x * two_f / (p2 + two_f - 1) + (n_down / n2) * 2 * (two_f - 1) / (p2 + two_f - 1)
    if check:
        f = config.f_quantum_number
        assembled = sigma_exp(n2 * x, n_down, f) / (2.0 * jx_exp(0.5 * p2 * n2, n2, f))
        if abs(assembled - direct) > 1e-12 * max(1.0, abs(direct)):
            raise AssertionError(f"closed form {direct!r} and mapping {assembled!r} disagree")
    return direct


def xi_exp_stationary(config: MultilevelConfig, rates: ThreeLevelRates) -> float:
    pops = stationary_populations(rates)
    n2 = pops.n_up + pops.n_down
    return xi_exp_longtime(config, rates, n2, (pops.n_up - pops.n_down) / n2, pops.n_down)


def default_time_grid(n: int = 601) -> np.ndarray:
    return np.concatenate(([0.0], np.logspace(-3, 3, n)))


@dataclass
class QuasiSteadyTrace:
    t: np.ndarray
    xi: np.ndarray
    populations: PopulationTrajectory
    i_min: int = field(init=False)

    def __post_init__(self):
        self.i_min = int(np.nanargmin(self.xi))

    @property
    def interior_minimum(self) -> bool:
        return 0 < self.i_min < self.xi.size - 1

    @property
    def rises_after_minimum(self) -> bool:
        return bool(self.xi[-1] > self.xi[self.i_min])


def quasi_steady_trace(config: MultilevelConfig, rates: ThreeLevelRates,
                       t_grid: Optional[Sequence[float]] = None,
                       p0: PopulationState = PopulationState(1.0, 0.0, 0.0)) -> QuasiSteadyTrace:
    """xi_exp(t) from a fully polarized start, e.g. without repump fields."""
    if rates.h_up > 0.0 and rates.h_up > rates.up_h:
        warnings.warn("repump present: trace approaches a true steady state", RegimeWarning, stacklevel=2)
    t = default_time_grid() if t_grid is None else np.asarray(t_grid, dtype=float)
    pops = evolve_populations(p0, rates, t)
    return QuasiSteadyTrace(t, xi_exp_time(t, config, rates, pops), pops)


def two_level_embedding_xi(d: float, params: SqueezingParams, rates: NoiseRates) -> tuple[float, float]:
    """(multilevel value at F = 1/2, two-level closed form) for cross-checking."""
    cfg = MultilevelConfig(params, d, Fraction(1, 2))
    return xi_exp_stationary(cfg, ThreeLevelRates.from_two_level(rates)), xi_steady(d, params, rates)

"""Probe, pump and repump rates for 133Cs and their three-level reduction.

The quantization axis is the magnetic field. Ensemble I encodes
|up> = |F=4, m=4>, |down> = |4, 3> and the hidden level |h> = |3, 3>; the
second ensemble is the mirror image and has identical rates.

Dipole amplitudes are normalized so that every excited sublevel has total
squared coupling 1 to the ground manifold (equal linewidths on D1 and D2),
which makes the cycling transition |4,4> -> |5',5'> on D2 exactly 1.
Laser detunings are given relative to the S1/2 F=4 -> excited F_ref line.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from ._angular import ZERO, SqrtRational, wigner_3j, wigner_6j
from .model_core import DomainError, RegimeWarning, SqueezingParams
from .multilevel import (
    MultilevelConfig,
    PopulationState,
    ThreeLevelRates,
    evolve_populations,
    quasi_steady_trace,
    stationary_populations,
    xi_exp_longtime,
)

NUCLEAR_SPIN = Fraction(7, 2)
ELECTRON_J = {"S1/2": Fraction(1, 2), "P1/2": Fraction(1, 2), "P3/2": Fraction(3, 2)}
EXCITED_MANIFOLD = {"D1": "P1/2", "D2": "P3/2"}
GAMMA_LW_MHZ = 5.0
K_DOPPLER = 5.0 / 380.0
RESONANCE_GUARD = 10.0  # probe must sit this many linewidths from every excited level
POPULATION_THRESHOLD = 0.95

# absorption weights per spherical component; "perp" is linear polarization
# orthogonal to the quantization axis
POLARIZATIONS = {
    "sigma+": {1: 1.0},
    "sigma-": {-1: 1.0},
    "pi": {0: 1.0},
    "perp": {1: math.sqrt(0.5), -1: math.sqrt(0.5)},
}

UP = ("S1/2", 4, 4)
DOWN = ("S1/2", 4, 3)
HIDDEN = ("S1/2", 3, 3)


# ---------------------------------------------------------------------------
# level data
# ---------------------------------------------------------------------------

def _parse_levels(text: str) -> dict:
    table = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        manifold, f, offset = line.split()
        table[(manifold, int(f))] = float(offset)
    return table


@lru_cache(maxsize=None)
def _default_levels() -> dict:
    text = resources.files("dissent_sim").joinpath("data/cs133_levels.txt").read_text(encoding="utf-8")
    return _parse_levels(text)


def load_level_table(path: Optional[str] = None) -> dict:
    """{(manifold, F): offset_MHz} from the shipped fixture or a user file."""
    if path is None:
        return dict(_default_levels())
    return _parse_levels(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class HyperfineLevel:
    manifold: str
    f: int
    m_f: int
    energy_offset: float = 0.0

    def __post_init__(self):
        if self.manifold not in ELECTRON_J:
            raise DomainError(f"unknown manifold {self.manifold!r}")
        if abs(self.m_f) > self.f:
            raise DomainError(f"|m_F| = {abs(self.m_f)} exceeds F = {self.f}")

    @classmethod
    def of(cls, manifold: str, f: int, m_f: int, table: Optional[dict] = None) -> "HyperfineLevel":
        table = _default_levels() if table is None else table
        if (manifold, f) not in table:
            raise DomainError(f"no level data for {manifold} F={f}")
        return cls(manifold, f, m_f, table[(manifold, f)])


def excited_levels(manifold: str, table: Optional[dict] = None) -> list[int]:
    table = _default_levels() if table is None else table
    return sorted(f for (man, f) in table if man == manifold)


@dataclass(frozen=True)
class LaserSpec:
    rabi: float
    detuning: float
    polarization: str
    line: str = "D2"
    reference_f: int = 5

    def __post_init__(self):
        if self.rabi < 0:
            raise DomainError("Rabi frequency must be >= 0")
        if self.polarization not in POLARIZATIONS:
            raise DomainError(f"polarization must be one of {sorted(POLARIZATIONS)}")
        if self.line not in EXCITED_MANIFOLD:
            raise DomainError("line must be D1 or D2")


# ---------------------------------------------------------------------------
# couplings
# ---------------------------------------------------------------------------

def coupling_exact(ground: HyperfineLevel, excited: HyperfineLevel, q: int) -> SqrtRational:
    """Normalized amplitude <excited| d_q |ground> as an exact surd."""
    if excited.m_f - ground.m_f != q or abs(q) > 1:
        return ZERO
    j, jp = ELECTRON_J[ground.manifold], ELECTRON_J[excited.manifold]
    f, fp, m, mp = Fraction(ground.f), Fraction(excited.f), Fraction(ground.m_f), Fraction(excited.m_f)
    three = wigner_3j(fp, 1, f, -mp, q, m)
    six = wigner_6j(jp, fp, NUCLEAR_SPIN, f, j, 1)
    if not three or not six:
        return ZERO
    phase = (fp - mp) + (jp + NUCLEAR_SPIN + f + 1)
    sign = -1 if int(phase) % 2 else 1
    norm = SqrtRational(Fraction(sign), (2 * fp + 1) * (2 * f + 1) * (2 * jp + 1))
    return (three * six * norm).simplify()


def coupling_coefficient(ground: HyperfineLevel, excited: HyperfineLevel, polarization: str) -> float:
    """Signed amplitude for one spherical polarization; zero when forbidden."""
    if polarization not in ("sigma+", "sigma-", "pi"):
        raise DomainError("coupling_coefficient takes sigma+, sigma- or pi")
    q = next(iter(POLARIZATIONS[polarization]))
    return float(coupling_exact(ground, excited, q))


def total_decay(excited: HyperfineLevel, table: Optional[dict] = None) -> Fraction:
    """Sum of squared couplings from one excited sublevel to all ground sublevels."""
    total = Fraction(0)
    for f in excited_levels("S1/2", table):
        for m in range(-f, f + 1):
            g = HyperfineLevel.of("S1/2", f, m, table)
            for q in (-1, 0, 1):
                total += coupling_exact(g, excited, q).squared()
    return total


def _detuning(laser: LaserSpec, ground: HyperfineLevel, excited_f: int, table: dict) -> float:
    man = EXCITED_MANIFOLD[laser.line]
    shift_exc = table[(man, excited_f)] - table[(man, laser.reference_f)]
    shift_gnd = ground.energy_offset - table[("S1/2", 4)]
    return laser.detuning - shift_exc + shift_gnd


# ---------------------------------------------------------------------------
# rates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RateResult:
    rate: float
    near_resonance: bool
    min_detuning: float


def _raman_paths(a: HyperfineLevel, b: HyperfineLevel, laser: LaserSpec, table: dict):
    """(emitted q, amplitude product, detuning) for every excited sublevel path a -> e -> b."""
    man = EXCITED_MANIFOLD[laser.line]
    out = []
    for qa, w in POLARIZATIONS[laser.polarization].items():
        mp = a.m_f + qa
        qe = mp - b.m_f
        if abs(qe) > 1:
            continue
        for fp in excited_levels(man, table):
            if abs(mp) > fp:
                continue
            e = HyperfineLevel.of(man, fp, mp, table)
            c = coupling_exact(a, e, qa) * coupling_exact(b, e, qe)
            if c:
                out.append((qe, w * float(c), _detuning(laser, a, fp, table)))
    return out


def probe_transition_rate(a: HyperfineLevel, b: HyperfineLevel, probe: LaserSpec,
                          table: Optional[dict] = None, variant: str = "coherent") -> RateResult:
    """Off-resonant Raman rate |a> -> |b> in MHz.

    ``coherent`` adds the amplitudes c_l / Delta_l of all intermediate levels
    for each emitted polarization and squares the sum. ``incoherent`` adds
    c_l^2 / Delta_l per level as a population-style sum; it is kept for
    comparison and only its ratios are meaningful.
    """
    table = _default_levels() if table is None else table
    paths = _raman_paths(a, b, probe, table)
    if not paths:
        return RateResult(0.0, False, math.inf)
    min_det = min(abs(dl) for _, _, dl in paths)
    near = min_det < RESONANCE_GUARD * GAMMA_LW_MHZ
    if near:
        warnings.warn(f"probe within {min_det:.3g} MHz of an excited level", RegimeWarning, stacklevel=2)
    scale = probe.rabi ** 2 * GAMMA_LW_MHZ
    if variant == "coherent":
        amp = {}
        for qe, c, dl in paths:
            amp[qe] = amp.get(qe, 0.0) + c / dl
        rate = scale * sum(v * v for v in amp.values())
    elif variant == "incoherent":
        rate = scale * sum(c * c / dl for _, c, dl in paths)
    else:
        raise DomainError("variant must be 'coherent' or 'incoherent'")
    return RateResult(rate, near, min_det)


def resonant_rate(a: HyperfineLevel, b: HyperfineLevel, laser: LaserSpec, excited_f: int,
                  k_doppler: float = K_DOPPLER, table: Optional[dict] = None) -> float:
    """Resonant optical pumping rate |a> -> |b> through one excited hyperfine level, in MHz."""
    table = _default_levels() if table is None else table
    man = EXCITED_MANIFOLD[laser.line]
    total = 0.0
    for qa, w in POLARIZATIONS[laser.polarization].items():
        mp = a.m_f + qa
        if abs(mp) > excited_f or abs(mp - b.m_f) > 1:
            continue
        e = HyperfineLevel.of(man, excited_f, mp, table)
        c = coupling_exact(a, e, qa) * coupling_exact(b, e, mp - b.m_f)
        total += w * w * float(c.squared())
    return laser.rabi ** 2 / GAMMA_LW_MHZ * total * k_doppler


# ---------------------------------------------------------------------------
# named probe configurations
# ---------------------------------------------------------------------------

PROBE_Y_BLUE = LaserSpec(rabi=1.0, detuning=700.0, polarization="perp", line="D2", reference_f=5)
# the red-detuned variant is quoted from the lowest D2 level
PROBE_X_RED = LaserSpec(rabi=1.0, detuning=-700.0, polarization="pi", line="D2", reference_f=2)
PROBE_CONFIGS = {"y_blue": PROBE_Y_BLUE, "x_red": PROBE_X_RED}


def _lvl(spec, table=None) -> HyperfineLevel:
    return HyperfineLevel.of(*spec, table=table)


def squeezing_from_rates(cool: float, heat: float) -> SqueezingParams:
    """mu^2 = cool/(cool - heat), nu^2 = heat/(cool - heat)."""
    if not cool > heat >= 0:
        raise DomainError("need cooling rate > heating rate >= 0")
    g = cool - heat
    return SqueezingParams(math.sqrt(cool / g), math.sqrt(heat / g))


def probe_squeezing(probe: LaserSpec, variant: str = "coherent",
                    table: Optional[dict] = None) -> tuple[SqueezingParams, float]:
    """(mu, nu) of the probe and the rate unit Gamma = cool - heat in MHz.

    Cooling is |down> -> |up>. If the labelled heating rate is the larger one
    the encoding is mirrored, as for the second ensemble, and the roles swap.
    """
    cool = probe_transition_rate(_lvl(DOWN, table), _lvl(UP, table), probe, table, variant).rate
    heat = probe_transition_rate(_lvl(UP, table), _lvl(DOWN, table), probe, table, variant).rate
    if heat > cool:
        cool, heat = heat, cool
    return squeezing_from_rates(cool, heat), cool - heat


def z_of_probe(probe: LaserSpec, variant: str = "coherent") -> float:
    params, _ = probe_squeezing(probe, variant)
    return params.mu + abs(params.nu)


def leakage_ratios(probe: LaserSpec = PROBE_Y_BLUE, variant: str = "coherent") -> dict:
    """Rates out of |4,4> to |4,2> and |3,2>, relative to |4,4> -> |4,3>."""
    up = _lvl(UP)
    ref = probe_transition_rate(up, _lvl(DOWN), probe, variant=variant).rate
    return {
        "4,4->4,2": probe_transition_rate(up, _lvl(("S1/2", 4, 2)), probe, variant=variant).rate / ref,
        "4,4->3,2": probe_transition_rate(up, _lvl(("S1/2", 3, 2)), probe, variant=variant).rate / ref,
    }


@dataclass(frozen=True)
class ProbeRates:
    """Probe-induced three-level rates in units of Gamma = cool - heat."""
    rates: ThreeLevelRates
    squeezing: SqueezingParams
    gamma_unit_mhz: float


@lru_cache(maxsize=32)
def probe_three_level(probe: LaserSpec = PROBE_Y_BLUE, variant: str = "coherent") -> ProbeRates:
    params, unit = probe_squeezing(probe, variant)
    up, dn, h = _lvl(UP), _lvl(DOWN), _lvl(HIDDEN)

    def r(a, b):
        return probe_transition_rate(a, b, probe, variant=variant).rate / unit

    rates = ThreeLevelRates(up_down=r(up, dn), down_up=r(dn, up), up_h=r(up, h), down_h=r(dn, h),
                            h_up=r(h, up), h_down=r(h, dn), up_up=r(up, up), down_down=r(dn, dn))
    return ProbeRates(rates, params, unit)


# sigma+ pump on D1 into |4',4> and sigma+ repump on D2 into |4',4>, both per
# unit strength Omega^2 k / (gamma_LW Gamma)
PUMP = LaserSpec(rabi=math.sqrt(GAMMA_LW_MHZ / K_DOPPLER), detuning=0.0, polarization="sigma+", line="D1", reference_f=4)
REPUMP = LaserSpec(rabi=math.sqrt(GAMMA_LW_MHZ / K_DOPPLER), detuning=0.0, polarization="sigma+", line="D2", reference_f=4)


@lru_cache(maxsize=None)
def pump_per_strength() -> dict:
    dn = _lvl(DOWN)
    return {k: resonant_rate(dn, _lvl(t), PUMP, 4) for k, t in (("down_up", UP), ("down_down", DOWN), ("down_h", HIDDEN))}


@lru_cache(maxsize=None)
def repump_per_strength() -> dict:
    h = _lvl(HIDDEN)
    return {k: resonant_rate(h, _lvl(t), REPUMP, 4) for k, t in (("h_up", UP), ("h_down", DOWN), ("h_h", HIDDEN))}


def laser_strength(laser: LaserSpec, gamma_unit_mhz: float, k_doppler: float = K_DOPPLER) -> float:
    """Dimensionless resonant strength Omega^2 k / (gamma_LW Gamma)."""
    return laser.rabi ** 2 * k_doppler / (GAMMA_LW_MHZ * gamma_unit_mhz)


def rates_from_strengths(pump_strength: float, repump_strength: float, gamma_d_add: float = 0.0,
                         probe: LaserSpec = PROBE_Y_BLUE, variant: str = "coherent") -> tuple[ThreeLevelRates, SqueezingParams]:
    if min(pump_strength, repump_strength, gamma_d_add) < 0:
        raise DomainError("strengths and gamma_d_add must be >= 0")
    base = probe_three_level(probe, variant)
    pump = {k: pump_strength * v for k, v in pump_per_strength().items()}
    rep = {k: repump_strength * v for k, v in repump_per_strength().items() if k != "h_h"}
    rates = base.rates.plus(dephase_add=gamma_d_add, **pump, **rep)
    return rates, base.squeezing


def build_three_level_rates(probe: LaserSpec = PROBE_Y_BLUE, pump: Optional[LaserSpec] = None,
                            repump: Optional[LaserSpec] = None, gamma_d_add: float = 0.0,
                            variant: str = "coherent") -> tuple[ThreeLevelRates, SqueezingParams]:
    """Three-level rates from physical laser settings (Rabi frequencies in MHz)."""
    unit = probe_three_level(probe, variant).gamma_unit_mhz
    s_pump = laser_strength(pump, unit) if pump is not None else 0.0
    s_rep = laser_strength(repump, unit) if repump is not None else 0.0
    return rates_from_strengths(s_pump, s_rep, gamma_d_add, probe, variant)


def _up_fraction(rates: ThreeLevelRates, t_grid: Optional[np.ndarray]) -> float:
    st = stationary_populations(rates)
    worst = st.n_up / (st.n_up + st.n_down)
    if t_grid is not None:
        traj = evolve_populations(PopulationState(1.0, 0.0, 0.0), rates, t_grid)
        worst = min(worst, float(np.min(traj.pops[:, 0] / traj.n2)))
    return worst


def optimal_pump_strength(x_repump: float, probe: LaserSpec = PROBE_Y_BLUE, variant: str = "coherent",
                          threshold: float = POPULATION_THRESHOLD,
                          t_grid: Optional[Sequence[float]] = None) -> float:
    """Smallest pump strength keeping N_up / N2 >= threshold, with repump = x_repump * pump.

    The fraction is checked in the stationary state and, if ``t_grid`` is
    given, along the evolution from the fully polarized state.
    """
    grid = None if t_grid is None else np.asarray(t_grid, dtype=float)

    def excess(s):
        rates, _ = rates_from_strengths(s, x_repump * s, 0.0, probe, variant)
        return _up_fraction(rates, grid) - threshold

    lo, hi = 1e-6, 1.0
    while excess(hi) < 0:
        hi *= 4.0
        if hi > 1e9:
            raise DomainError("threshold unreachable with the available pump channels")
    if excess(lo) >= 0:
        return lo
    return optimize.brentq(excess, lo, hi, xtol=1e-12, rtol=1e-12)


@dataclass(frozen=True)
class SweepRow:
    x_repump: float
    pump_strength: float
    n2: float
    p2: float
    xi: dict  # gamma_d_add -> xi_exp


def repump_sweep(x_repump_grid: Sequence[float], gamma_d_add: Sequence[float] = (0.0,), d0: float = 30.0,
                 probe: LaserSpec = PROBE_Y_BLUE, variant: str = "coherent", f=4) -> list[SweepRow]:
    """Stationary measurable xi versus repump strength at the optimal pump."""
    rows = []
    for x in x_repump_grid:
        if x < 0:
            raise DomainError("x_repump must be >= 0")
        s = optimal_pump_strength(x, probe, variant)
        xis = {}
        n2 = p2 = float("nan")
        for add in gamma_d_add:
            rates, params = rates_from_strengths(s, x * s, add, probe, variant)
            pops = stationary_populations(rates)
            n2 = pops.n_up + pops.n_down
            p2 = (pops.n_up - pops.n_down) / n2
            cfg = MultilevelConfig(params, d0, Fraction(f))
            xis[add] = xi_exp_longtime(cfg, rates, n2, p2, pops.n_down)
        rows.append(SweepRow(float(x), s, n2, p2, xis))
    return rows


def quasi_steady_cesium(d0: float = 30.0, gamma_d_add: float = 0.0, t_grid=None,
                        probe: LaserSpec = PROBE_Y_BLUE, variant: str = "coherent"):
    """Trace without repump, at the pump that keeps 95% polarization along the way."""
    from .multilevel import default_time_grid

    t = default_time_grid() if t_grid is None else np.asarray(t_grid, dtype=float)
    s = optimal_pump_strength(0.0, probe, variant, t_grid=t)
    rates, params = rates_from_strengths(s, 0.0, gamma_d_add, probe, variant)
    return quasi_steady_trace(MultilevelConfig(params, d0, Fraction(4)), rates, t), s

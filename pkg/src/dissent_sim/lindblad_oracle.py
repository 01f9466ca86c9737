"""Exact density-matrix oracle for the two-ensemble master equation at small N.

Basis: ensemble-I atoms first, then ensemble-II atoms, each atom a qubit with
``|up> = 0``. Index bits run most-significant-first over atoms, matching a
Kronecker product in that order. Superoperators act on row-major vectorized
density matrices, ``vec(rho)[i*dim + j] = rho[i, j]``.

Two exact reductions keep n = 4 cheap:

* every jump shifts the charge ``sum_II(down) - sum_I(down)`` by a fixed
  amount, so the steady state lives in the block of equal ket and bra charge;
* with identical rates inside each ensemble the generator commutes with atom
  permutations, so states that start symmetric stay in the span of orbit
  indicators. Orbits are labelled by how many atoms of each ensemble carry
  each (ket bit, bra bit) pair.

The reduced generator is ``D^-1 E^T L E`` with E the orbit-indicator matrix
and D the orbit sizes; it is exact on the symmetric subspace.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy import linalg

from . import _kernels
from .model_core import ConvergenceError, DomainError, EntanglementReport, SqueezingParams
from .two_level_dynamics import CHECK_GAMMA, NoiseRates, steady_polarization, xi_steady

MAX_N = 5
MAX_N_SUPEROPERATOR = 4
HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
POSITIVITY_TOL = 1e-8
KERNEL_TOL = 1e-9
STEADY_AGREEMENT = 1e-8


@dataclass(frozen=True)
class SmallSystem:
    n_per_ensemble: int

    def __post_init__(self):
        if not (isinstance(self.n_per_ensemble, (int, np.integer)) and 1 <= self.n_per_ensemble <= MAX_N):
            raise DomainError(f"n_per_ensemble must be an integer in 1..{MAX_N}")

    @property
    def n_sites(self) -> int:
        return 2 * self.n_per_ensemble

    @property
    def dimension(self) -> int:
        return 2 ** self.n_sites

    @cached_property
    def down_bits(self) -> np.ndarray:
        """(dimension, n_sites) array, 1 where the atom is down."""
        idx = np.arange(self.dimension)
        shifts = self.n_sites - 1 - np.arange(self.n_sites)
        return ((idx[:, None] >> shifts) & 1).astype(np.int8)

    @cached_property
    def charge(self) -> np.ndarray:
        n = self.n_per_ensemble
        b = self.down_bits.astype(np.int64)
        return b[:, n:].sum(axis=1) - b[:, :n].sum(axis=1)

    def lowering(self, site: int) -> sp.csr_matrix:
        """|up><down| on one atom."""
        bit = 1 << (self.n_sites - 1 - site)
        src = np.flatnonzero(self.down_bits[:, site] == 1)
        return sp.csr_matrix((np.ones(src.size), (src - bit, src)),
                             shape=(self.dimension, self.dimension), dtype=complex)

    def projector_down(self, site: int) -> sp.csr_matrix:
        return sp.diags(self.down_bits[:, site].astype(complex), format="csr")

    def projector_up(self, site: int) -> sp.csr_matrix:
        return sp.diags((1 - self.down_bits[:, site]).astype(complex), format="csr")

    def ensemble_sites(self, which: int) -> range:
        n = self.n_per_ensemble
        return range(0, n) if which == 0 else range(n, 2 * n)

    @cached_property
    def spin_operators(self) -> dict:
        """Collective Jx, Jy, Jz per ensemble as sparse matrices."""
        out = {}
        for which, tag in ((0, "I"), (1, "II")):
            jx = jy = jz = None
            for s in self.ensemble_sites(which):
                lo = self.lowering(s)
                hi = lo.getH().tocsr()
                sx = 0.5 * (self.projector_up(s) - self.projector_down(s))
                sy = 0.5 * (lo + hi)
                sz = 0.5j * (hi - lo)
                jx = sx if jx is None else jx + sx
                jy = sy if jy is None else jy + sy
                jz = sz if jz is None else jz + sz
            out["x" + tag], out["y" + tag], out["z" + tag] = jx.tocsr(), jy.tocsr(), jz.tocsr()
        return out


@dataclass(frozen=True)
class ChannelFlags:
    entangling: bool = True
    local: bool = True
    collective_cd: bool = False
    check_gamma: float = CHECK_GAMMA


def jump_operators(sys: SmallSystem, d: float, params: SqueezingParams, rates: NoiseRates,
                   flags: ChannelFlags = ChannelFlags()) -> list[tuple[float, sp.csr_matrix]]:
    """(rate, operator) pairs; each enters as rate * (L rho L^dag - {L^dag L, rho}/2)."""
    if d < 0:
        raise DomainError("optical depth must be >= 0")
    n = sys.n_per_ensemble
    mu, nu = params.mu, params.nu
    lo = [sys.lowering(s) for s in range(sys.n_sites)]
    hi = [m.getH().tocsr() for m in lo]
    one_i, one_ii = sys.ensemble_sites(0), sys.ensemble_sites(1)
    norm = 1.0 / math.sqrt(n)
    jumps = []
    if flags.entangling and d > 0:
        a = norm * (mu * sum(lo[s] for s in one_i) + nu * sum(hi[s] for s in one_ii))
        b = norm * (mu * sum(lo[s] for s in one_ii) + nu * sum(hi[s] for s in one_i))
        jumps += [(d, a.tocsr()), (d, b.tocsr())]
    if flags.collective_cd and d > 0:
        dn = [sys.projector_down(s) for s in range(sys.n_sites)]
        up = [sys.projector_up(s) for s in range(sys.n_sites)]
        c = norm * (mu * sum(dn[s] for s in one_i) + nu * sum(up[s] for s in one_ii))
        dd = norm * (mu * sum(dn[s] for s in one_ii) + nu * sum(up[s] for s in one_i))
        rate = d * flags.check_gamma
        jumps += [(rate, c.tocsr()), (rate, dd.tocsr())]
    if flags.local:
        for s in range(sys.n_sites):
            if rates.cool > 0:
                jumps.append((rates.cool, lo[s]))
            if rates.heat > 0:
                jumps.append((rates.heat, hi[s]))
            if rates.dephase > 0:
                jumps.append((rates.dephase, sys.projector_down(s)))
    return [(g, op) for g, op in jumps if g > 0]


def apply_generator(jumps, rho):
    """Lindblad generator applied to a dense matrix."""
    out = np.zeros(rho.shape, dtype=complex)
    for g, op in jumps:
        left = op @ rho
        # X A^dag = (A X^dag)^dag keeps every product sparse-times-dense
        out += g * (op @ left.conj().T).conj().T
        h = (op.getH() @ op).tocsr()
        out -= 0.5 * g * (h @ rho + (h @ rho.conj().T).conj().T)
    return out


@dataclass
class Liouvillian:
    """Sparse generator over the full Liouville space plus the jump list."""
    sys: SmallSystem
    jumps: list
    matrix: sp.csr_matrix

    def to_dense(self) -> np.ndarray:
        if self.sys.n_per_ensemble > 2:
            raise DomainError("dense superoperator only for n_per_ensemble <= 2")
        return self.matrix.toarray()

    @cached_property
    def symmetric(self) -> "SymmetricBlock":
        return SymmetricBlock.from_liouvillian(self)


def build_liouvillian(sys: SmallSystem, d: float, params: SqueezingParams, rates: NoiseRates,
                      flags: ChannelFlags = ChannelFlags()) -> Liouvillian:
    """Lindblad generator with collective A, B at rate d and local channels at the
    cool/heat/dephase rates; optional state-preserving C, D at rate d*check_gamma."""
    if sys.n_per_ensemble > MAX_N_SUPEROPERATOR:
        raise DomainError(f"superoperator budget: n_per_ensemble <= {MAX_N_SUPEROPERATOR}; "
                          "use propagate_density for larger systems")
    jumps = jump_operators(sys, d, params, rates, flags)
    dim = sys.dimension
    eye = sp.identity(dim, format="csr", dtype=complex)
    total = sp.csr_matrix((dim * dim, dim * dim), dtype=complex)
    if jumps:
        h = sum(g * (op.getH() @ op) for g, op in jumps).tocsr()
        terms = [g * sp.kron(op, op.conj(), format="csr") for g, op in jumps]
        total = (sum(terms) - 0.5 * sp.kron(h, eye, format="csr")
                 - 0.5 * sp.kron(eye, h.T, format="csr")).tocsr()
    total.eliminate_zeros()
    return Liouvillian(sys, jumps, total)


def trace_functional(sys: SmallSystem) -> np.ndarray:
    dim = sys.dimension
    v = np.zeros(dim * dim)
    v[np.arange(dim) * (dim + 1)] = 1.0
    return v


# ---------------------------------------------------------------------------
# symmetric, charge-conserving block
# ---------------------------------------------------------------------------

def _compositions(n: int) -> list[tuple[int, int, int, int]]:
    return [c for c in itertools.product(range(n + 1), repeat=4) if sum(c) == n]


def orbit_labels(sys: SmallSystem) -> tuple[np.ndarray, np.ndarray]:
    """Label each (ket, bra) pair by its permutation orbit; -1 off the equal-charge block.

    Returns (labels of shape (dim, dim), orbit sizes).
    """
    n = sys.n_per_ensemble
    bits = sys.down_bits.astype(np.int64)
    comp = {c: i for i, c in enumerate(_compositions(n))}
    ncomp = len(comp)
    # per ensemble, counts of pair types t = 2*ket_bit + bra_bit
    code = np.zeros((sys.dimension, sys.dimension), dtype=np.int64)
    for which in (0, 1):
        counts = np.zeros((4, sys.dimension, sys.dimension), dtype=np.int64)
        for s in sys.ensemble_sites(which):
            t = 2 * bits[:, s][:, None] + bits[:, s][None, :]
            for k in range(4):
                counts[k] += t == k
        key = ((counts[0] * (n + 1) + counts[1]) * (n + 1) + counts[2]) * (n + 1) + counts[3]
        lut = np.full((n + 1) ** 4, -1, dtype=np.int64)
        for c, i in comp.items():
            lut[((c[0] * (n + 1) + c[1]) * (n + 1) + c[2]) * (n + 1) + c[3]] = i
        code = code * ncomp + lut[key]
    same = sys.charge[:, None] == sys.charge[None, :]
    used, labels = np.unique(code[same], return_inverse=True)
    out = np.full(code.shape, -1, dtype=np.int64)
    out[same] = labels
    sizes = np.bincount(labels, minlength=used.size)
    return out, sizes


@dataclass
class SymmetricBlock:
    """Generator restricted to permutation-symmetric operators of equal charge."""
    sys: SmallSystem
    labels: np.ndarray
    sizes: np.ndarray
    generator: np.ndarray  # dense (m, m)

    @classmethod
    def from_liouvillian(cls, liou: Liouvillian) -> "SymmetricBlock":
        sys = liou.sys
        labels, sizes = orbit_labels(sys)
        flat = labels.ravel()
        members = np.flatnonzero(flat >= 0)
        m = sizes.size
        embed = sp.csr_matrix((np.ones(members.size), (members, flat[members])),
                              shape=(flat.size, m))
        sector = liou.matrix[members]
        projected = (embed[members].T @ (sector @ embed)).toarray()
        return cls(sys, labels, sizes, projected / sizes[:, None])

    @property
    def size(self) -> int:
        return self.sizes.size

    @cached_property
    def trace_weights(self) -> np.ndarray:
        dim = self.sys.dimension
        diag = self.labels[np.arange(dim), np.arange(dim)]
        w = np.zeros(self.size)
        np.add.at(w, diag, 1.0)
        return w

    def reduce(self, rho: np.ndarray) -> np.ndarray:
        """Orbit averages of a dense density matrix."""
        mask = self.labels >= 0
        acc = np.zeros(self.size, dtype=complex)
        np.add.at(acc, self.labels[mask], rho[mask])
        return acc / self.sizes

    def expand(self, coeffs: np.ndarray) -> np.ndarray:
        rho = np.zeros(self.labels.shape, dtype=complex)
        mask = self.labels >= 0
        rho[mask] = coeffs[self.labels[mask]]
        return rho

    def kernel_dimension(self, tol: float = KERNEL_TOL) -> int:
        s = linalg.svdvals(self.generator * np.sqrt(self.sizes)[:, None] / np.sqrt(self.sizes)[None, :])
        return int(np.sum(s <= tol * max(s.max(), 1e-300)))

    def null_vector(self) -> np.ndarray:
        dim_k = self.kernel_dimension()
        if dim_k != 1:
            raise ConvergenceError(f"generator kernel has dimension {dim_k}; steady state not unique")
        rows = np.vstack([self.trace_weights[None, :].astype(complex), self.generator])
        rhs = np.zeros(rows.shape[0], dtype=complex)
        rhs[0] = 1.0
        sol, *_ = linalg.lstsq(rows, rhs)
        return sol

    def propagate(self, coeffs0: np.ndarray, times: Sequence[float]) -> np.ndarray:
        """Exact exponential propagation, one row per requested time."""
        times = np.asarray(times, dtype=float)
        out = np.empty((times.size, self.size), dtype=complex)
        prev, cur = 0.0, np.asarray(coeffs0, dtype=complex)
        for i, t in enumerate(times):
            if t < prev:
                raise DomainError("times must be non-decreasing")
            if t > prev:
                cur = linalg.expm(self.generator * (t - prev)) @ cur
            out[i] = cur
            prev = t
        return out

    @cached_property
    def relaxation_gap(self) -> float:
        ev = linalg.eigvals(self.generator)
        re = np.sort(-ev.real)
        nonzero = re[re > KERNEL_TOL * max(1.0, np.abs(ev).max())]
        return float(nonzero[0]) if nonzero.size else 0.0


# ---------------------------------------------------------------------------
# density operators and measures
# ---------------------------------------------------------------------------

@dataclass
class DensityOperator:
    matrix: np.ndarray

    def validate(self) -> "DensityOperator":
        m = self.matrix
        if np.abs(m - m.conj().T).max() > HERMITIAN_TOL:
            raise DomainError("density operator not Hermitian")
        if abs(np.trace(m) - 1.0) > TRACE_TOL:
            raise DomainError("density operator trace differs from 1")
        if np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min() < -POSITIVITY_TOL:
            raise DomainError("density operator has a negative eigenvalue")
        return self

    @classmethod
    def clean(cls, m: np.ndarray) -> "DensityOperator":
        m = 0.5 * (m + m.conj().T)
        return cls(m / np.trace(m).real)


def coherent_state(sys: SmallSystem) -> DensityOperator:
    """All atoms up: Jx = +n/2 in each ensemble."""
    rho = np.zeros((sys.dimension, sys.dimension), dtype=complex)
    rho[0, 0] = 1.0
    return DensityOperator(rho)


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    diff = a - b
    return 0.5 * float(np.abs(np.linalg.eigvalsh(0.5 * (diff + diff.conj().T))).sum())


def _expect(op, rho) -> complex:
    # Tr(op rho) without forming the product
    return complex(op.multiply(rho.T).sum())


def nonlocal_moments(sys: SmallSystem, rho: np.ndarray) -> dict:
    """Exact expectation values in the conventions of the moment equations."""
    ops = sys.spin_operators
    inv = 1.0 / math.sqrt(2.0)

    def var(op):
        m = _expect(op, rho).real
        return _expect((op @ op).tocsr(), rho).real - m * m

    yp = inv * (ops["yI"] + ops["yII"])
    ym = inv * (ops["yI"] - ops["yII"])
    zp = inv * (ops["zI"] + ops["zII"])
    zm = inv * (ops["zI"] - ops["zII"])
    return {
        "jx_I": _expect(ops["xI"], rho).real,
        "jx_II": _expect(ops["xII"], rho).real,
        "var_y_plus": var(yp.tocsr()),
        "var_y_minus": var(ym.tocsr()),
        "var_z_plus": var(zp.tocsr()),
        "var_z_minus": var(zm.tocsr()),
    }


def xi_of_density(sys: SmallSystem, rho) -> EntanglementReport:
    """Exact measure: [var(JyI + JyII) + var(JzI - JzII)] / (|<JxI>| + |<JxII>|)."""
    m = rho.matrix if isinstance(rho, DensityOperator) else np.asarray(rho)
    mom = nonlocal_moments(sys, m)
    total = abs(mom["jx_I"]) + abs(mom["jx_II"])
    if total < 1e-12:
        raise DomainError("longitudinal spin vanishes; measure undefined")
    variance_sum = 2.0 * (mom["var_y_plus"] + mom["var_z_minus"])
    return EntanglementReport.from_parts(variance_sum, 0.5 * total)


# ---------------------------------------------------------------------------
# steady state and propagation
# ---------------------------------------------------------------------------

@dataclass
class SteadyResult:
    rho: DensityOperator
    crosscheck_distance: float
    settle_time: float


def steady_state(sys: SmallSystem, generator: Liouvillian, crosscheck: bool = True) -> SteadyResult:
    """Unique steady state from the null space of the symmetric block.

    The null vector is cross-checked against exact propagation of the
    all-up state over many relaxation times; disagreement beyond 1e-8 in
    trace distance raises.
    """
    block = generator.symmetric
    vec = block.null_vector()
    rho = DensityOperator.clean(block.expand(vec))
    dist, t_settle = 0.0, 0.0
    if crosscheck:
        gap = block.relaxation_gap
        if gap <= 0:
            raise ConvergenceError("no relaxation: generator has no decaying modes")
        t_settle = 40.0 / gap
        v0 = block.reduce(coherent_state(sys).matrix)
        late = block.propagate(v0, [t_settle])[-1]
        dist = trace_distance(block.expand(late), rho.matrix)
        if dist > STEADY_AGREEMENT:
            raise ConvergenceError(f"null space and propagation disagree by {dist:.3g}")
    rho.validate()
    return SteadyResult(rho, dist, t_settle)


def propagate_density(sys: SmallSystem, jumps, rho0: np.ndarray, t_eval: Sequence[float],
                      rtol: float = 1e-8, atol: float = 1e-11, max_steps: int = 10**6) -> np.ndarray:
    """Adaptive Dormand-Prince propagation of a dense density matrix.

    Uses the same tableau as the moment integrator, with the error norm taken
    over all matrix elements. Works for every supported system size, including
    those too large for a superoperator.
    """
    t_eval = np.asarray(t_eval, dtype=float)
    if np.any(np.diff(t_eval) < 0) or t_eval[0] < 0:
        raise DomainError("t_eval must be non-decreasing and >= 0")
    rate = sum(g * float(abs(op).sum(axis=0).max()) ** 2 for g, op in jumps) or 1.0
    y = np.asarray(rho0, dtype=complex).copy()
    t, h = 0.0, 0.1 / rate
    out = np.empty((t_eval.size,) + y.shape, dtype=complex)
    f = apply_generator(jumps, y)
    steps = 0
    a_tab, b5, err_w, c = _kernels._A, _kernels._B5, _kernels._E, _kernels._C
    for i, target in enumerate(t_eval):
        while t < target:
            if steps >= max_steps:
                raise ConvergenceError(f"density propagation exceeded {max_steps} steps at t={t:.6g}")
            step = min(h, target - t)
            k = [f]
            for s in range(1, 7):
                ys = y + step * sum(a_tab[s, j] * k[j] for j in range(s) if a_tab[s, j] != 0.0)
                k.append(apply_generator(jumps, ys))
            y_new = y + step * sum(b5[j] * k[j] for j in range(7) if b5[j] != 0.0)
            err_vec = step * sum(err_w[j] * k[j] for j in range(7) if err_w[j] != 0.0)
            scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            err = float(np.sqrt(np.mean(np.abs(err_vec / scale) ** 2)))
            steps += 1
            if err <= 1.0:
                t += step
                y = y_new
                f = k[6]
            h = step * min(5.0, max(0.2, 0.9 * (err + 1e-300) ** -0.2))
            if h < 1e-14 * max(1.0, t):
                raise ConvergenceError(f"step size underflow at t={t:.6g}")
        out[i] = y
    return out


# ---------------------------------------------------------------------------
# studies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    xi_oracle: float
    xi_formula: float
    deviation: float


def oracle_xi(n: int, d: float, params: SqueezingParams, rates: NoiseRates,
              flags: ChannelFlags = ChannelFlags()) -> float:
    sys = SmallSystem(n)
    res = steady_state(sys, build_liouvillian(sys, d, params, rates, flags))
    return xi_of_density(sys, res.rho).xi


def finite_n_convergence_study(params: SqueezingParams, rates: NoiseRates, d: float,
                               n_list: Sequence[int]) -> list[ConvergenceRow]:
    """Oracle steady-state xi against the large-N formula, one row per n."""
    n_list = list(n_list)
    if not n_list or any(not 1 <= int(n) <= MAX_N_SUPEROPERATOR for n in n_list):
        raise DomainError(f"n values must lie in 1..{MAX_N_SUPEROPERATOR}")
    formula = xi_steady(d, params, rates)
    rows = []
    for n in n_list:
        x = oracle_xi(int(n), d, params, rates)
        rows.append(ConvergenceRow(int(n), x, formula, abs(x - formula)))
    return rows


def deviations_monotone(rows: Sequence[ConvergenceRow], slack: float = 1e-12) -> bool:
    devs = [r.deviation for r in sorted(rows, key=lambda r: r.n)]
    return all(b <= a + slack for a, b in zip(devs, devs[1:]))


def cd_drift(n: int, d: float, params: SqueezingParams, rates: NoiseRates,
             times: Sequence[float]) -> float:
    """Largest |xi(t) - xi(0)| when only the C/D channels act on the A/B steady state."""
    sys = SmallSystem(n)
    start = steady_state(sys, build_liouvillian(sys, d, params, rates), crosscheck=False).rho
    cd_only = build_liouvillian(sys, d, params, rates,
                                ChannelFlags(entangling=False, local=False, collective_cd=True))
    block = cd_only.symmetric
    traj = block.propagate(block.reduce(start.matrix), times)
    xi0 = xi_of_density(sys, start).xi
    return max(abs(xi_of_density(sys, block.expand(v)).xi - xi0) for v in traj)


def oracle_moment_trajectory(n: int, d: float, params: SqueezingParams, rates: NoiseRates,
                             times: Sequence[float], flags: ChannelFlags = ChannelFlags()) -> list[dict]:
    """Exact nonlocal moments along the evolution from the all-up state."""
    sys = SmallSystem(n)
    block = build_liouvillian(sys, d, params, rates, flags).symmetric
    traj = block.propagate(block.reduce(coherent_state(sys).matrix), times)
    return [nonlocal_moments(sys, block.expand(v)) for v in traj]


def swap_operator(sys: SmallSystem, site_a: int, site_b: int) -> sp.csr_matrix:
    bits = sys.down_bits
    pa, pb = sys.n_sites - 1 - site_a, sys.n_sites - 1 - site_b
    idx = np.arange(sys.dimension)
    ba, bb = bits[:, site_a].astype(np.int64), bits[:, site_b].astype(np.int64)
    target = idx - (ba << pa) - (bb << pb) + (bb << pa) + (ba << pb)
    return sp.csr_matrix((np.ones(idx.size), (target, idx)), shape=(sys.dimension,) * 2)


def full_sector_steady_state(sys: SmallSystem, generator: Liouvillian) -> DensityOperator:
    """Steady state from the equal-charge block without the symmetry reduction."""
    from scipy.sparse.linalg import spsolve

    same = (sys.charge[:, None] == sys.charge[None, :]).ravel()
    idx = np.flatnonzero(same)
    block = generator.matrix[idx][:, idx].tolil()
    tr = trace_functional(sys)[idx]
    block[0, :] = tr
    rhs = np.zeros(idx.size, dtype=complex)
    rhs[0] = 1.0
    sol = spsolve(block.tocsc(), rhs)
    rho = np.zeros(sys.dimension ** 2, dtype=complex)
    rho[idx] = sol
    return DensityOperator.clean(rho.reshape(sys.dimension, sys.dimension))


def factorized_xi(rates: NoiseRates) -> float:
    """Without collective channels the steady state is a product state with xi = 1/P."""
    return 1.0 / steady_polarization(rates)

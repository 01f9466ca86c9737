"""Gaussian two-mode dynamics under the ideal nonlocal damping channels.

Quadrature ordering is (x_a, p_a, x_b, p_b) with x = (a + a^dag)/sqrt(2), so the
vacuum has variance 1/2 per quadrature. The jump operators are

    A~ = cosh(r) a + sinh(r) b^dag,    B~ = cosh(r) b + sinh(r) a^dag,

damped at rates ``kappa_a`` and ``kappa_b``. Both are linear in the
quadratures, so the covariance obeys a closed Lyapunov-type equation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .model_core import DomainError

PHYSICALITY_TOL = 1e-9

# [R_k, R_l] = i * SYMPLECTIC[k, l]
SYMPLECTIC = np.array([[0.0, 1.0, 0.0, 0.0],
                       [-1.0, 0.0, 0.0, 0.0],
                       [0.0, 0.0, 0.0, 1.0],
                       [0.0, 0.0, -1.0, 0.0]])


@dataclass(frozen=True)
class TmsSpec:
    r: float
    kappa_a: float = 1.0
    kappa_b: float = 1.0

    def __post_init__(self):
        if not self.r >= 0:
            raise DomainError("squeezing r must be >= 0")
        if not (self.kappa_a > 0 and self.kappa_b > 0):
            raise DomainError("damping rates must be positive")

    @property
    def mu(self) -> float:
        return math.cosh(self.r)

    @property
    def nu(self) -> float:
        return math.sinh(self.r)


@dataclass(frozen=True)
class GaussianState:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(4)
        cov = np.asarray(self.cov, dtype=float).reshape(4, 4)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    def is_physical(self, tol: float = PHYSICALITY_TOL) -> bool:
        if not np.allclose(self.cov, self.cov.T, atol=tol):
            return False
        # uncertainty principle: cov + (i/2) Omega >= 0
        eig = np.linalg.eigvalsh(self.cov + 0.5j * SYMPLECTIC)
        return bool(eig.min() >= -tol)

    def validate(self) -> "GaussianState":
        if not self.is_physical():
            raise DomainError("covariance violates the uncertainty relation")
        return self


def vacuum() -> GaussianState:
    return GaussianState(np.zeros(4), 0.5 * np.eye(4))


def tms_covariance(r: float) -> np.ndarray:
    """Covariance of the pure two-mode squeezed state annihilated by A~ and B~."""
    c, s = 0.5 * math.cosh(2 * r), 0.5 * math.sinh(2 * r)
    return np.array([[c, 0.0, -s, 0.0],
                     [0.0, c, 0.0, s],
                     [-s, 0.0, c, 0.0],
                     [0.0, s, 0.0, c]])


def _jump_rows(spec: TmsSpec) -> list[tuple[float, np.ndarray]]:
    # a = (x_a + i p_a)/sqrt2, a^dag = (x_a - i p_a)/sqrt2
    h = 1.0 / math.sqrt(2.0)
    mu, nu = spec.mu, spec.nu
    a_row = np.array([mu * h, 1j * mu * h, nu * h, -1j * nu * h])
    b_row = np.array([nu * h, -1j * nu * h, mu * h, 1j * mu * h])
    return [(spec.kappa_a, a_row), (spec.kappa_b, b_row)]


def drift_diffusion_from_jumps(spec: TmsSpec) -> tuple[np.ndarray, np.ndarray]:
    """(drift, diffusion) with d cov/dt = drift cov + cov drift^T + diffusion.

    For jumps L_j = l_j . R at rate k_j, with C = sum_j k_j conj(l_j) l_j^T,
    the drift is Omega Im(C) and the diffusion Omega Re(C) Omega^T.
    """
    c = np.zeros((4, 4), dtype=complex)
    for rate, row in _jump_rows(spec):
        c += rate * np.outer(row.conj(), row)
    drift = SYMPLECTIC @ c.imag
    diffusion = SYMPLECTIC @ c.real @ SYMPLECTIC.T
    return drift, 0.5 * (diffusion + diffusion.T)


def steady_covariance(spec: TmsSpec) -> np.ndarray:
    drift, diff = drift_diffusion_from_jumps(spec)
    cov = linalg.solve_continuous_lyapunov(drift, -diff)
    return 0.5 * (cov + cov.T)


def _propagators(drift, diff, t):
    # Van Loan block exponential on a short step, then repeated doubling;
    # a single long-step exponential would overflow through exp(-drift t)
    n = drift.shape[0]
    scale = max(np.abs(drift).sum(axis=1).max(), 1e-300)
    halvings = max(0, int(math.ceil(math.log2(max(t * scale, 1.0)))))
    h = t / 2**halvings
    block = np.zeros((2 * n, 2 * n))
    block[:n, :n] = -drift
    block[:n, n:] = diff
    block[n:, n:] = drift.T
    e = linalg.expm(block * h)
    phi = e[n:, n:].T
    noise = e[n:, n:].T @ e[:n, n:]
    for _ in range(halvings):
        noise = phi @ noise @ phi.T + noise
        phi = phi @ phi
    return phi, 0.5 * (noise + noise.T)


def evolve_gaussian(state0: GaussianState, spec: TmsSpec, t: float) -> GaussianState:
    """Exact propagation of mean and covariance to time ``t``.

    Built from the block exponential, so it does not use the Lyapunov steady
    state and serves as an independent check of it at long times.
    """
    if t < 0:
        raise DomainError("t must be >= 0")
    state0.validate()
    if t == 0:
        return GaussianState(state0.mean.copy(), state0.cov.copy())
    drift, diff = drift_diffusion_from_jumps(spec)
    phi, noise = _propagators(drift, diff, t)
    cov = phi @ state0.cov @ phi.T + noise
    return GaussianState(phi @ state0.mean, 0.5 * (cov + cov.T))


def epr_variance(state: GaussianState) -> float:
    """var((x_a + x_b)/sqrt2) + var((p_a - p_b)/sqrt2); below 1 means entangled."""
    h = 1.0 / math.sqrt(2.0)
    u = np.array([h, 0.0, h, 0.0])
    v = np.array([0.0, h, 0.0, -h])
    return float(u @ state.cov @ u + v @ state.cov @ v)


def steady_state(spec: TmsSpec) -> GaussianState:
    return GaussianState(np.zeros(4), steady_covariance(spec))


def random_physical_state(rng: np.random.Generator, max_squeeze: float = 1.5,
                          max_thermal: float = 3.0) -> GaussianState:
    """Random mixed Gaussian state: thermal occupations dressed by a random
    symplectic (orthogonal-squeeze-orthogonal) transformation."""
    def orth_symplectic():
        # passive two-mode unitary as a real symplectic orthogonal matrix
        q, _ = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
        re, im = q.real, q.imag
        s = np.zeros((4, 4))
        for i in range(2):
            for j in range(2):
                s[2 * i:2 * i + 2, 2 * j:2 * j + 2] = [[re[i, j], -im[i, j]], [im[i, j], re[i, j]]]
        return s

    sq = rng.uniform(-max_squeeze, max_squeeze, size=2)
    squeeze = np.diag([math.exp(-sq[0]), math.exp(sq[0]), math.exp(-sq[1]), math.exp(sq[1])])
    nbar = rng.uniform(0.0, max_thermal, size=2)
    thermal = np.diag([nbar[0] + 0.5, nbar[0] + 0.5, nbar[1] + 0.5, nbar[1] + 0.5])
    s = orth_symplectic() @ squeeze @ orth_symplectic()
    cov = s @ thermal @ s.T
    return GaussianState(rng.normal(size=4), 0.5 * (cov + cov.T))

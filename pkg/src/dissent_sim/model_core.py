"""Shared parameter algebra for the two-ensemble entanglement model.

Rates are measured in units of the single-atom decay rate, so ``gamma = 1``
everywhere below. Spin-1/2 atoms, collective ``Jx`` per ensemble in
``[-N/2, N/2]``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

NORMALIZATION_TOL = 1e-12
KL_WARN_THRESHOLD = 10.0


class DomainError(ValueError):
    """Input outside the domain where a quantity is defined."""


class ConvergenceError(RuntimeError):
    """A numerical procedure failed to reach its tolerance."""


class RegimeWarning(UserWarning):
    """Parameters lie outside the regime where asymptotic results hold."""


@dataclass(frozen=True)
class SqueezingParams:
    """Weights of the nonlocal jump operators, normalized to mu**2 - nu**2 = 1."""

    mu: float
    nu: float

    def __post_init__(self):
        if not (math.isfinite(self.mu) and math.isfinite(self.nu)):
            raise DomainError("mu and nu must be finite")
        if self.mu < 1.0 - NORMALIZATION_TOL or abs(self.nu) >= self.mu:
            raise DomainError(f"need mu >= 1 and |nu| < mu, got mu={self.mu}, nu={self.nu}")
        if abs(self.mu**2 - self.nu**2 - 1.0) > NORMALIZATION_TOL * max(1.0, self.mu**2):
            raise DomainError(f"mu^2 - nu^2 = {self.mu**2 - self.nu**2!r}, expected 1")

    @property
    def z(self) -> float:
        return z_of(self)


def squeezing_from_detuning(delta: float, omega: float) -> SqueezingParams:
    """mu, nu from the probe detuning and Larmor frequency (same sign required)."""
    if not delta * omega > 0:
        raise DomainError("delta*omega must be positive")
    root = 2.0 * math.sqrt(delta * omega)
    mu = abs(delta + omega) / root
    nu = math.copysign(1.0, delta + omega) * (delta - omega) / root
    return SqueezingParams(mu, nu)


def squeezing_from_z(z: float) -> SqueezingParams:
    if not z >= 1.0:
        raise DomainError(f"z must be >= 1, got {z}")
    return SqueezingParams(0.5 * (z + 1.0 / z), 0.5 * (z - 1.0 / z))


def z_of(params: SqueezingParams) -> float:
    # mu - |nu| = 1/(mu + |nu|) avoids cancellation at large z
    return params.mu + abs(params.nu)


def xi_ideal(params: SqueezingParams) -> float:
    """Entanglement measure of the ideal two-mode squeezed target, (|mu|-|nu|)**2."""
    return 1.0 / z_of(params) ** 2


@dataclass(frozen=True)
class EnsembleGeometry:
    n_atoms: float
    length_L: float
    k_laser: float
    separation_R: float = 0.0

    def __post_init__(self):
        if self.n_atoms < 0:
            raise DomainError("n_atoms must be non-negative")
        if not (self.length_L > 0 and self.k_laser > 0):
            raise DomainError("length_L and k_laser must be positive")
        if self.separation_R < 0:
            raise DomainError("separation_R must be non-negative")

    @property
    def kl(self) -> float:
        return self.k_laser * self.length_L

    def regime_warnings(self, threshold: float = KL_WARN_THRESHOLD) -> list[str]:
        """Messages for violated asymptotic conditions; also emitted as warnings."""
        msgs = []
        if self.kl < threshold:
            msgs.append(f"k_laser*L = {self.kl:g} below {threshold:g}")
        # inter-ensemble closed form needs k L^2 >> R
        if self.separation_R > 0 and self.k_laser * self.length_L**2 < threshold * self.separation_R:
            msgs.append("k_laser*L^2 not >> R: inter-ensemble rate off its flat asymptote")
        for m in msgs:
            warnings.warn(m, RegimeWarning, stacklevel=2)
        return msgs


def optical_depth(geom: EnsembleGeometry) -> float:
    """Resonant optical depth 3N / (4 (k L)^2)."""
    return 3.0 * geom.n_atoms / (4.0 * geom.kl**2)


@dataclass(frozen=True)
class EntanglementReport:
    xi: float
    variance_sum: float
    mean_jx: float

    @classmethod
    def from_parts(cls, variance_sum: float, mean_jx: float) -> "EntanglementReport":
        """``mean_jx`` is the per-ensemble mean, so the denominator is 2|mean_jx|."""
        if abs(mean_jx) < 1e-12:
            raise DomainError("longitudinal spin vanishes; measure undefined")
        if variance_sum < 0:
            raise DomainError("negative variance sum")
        return cls(variance_sum / (2.0 * abs(mean_jx)), variance_sum, mean_jx)

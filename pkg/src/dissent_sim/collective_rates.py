"""Dipole pair kernels and their averages over Gaussian atomic clouds.

Geometry is fixed to the one used throughout the model: laser along z,
dipole along ``p_hat`` (x by default), second cloud displaced along z.
With that choice the azimuthal and polar integrals of the averaged rates are
done in closed form, which leaves a single oscillatory radial integral. It
is evaluated on panels one half-wavelength wide with Gauss-Kronrod 7/15 and
bisection where the error estimate demands it.

Lengths are converted to units of the cloud width ``L`` internally, so
``kappa = k L`` is the only large parameter.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .model_core import ConvergenceError, DomainError, EnsembleGeometry

TRUNCATION = 8.0  # radial cut-off in units of L
REL_TOL = 1e-10
MAX_DEPTH = 30
CHUNK_PANELS = 200_000
INTER_MISMATCH = 0.05
ROUNDOFF_FACTOR = 32.0


@dataclass(frozen=True)
class DipoleKernelParams:
    k_laser: float
    p_hat: tuple = (1.0, 0.0, 0.0)
    gamma: float = 1.0

    def __post_init__(self):
        if not self.k_laser > 0:
            raise DomainError("k_laser must be positive")
        if abs(np.linalg.norm(self.p_hat) - 1.0) > 1e-12:
            raise DomainError("p_hat must be a unit vector")


@dataclass(frozen=True)
class AveragedRate:
    real_part: float
    imag_part: float
    estimated_quadrature_error: float
    components: dict = field(default_factory=dict)
    closed_form: Optional[complex] = None
    flagged: bool = False
    notes: tuple = ()

    def __post_init__(self):
        if self.estimated_quadrature_error < 0:
            raise ValueError("error estimate must be non-negative")

    @property
    def value(self) -> complex:
        return complex(self.real_part, self.imag_part)


def _radial_parts(r_vec, params: DipoleKernelParams):
    r_vec = np.asarray(r_vec, dtype=float)
    r = float(np.linalg.norm(r_vec))
    if r == 0.0:
        raise DomainError("kernel undefined at r = 0 (single-atom rate is gamma)")
    cos_pr = float(np.dot(params.p_hat, r_vec)) / r
    x = params.k_laser * r
    return x, 1.0 - cos_pr**2, 1.0 - 3.0 * cos_pr**2


def gamma_kernel(r_vec, params: DipoleKernelParams) -> float:
    """Real part of the pair decay rate for separation ``r_vec``."""
    x, ang1, ang2 = _radial_parts(r_vec, params)
    s, c = math.sin(x), math.cos(x)
    return 1.5 * params.gamma * (ang1 * s / x + ang2 * (c / x**2 - s / x**3))


def g_kernel(r_vec, params: DipoleKernelParams) -> float:
    """Imaginary part (dipole-dipole shift) of the pair rate."""
    x, ang1, ang2 = _radial_parts(r_vec, params)
    s, c = math.sin(x), math.cos(x)
    return 1.5 * params.gamma * (-ang1 * c / x + ang2 * (s / x**2 + c / x**3))


def asymptotic_rate(kl: float) -> float:
    """Leading large-kL value 3/(4 (kL)^2), in units of gamma."""
    return 3.0 / (4.0 * kl**2)


def closed_form_single_leading(kl: float) -> float:
    """Leading sin^2 term integrated exactly: 3/(4 (kL)^2) (1 - exp(-2 (kL)^2))."""
    return 3.0 / (4.0 * kl**2) * -math.expm1(-2.0 * kl**2)


def closed_form_inter(kl: float, k_r: float) -> complex:
    """3/(4((kL)^2 + i kR)) (1 - exp(-2 (kL)^2 - 2 i kR)), dipole factor dropped."""
    den = complex(kl**2, k_r)
    return 0.75 / den * (1.0 - np.exp(complex(-2.0 * kl**2, -2.0 * k_r)))


def integrate_radial(kind: int, p: np.ndarray, a: float, b: float, panel_width: float,
                     rel_tol: float = REL_TOL, max_depth: int = MAX_DEPTH) -> tuple[complex, float]:
    """Adaptive panel quadrature of one radial integrand over [a, b].

    Initial panels are ``panel_width`` wide. A panel is accepted when its
    error estimate is within its width share of ``rel_tol`` times the sum of
    panel magnitudes (the oscillating panels cancel, so |total| would be far
    too strict), or when it is below the floating-point floor set by the
    panel's integral of |f|; otherwise it is halved. Accepted panels are
    summed in left-edge order.
    """
    n0 = max(16, int(math.ceil((b - a) / panel_width)))
    edges = np.linspace(a, b, n0 + 1)
    lefts, vals, errs, mags = [], [], [], []
    for c0 in range(0, n0, CHUNK_PANELS):
        e = edges[c0:min(c0 + CHUNK_PANELS, n0) + 1]
        v, er, mg = _kernels.panel_rule(kind, p, e)
        lefts.append(e[:-1])
        vals.append(v)
        errs.append(er)
        mags.append(mg)
    left = np.concatenate(lefts)
    width = np.full(left.shape, (b - a) / n0)
    val = np.concatenate(vals)
    err = np.concatenate(errs)
    mag = np.concatenate(mags)
    done_l, done_v, done_e = [], [], []
    scale = np.abs(val).sum() + err.sum()
    # phase k*rho is rounded to ~eps*k*b, so integrand values carry a relative
    # error floor that bisection cannot remove; panels whose estimate sits at
    # that floor times their integral of |f| are roundoff-limited
    floor = ROUNDOFF_FACTOR * np.finfo(float).eps * (1.0 + float(p[0]) * b)
    for depth in range(max_depth + 1):
        ok = (err <= rel_tol * scale * width / (b - a) + 1e-300) | (err <= floor * mag)
        if depth == max_depth:
            ok[:] = True
        done_l.append(left[ok])
        done_v.append(val[ok])
        done_e.append(err[ok])
        if ok.all():
            break
        bad_l, bad_w = left[~ok], width[~ok] / 2
        new_l = np.concatenate((bad_l, bad_l + bad_w))
        new_w = np.concatenate((bad_w, bad_w))
        order = np.argsort(new_l, kind="stable")
        left, width = new_l[order], new_w[order]
        edges2 = np.empty(2 * left.size)
        edges2[0::2] = left
        edges2[1::2] = left + width
        # evaluate each split panel separately: pairs of edges
        val = np.empty(left.size, dtype=complex)
        err = np.empty(left.size)
        mag = np.empty(left.size)
        for i0 in range(0, left.size, CHUNK_PANELS):
            sl = slice(i0, min(i0 + CHUNK_PANELS, left.size))
            val[sl], err[sl], mag[sl] = _panels_disjoint(kind, p, left[sl], width[sl])
    all_l = np.concatenate(done_l)
    order = np.argsort(all_l, kind="stable")
    total = np.concatenate(done_v)[order].sum()
    total_err = float(np.concatenate(done_e).sum())
    return complex(total), total_err


def _panels_disjoint(kind, p, left, width):
    # disjoint panels: evaluate as a contiguous edge list and drop the gaps
    edges = np.empty(2 * left.size)
    edges[0::2] = left
    edges[1::2] = left + width
    v, er, mg = _kernels.panel_rule(kind, p, edges)
    return v[0::2], er[0::2], mg[0::2]


def _check_geometry(L: float, params: DipoleKernelParams) -> float:
    if not L > 0:
        raise DomainError("L must be positive")
    kl = params.k_laser * L
    if kl < 1.0:
        raise DomainError(f"k_laser*L = {kl:g} < 1")
    if tuple(params.p_hat) != (1.0, 0.0, 0.0):
        # the closed-form angular reduction assumes p perpendicular to k
        if abs(params.p_hat[2]) > 1e-12:
            raise DomainError("averaged rates implemented for p_hat perpendicular to the laser (z) axis")
    return kl


def averaged_rate_single(L: float, params: DipoleKernelParams) -> AveragedRate:
    """Position-averaged pair rate within one Gaussian cloud of width L."""
    kl = _check_geometry(L, params)
    p = np.array([kl, 0.0])
    width = math.pi / kl
    pref = 3.0 / math.sqrt(2.0 * math.pi) * params.gamma
    parts = {}
    err = 0.0
    for name, kind in (("gamma_a", _kernels.SINGLE_GAMMA_A), ("gamma_b", _kernels.SINGLE_GAMMA_B),
                       ("g_a", _kernels.SINGLE_G_A), ("g_b", _kernels.SINGLE_G_B)):
        v, e = integrate_radial(kind, p, 0.0, TRUNCATION, width)
        parts[name] = pref * v.real
        err += pref * e
    re = parts["gamma_a"] + parts["gamma_b"]
    im = parts["g_a"] + parts["g_b"]
    if err > 0.01 * abs(re):
        raise ConvergenceError(f"quadrature error {err:.3g} exceeds 1% of {re:.3g}")
    return AveragedRate(re, im, err, parts)


def averaged_rate_inter(L: float, R: float, params: DipoleKernelParams) -> AveragedRate:
    """Averaged rate between two clouds of width L whose centres are R apart
    along the laser axis, full dipole factor retained. The dipole-factor-free
    closed form is attached for comparison."""
    kl = _check_geometry(L, params)
    if R < 0:
        raise DomainError("R must be non-negative")
    rho_r = R / L
    p = np.array([kl, rho_r])
    lo = max(0.0, rho_r - TRUNCATION)
    hi = rho_r + TRUNCATION
    v, e = integrate_radial(_kernels.INTER_GAMMA, p, lo, hi, math.pi / kl)
    pref = 3.0 / (4.0 * math.sqrt(2.0 * math.pi)) * params.gamma
    val = pref * v
    err = pref * e
    cf = params.gamma * closed_form_inter(kl, params.k_laser * R)
    notes = []
    flagged = False
    if abs(val - cf) > INTER_MISMATCH * abs(cf):
        flagged = True
        notes.append("quadrature and closed form differ by more than 5%")
    if kl**2 < 10.0 * params.k_laser * R:
        flagged = True
        notes.append("k L^2 not >> R: outside the flat-rate regime")
    if err > 0.01 * abs(val.real):
        raise ConvergenceError(f"quadrature error {err:.3g} exceeds 1% of {val.real:.3g}")
    return AveragedRate(val.real, val.imag, err, {}, cf, flagged, tuple(notes))


def averaged_rate_polar_rule(L: float, params: DipoleKernelParams, order: int = 64,
                             n_phi: int = 8) -> complex:
    """Reference evaluation that keeps the full 3-D kernel: Gauss-Legendre in
    cos(theta), trapezoid in phi, adaptive GK15 in r. Valid for moderate kL
    only (the fixed polar rule cannot follow exp(i kL cos(theta)) beyond
    kL of a few tens)."""
    from scipy import integrate

    kl = params.k_laser * L
    u, wu = np.polynomial.legendre.leggauss(order)
    phi = 2.0 * math.pi * np.arange(n_phi) / n_phi
    st = np.sqrt(1.0 - u**2)
    dirs = np.stack([np.outer(st, np.cos(phi)), np.outer(st, np.sin(phi)),
                     np.outer(u, np.ones_like(phi))], axis=-1)
    cos_pr = dirs @ np.asarray(params.p_hat, dtype=float)
    ang1 = 1.0 - cos_pr**2
    ang2 = 1.0 - 3.0 * cos_pr**2
    w2 = wu[:, None] * (2.0 * math.pi / n_phi)

    def shell(rho):
        x = kl * rho
        s, c = math.sin(x), math.cos(x)
        gam = ang1 * s / x + ang2 * (c / x**2 - s / x**3)
        gim = -ang1 * c / x + ang2 * (s / x**2 + c / x**3)
        ph = np.exp(1j * x * u)[:, None]
        return rho**2 * math.exp(-0.5 * rho**2) * np.sum(w2 * ph * (gam + 1j * gim))

    pref = 1.5 * params.gamma / (2.0 * math.pi) ** 1.5
    brk = np.arange(1, int(TRUNCATION * kl / math.pi) + 1) * math.pi / kl
    re = integrate.quad(lambda r: shell(r).real, 1e-9, TRUNCATION, limit=4000, points=brk[:3000])[0]
    im = integrate.quad(lambda r: shell(r).imag, 1e-9, TRUNCATION, limit=4000, points=brk[:3000])[0]
    return pref * complex(re, im)


def rate_table(kl_values, R_over_L: float = 0.0, k_laser: float = 1.0) -> list[dict]:
    """Rows of averaged rates versus kL with the asymptotic comparison."""
    rows = []
    for kl in kl_values:
        params = DipoleKernelParams(k_laser)
        L = kl / k_laser
        single = averaged_rate_single(L, params)
        row = {
            "kL": float(kl),
            "real_part": single.real_part,
            "imag_part": single.imag_part,
            "asymptote": asymptotic_rate(kl),
            "ratio_to_asymptote": single.real_part / asymptotic_rate(kl),
            "gamma_b_over_a": single.components["gamma_b"] / single.components["gamma_a"],
            "quad_error": single.estimated_quadrature_error,
        }
        if R_over_L > 0:
            inter = averaged_rate_inter(L, R_over_L * L, params)
            row.update(inter_real=inter.real_part, inter_imag=inter.imag_part,
                       inter_closed_real=inter.closed_form.real, inter_flagged=int(inter.flagged))
        rows.append(row)
    return rows


def rates_for_geometry(geom: EnsembleGeometry) -> AveragedRate:
    params = DipoleKernelParams(geom.k_laser)
    if geom.separation_R > 0:
        return averaged_rate_inter(geom.length_L, geom.separation_R, params)
    return averaged_rate_single(geom.length_L, params)

"""Hot numerical loops: embedded Runge-Kutta stepping and Gauss-Kronrod panels.

Each kernel is written once in numba's nopython subset. Set
``DISSENT_SIM_NUMBA=0`` before import to run the very same source as plain
Python/numpy (useful for debugging and for the benchmark comparison).
"""
from __future__ import annotations

import math
import os

import numpy as np

_FLAG = os.environ.get("DISSENT_SIM_NUMBA", "1").strip().lower()
USE_NUMBA = _FLAG not in ("0", "false", "no", "off")

if USE_NUMBA:
    try:
        import numba as _nb
    except ImportError:  # pragma: no cover
        USE_NUMBA = False

if USE_NUMBA:
    def jit(fn):
        return _nb.njit(cache=True)(fn)
else:
    def jit(fn):
        return fn


# ---------------------------------------------------------------------------
# Dormand-Prince 5(4) specialised to the moment equations. The generic
# array-valued version used for density matrices is in lindblad_oracle.
# ---------------------------------------------------------------------------

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.array([
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1 / 5, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3 / 40, 9 / 40, 0.0, 0.0, 0.0, 0.0],
    [44 / 45, -56 / 15, 32 / 9, 0.0, 0.0, 0.0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0.0, 0.0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0.0],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
])
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4

STATUS_OK = 0
STATUS_UNDERFLOW = 1
STATUS_MAXSTEPS = 2


@jit
def moment_rhs(t, y, a):
    """Closed moment equations; y = (<Jx>, var y+, var y-, var z+, var z-).

    a = (N, d, Gt, cool, heat, mu, nu, cd_rate, ab) with ab in {0, 1}
    switching the entangling A/B channels and cd_rate = d*check_gamma the
    rate of the state-preserving C/D channels.
    """
    n, d, gt, cool, heat, mu, nu, cd_rate, ab = a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7], a[8]
    f = np.empty(5)
    p = 2.0 * y[0] / n
    lam = gt + ab * d * p
    gain = ab * d * p * p
    sq = (mu - nu) ** 2
    anti = (mu + nu) ** 2
    f[0] = -(cool + heat) * y[0] + 0.5 * n * (cool - heat)
    f[1] = -lam * y[1] + 0.25 * n * (gt + gain * sq)
    f[2] = -lam * y[2] + 0.25 * n * (gt + gain * anti)
    f[3] = -lam * y[3] + 0.25 * n * (gt + gain * anti)
    f[4] = -lam * y[4] + 0.25 * n * (gt + gain * sq)
    if cd_rate > 0.0:
        # C/D rotate single-ensemble y^2 <-> z^2 and damp/mix the
        # inter-ensemble correlators
        r = cd_rate / n
        s = mu * mu + nu * nu
        pp = 2.0 * mu * nu
        yy = 0.5 * (y[1] + y[2])
        zz = 0.5 * (y[3] + y[4])
        cy = 0.5 * (y[1] - y[2])
        cz = 0.5 * (y[3] - y[4])
        dyy = r * s * (zz - yy)
        dcy = -r * (s * cy + pp * cz)
        dcz = -r * (s * cz + pp * cy)
        f[1] += dyy + dcy
        f[2] += dyy - dcy
        f[3] += -dyy + dcz
        f[4] += -dyy - dcz
    return f


@jit
def dopri5_step(args, t, y, f0, h, rtol, atol):
    """One trial step. Returns (y_new, f_new, err_norm)."""
    n = y.shape[0]
    k = np.empty((7, n), dtype=y.dtype)
    k[0] = f0
    for s in range(1, 7):
        ys = y.copy()
        for j in range(s):
            a = _A[s, j]
            if a != 0.0:
                ys += (h * a) * k[j]
        k[s] = moment_rhs(t + _C[s] * h, ys, args)
    y_new = y.copy()
    err = np.zeros(n, dtype=y.dtype)
    for j in range(7):
        if _B5[j] != 0.0:
            y_new += (h * _B5[j]) * k[j]
        err += (h * _E[j]) * k[j]
    acc = 0.0
    for i in range(n):
        scale = atol + rtol * max(abs(y[i]), abs(y_new[i]))
        r = abs(err[i]) / scale
        acc += r * r
    return y_new, k[6], math.sqrt(acc / n)


@jit
def _next_h(h, err):
    if err == 0.0:
        return h * 5.0
    fac = 0.9 * err ** -0.2
    return h * min(5.0, max(0.2, fac))


@jit
def dopri5_grid(args, t0, y0, t_eval, rtol, atol, h0, max_steps):
    """Integrate and sample at the increasing times ``t_eval`` (all >= t0).

    Steps are clipped to land exactly on each sample time.
    Returns (samples, status, t_reached).
    """
    m = t_eval.shape[0]
    out = np.empty((m, y0.shape[0]), dtype=y0.dtype)
    t = t0
    y = y0.copy()
    f = moment_rhs(t, y, args)
    h = h0
    steps = 0
    for i in range(m):
        target = t_eval[i]
        while t < target:
            if steps >= max_steps:
                out[i:] = y
                return out, STATUS_MAXSTEPS, t
            last = False
            if t + h >= target:
                hs = target - t
                last = True
            else:
                hs = h
            if hs < 1e-14 * max(1.0, abs(t)):
                out[i:] = y
                return out, STATUS_UNDERFLOW, t
            y_new, f_new, err = dopri5_step(args, t, y, f, hs, rtol, atol)
            steps += 1
            if err <= 1.0:
                t = target if last else t + hs
                y = y_new
                f = f_new
                if not last:
                    h = _next_h(hs, err)
            else:
                h = hs * max(0.2, 0.9 * err ** -0.2)
        out[i] = y
    return out, STATUS_OK, t


@jit
def dopri5_until_steady(args, t0, y0, window, tol, t_cap, rtol, atol, h0, max_steps):
    """Integrate in windows of length ``window`` until the largest relative
    change of any component across one window drops below ``tol``.

    Returns (y, t, status, converged).
    """
    t = t0
    y = y0.copy()
    h = h0
    grid = np.empty(1)
    while t < t_cap:
        t_next = min(t + window, t_cap)
        grid[0] = t_next
        out, status, t_reached = dopri5_grid(args, t, y, grid, rtol, atol, h, max_steps)
        if status != STATUS_OK:
            return out[0], t_reached, status, False
        y_new = out[0]
        change = 0.0
        for i in range(y.shape[0]):
            denom = max(abs(y_new[i]), 1e-300)
            change = max(change, abs(y_new[i] - y[i]) / denom)
        y = y_new
        t = t_next
        h = min(window, max(h, window * 1e-3))
        if change < tol:
            return y, t, STATUS_OK, True
    return y, t, STATUS_OK, False


# ---------------------------------------------------------------------------
# Gauss-Kronrod 7/15 on panels
# ---------------------------------------------------------------------------

_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467768422335,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

GK_NODES = np.concatenate((-_XGK[:-1], _XGK[::-1]))
GK_WEIGHTS = np.concatenate((_WGK[:-1], _WGK[::-1]))
_GW = np.zeros(15)
_GW[1], _GW[3], _GW[5], _GW[7], _GW[9], _GW[11], _GW[13] = (
    _WG[0], _WG[1], _WG[2], _WG[3], _WG[2], _WG[1], _WG[0])
GAUSS_WEIGHTS = _GW


# Radial integrands of the position-averaged pair rates, in units where the
# cloud width is 1 (rho = r/L, kappa = k*L). The angular integrals are done
# analytically; see collective_rates for the bookkeeping.

SINGLE_GAMMA_A = 0
SINGLE_GAMMA_B = 1
SINGLE_G_A = 2
SINGLE_G_B = 3
INTER_GAMMA = 4

_SERIES_X = 0.5
_NT = 12
# Taylor coefficients in powers of (-x^2):
#   j0 = sum 1/(2k+1)!          j1/x = sum 2(k+1)/(2k+3)!
#   a1 = j0 - j1/x = sum 4(k+1)^2/(2k+3)!
#   a2/x^2 = (j0 - 3 j1/x)/x^2 = -sum 4(k+1)(k+2)/(2k+5)!
_K = np.arange(_NT)
_FACT = np.array([math.factorial(i) for i in range(2 * _NT + 6)], dtype=float)
C_J0 = 1.0 / _FACT[2 * _K + 1]
C_J1X = 2.0 * (_K + 1) / _FACT[2 * _K + 3]
C_A1 = 4.0 * (_K + 1) ** 2 / _FACT[2 * _K + 3]
C_A2X = -4.0 * (_K + 1) * (_K + 2) / _FACT[2 * _K + 5]
_SHELL_TERMS = 24


@jit
def _horner(c, u):
    acc = 0.0
    for k in range(c.shape[0] - 1, -1, -1):
        acc = acc * u + c[k]
    return acc


@jit
def angular_factors(x):
    """Return j0, -j1/x, a1 = j0 - j1/x and a2/x^2 with a2 = j0 - 3 j1/x."""
    n = x.shape[0]
    j0 = np.empty(n)
    f2 = np.empty(n)
    a1 = np.empty(n)
    a2x = np.empty(n)
    for i in range(n):
        xi = x[i]
        if xi < _SERIES_X:
            u = -xi * xi
            j0[i] = _horner(C_J0, u)
            f2[i] = -_horner(C_J1X, u)
            a1[i] = _horner(C_A1, u)
            a2x[i] = _horner(C_A2X, u)
        else:
            sx = math.sin(xi)
            cx = math.cos(xi)
            j0v = sx / xi
            j1x = (sx - xi * cx) / (xi * xi * xi)
            j0[i] = j0v
            f2[i] = -j1x
            a1[i] = j0v - j1x
            a2x[i] = (j0v - 3.0 * j1x) / (xi * xi)
    return j0, f2, a1, a2x


@jit
def shell_moments(w):
    """I_n(w) = int_0^2 s^n exp(-w s) ds for n = 0, 1, 2 (complex w, Re w >= 0)."""
    n = w.shape[0]
    i0 = np.empty(n, dtype=np.complex128)
    i1 = np.empty(n, dtype=np.complex128)
    i2 = np.empty(n, dtype=np.complex128)
    for i in range(n):
        wi = w[i]
        if abs(wi) < 0.5:
            # sum_m (-w)^m/m! * 2^{n+m+1}/(n+m+1)
            t = 1.0 + 0.0j
            s0 = 0.0j
            s1 = 0.0j
            s2 = 0.0j
            p2 = 2.0
            for m in range(_SHELL_TERMS):
                s0 += t * p2 / (m + 1)
                s1 += t * 2.0 * p2 / (m + 2)
                s2 += t * 4.0 * p2 / (m + 3)
                t *= -wi / (m + 1)
                p2 *= 2.0
            i0[i] = s0
            i1[i] = s1
            i2[i] = s2
        else:
            e = np.exp(-2.0 * wi)
            i0[i] = (1.0 - e) / wi
            i1[i] = (1.0 - e * (1.0 + 2.0 * wi)) / (wi * wi)
            i2[i] = (2.0 - e * (2.0 + 4.0 * wi + 4.0 * wi * wi)) / (wi * wi * wi)
    return i0, i1, i2


@jit
def radial_integrand(kind, rho, p):
    """Complex radial integrand of one rate component; p = (kappa, rho_R).

    Prefactors 3/sqrt(2 pi) (single ensemble) or 3/(4 sqrt(2 pi))
    (inter-ensemble) are applied by the caller.
    """
    kappa = p[0]
    n = rho.shape[0]
    x = kappa * rho
    j0, f2, a1, a2x = angular_factors(x)
    out = np.empty(n, dtype=np.complex128)
    if kind == INTER_GAMMA:
        rho_r = p[1]
        w = np.empty(n, dtype=np.complex128)
        for i in range(n):
            w[i] = rho[i] * rho_r - 1j * x[i]
        i0, i1, i2 = shell_moments(w)
        for i in range(n):
            q0 = i0[i]
            q2 = i2[i] - 2.0 * i1[i] + i0[i]
            env = np.exp(-1j * x[i] - 0.5 * (rho[i] - rho_r) ** 2)
            out[i] = rho[i] ** 2 * env * (j0[i] * (q0 + q2) + f2[i] * (3.0 * q2 - q0))
        return out
    for i in range(n):
        g = math.exp(-0.5 * rho[i] * rho[i])
        r2 = rho[i] * rho[i]
        if kind == SINGLE_GAMMA_A:
            v = r2 * j0[i] * a1[i]
        elif kind == SINGLE_GAMMA_B:
            v = r2 * f2[i] * a2x[i] * x[i] * x[i]
        elif kind == SINGLE_G_A:
            v = -(rho[i] / kappa) * math.cos(x[i]) * a1[i]
        else:
            v = (rho[i] / kappa) * (x[i] * math.sin(x[i]) + math.cos(x[i])) * a2x[i]
        out[i] = g * v
    return out


@jit
def gk15_panels(kind, p, edges):
    """Kronrod value, |Kronrod - Gauss| estimate and Kronrod integral of |f|
    on each panel [edges[i], edges[i+1]]."""
    n = edges.shape[0] - 1
    nodes = np.empty(15 * n)
    for i in range(n):
        half = 0.5 * (edges[i + 1] - edges[i])
        mid = 0.5 * (edges[i + 1] + edges[i])
        for j in range(15):
            nodes[15 * i + j] = mid + half * GK_NODES[j]
    f = radial_integrand(kind, nodes, p)
    vals = np.empty(n, dtype=np.complex128)
    errs = np.empty(n)
    mags = np.empty(n)
    for i in range(n):
        half = 0.5 * (edges[i + 1] - edges[i])
        k = 0.0 + 0.0j
        g = 0.0 + 0.0j
        m = 0.0
        for j in range(15):
            k += GK_WEIGHTS[j] * f[15 * i + j]
            g += GAUSS_WEIGHTS[j] * f[15 * i + j]
            m += GK_WEIGHTS[j] * abs(f[15 * i + j])
        vals[i] = half * k
        errs[i] = abs(half * (k - g))
        mags[i] = abs(half) * m
    return vals, errs, mags


# ---------------------------------------------------------------------------
# vectorised numpy twins of the quadrature kernels
# ---------------------------------------------------------------------------

def _horner_np(c, u):
    acc = np.zeros_like(u)
    for ck in c[::-1]:
        acc = acc * u + ck
    return acc


def angular_factors_np(x):
    x = np.asarray(x, dtype=float)
    small = x < _SERIES_X
    xs = np.where(small, 1.0, x)
    sx, cx = np.sin(xs), np.cos(xs)
    j0 = sx / xs
    j1x = (sx - xs * cx) / xs**3
    u = -np.where(small, x, 0.0) ** 2
    j0 = np.where(small, _horner_np(C_J0, u), j0)
    f2 = np.where(small, -_horner_np(C_J1X, u), -j1x)
    a1 = np.where(small, _horner_np(C_A1, u), sx / xs - j1x)
    a2x = np.where(small, _horner_np(C_A2X, u), (sx / xs - 3.0 * j1x) / xs**2)
    return j0, f2, a1, a2x


def shell_moments_np(w):
    w = np.asarray(w, dtype=complex)
    small = np.abs(w) < 0.5
    wl = np.where(small, 1.0, w)
    e = np.exp(-2.0 * wl)
    i0 = (1.0 - e) / wl
    i1 = (1.0 - e * (1.0 + 2.0 * wl)) / wl**2
    i2 = (2.0 - e * (2.0 + 4.0 * wl + 4.0 * wl**2)) / wl**3
    if small.any():
        ws = w[small]
        t = np.ones_like(ws)
        s0 = np.zeros_like(ws)
        s1 = np.zeros_like(ws)
        s2 = np.zeros_like(ws)
        p2 = 2.0
        for m in range(_SHELL_TERMS):
            s0 += t * p2 / (m + 1)
            s1 += t * 2.0 * p2 / (m + 2)
            s2 += t * 4.0 * p2 / (m + 3)
            t = t * (-ws / (m + 1))
            p2 *= 2.0
        i0[small], i1[small], i2[small] = s0, s1, s2
    return i0, i1, i2


def radial_integrand_np(kind, rho, p):
    kappa = p[0]
    rho = np.asarray(rho, dtype=float)
    x = kappa * rho
    j0, f2, a1, a2x = angular_factors_np(x)
    if kind == INTER_GAMMA:
        rho_r = p[1]
        i0, i1, i2 = shell_moments_np(rho * rho_r - 1j * x)
        q2 = i2 - 2.0 * i1 + i0
        env = np.exp(-1j * x - 0.5 * (rho - rho_r) ** 2)
        return rho**2 * env * (j0 * (i0 + q2) + f2 * (3.0 * q2 - i0))
    g = np.exp(-0.5 * rho * rho)
    if kind == SINGLE_GAMMA_A:
        v = rho**2 * j0 * a1
    elif kind == SINGLE_GAMMA_B:
        v = rho**2 * f2 * a2x * x * x
    elif kind == SINGLE_G_A:
        v = -(rho / kappa) * np.cos(x) * a1
    else:
        v = (rho / kappa) * (x * np.sin(x) + np.cos(x)) * a2x
    return (g * v).astype(complex)


def gk15_panels_np(kind, p, edges):
    edges = np.asarray(edges, dtype=float)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = mid[:, None] + half[:, None] * GK_NODES[None, :]
    f = radial_integrand_np(kind, nodes.ravel(), p).reshape(nodes.shape)
    k = f @ GK_WEIGHTS
    g = f @ GAUSS_WEIGHTS
    return half * k, np.abs(half * (k - g)), np.abs(half) * (np.abs(f) @ GK_WEIGHTS)


if USE_NUMBA:
    panel_rule = gk15_panels
else:
    panel_rule = gk15_panels_np

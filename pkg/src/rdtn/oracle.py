"""Independent reference computations.

* exact resonances of a homogeneous disk (unit radius) from the zeros of the
  2x2 transmission determinant ``W_l``;
* an extended-precision Bessel series used to validate :mod:`rdtn.specfun`.

The extended-precision routines use ``mpmath`` numbers but implement the
ascending series themselves, so they share no code path with ``specfun``.
"""
import math
import warnings
from dataclasses import dataclass

import mpmath
import numpy as np

from . import specfun
from .errors import DomainError

HIGHPREC_MAX_ABS = 15.0
HIGHPREC_MAX_ORDER = 25
HIGHPREC_DPS = 40

GRID_STEP = 0.02
DEFAULT_L_MAX = 12


# ---------------------------------------------------------------------------
# extended precision Bessel series
# ---------------------------------------------------------------------------

def _mp_j_series(n, z):
    half = z / 2
    q = -half * half
    term = half**n / mpmath.factorial(n)
    total = term
    k = 0
    while True:
        k += 1
        term = term * q / (k * (k + n))
        total += term
        # terms decrease monotonically once k^2 > |q|
        if k * k > abs(q) and abs(term) <= mpmath.mpf(10) ** -30 * abs(total):
            break
    return total


def _mp_y_series(n, z):
    # Y_n = -((z/2)^-n / pi) sum_{k<n} (n-k-1)!/k! (z^2/4)^k + (2/pi) ln(z/2) J_n
    #       - ((z/2)^n / pi) sum_k [psi(k+1) + psi(n+k+1)] (-z^2/4)^k / (k!(n+k)!)
    half = z / 2
    q = half * half
    head = mpmath.mpc(0)
    for k in range(n):
        head += mpmath.factorial(n - k - 1) / mpmath.factorial(k) * q**k
    head = -head / (half**n * mpmath.pi)
    tail = mpmath.mpc(0)
    term = 1 / mpmath.factorial(n)
    k = 0
    while True:
        d = (mpmath.digamma(k + 1) + mpmath.digamma(n + k + 1)) * term
        tail += d
        k += 1
        term = term * (-q) / (k * (k + n))
        if k * k > abs(q) and abs(d) < mpmath.mpf(10) ** -30 * max(abs(tail), mpmath.mpf(10) ** -300):
            break
    tail = -(half**n) / mpmath.pi * tail
    return head + 2 / mpmath.pi * mpmath.log(half) * _mp_j_series(n, z) + tail


def highprec_bessel(n, z, kind="j", as_mpmath=False):
    """``J_n``, ``Y_n`` or ``H^(1)_n`` from ascending series in extended precision.

    Validated for ``|z| <= 15`` and ``n <= 25``; the series are summed with
    40 significant digits and truncated once the terms fall below
    ``1e-30`` of the running sum, so the double result is correctly rounded
    up to a few ulps.
    """
    if int(n) != n or n < 0 or n > HIGHPREC_MAX_ORDER:
        raise DomainError(f"order {n!r} outside 0..{HIGHPREC_MAX_ORDER}")
    if abs(complex(z)) > HIGHPREC_MAX_ABS:
        raise DomainError(f"|z| = {abs(complex(z)):.6g} outside |z| <= {HIGHPREC_MAX_ABS}")
    n = int(n)
    with mpmath.workdps(HIGHPREC_DPS):
        zm = mpmath.mpc(complex(z))
        if kind == "j":
            val = _mp_j_series(n, zm)
        elif kind in ("y", "h"):
            if zm == 0:
                raise DomainError("Y_n and H_n are singular at z = 0")
            val = _mp_y_series(n, zm)
            if kind == "h":
                val = _mp_j_series(n, zm) + 1j * val
        else:
            raise ValueError(f"unknown kind {kind!r}")
        if as_mpmath:
            return +val
        return complex(val)


# ---------------------------------------------------------------------------
# disk resonances
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiskPole:
    """Exact resonance of the unit disk with interior index ``n_i``."""

    k: complex
    angular_order: int

    @property
    def multiplicity(self):
        # cos/sin pair for l >= 1
        return 1 if self.angular_order == 0 else 2


def _w_parts(order, k, n_inside):
    a = math.sqrt(n_inside)
    k = np.asarray(k, dtype=complex)
    ja = specfun.bessel_j_orders(order + 1, a * k)
    h = specfun.hankel1_orders(order + 1, k)
    if order == 0:
        jp = -ja[1]
        hp = -h[1]
    else:
        jp = ja[order - 1] - order / (a * k) * ja[order]
        hp = h[order - 1] - order / k * h[order]
    return ja[order], jp, h[order], hp


def w_det(order, k, n_inside):
    """Transmission determinant for the unit disk.

    ``W_l(k) = -k J_l(k sqrt(n)) H_l'(k) + k sqrt(n) J_l'(k sqrt(n)) H_l(k)``;
    resonances are its zeros.  Accepts scalar or array ``k``.
    """
    scalar = np.ndim(k) == 0
    k_arr = np.asarray(k, dtype=complex)
    if np.any(k_arr == 0):
        raise DomainError("w_det is undefined at k = 0")
    j, jp, h, hp = _w_parts(order, k_arr, n_inside)
    a = math.sqrt(n_inside)
    w = -k_arr * j * hp + a * k_arr * jp * h
    return complex(w) if scalar else w


def w_det_dk(order, k, n_inside):
    """``dW_l/dk = (1 - n_i) k J_l(k sqrt(n_i)) H_l(k)``.

    Follows from differentiating both columns and eliminating second
    derivatives with Bessel's equation.
    """
    scalar = np.ndim(k) == 0
    k_arr = np.asarray(k, dtype=complex)
    j, _, h, _ = _w_parts(order, k_arr, n_inside)
    d = (1 - n_inside) * k_arr * j * h
    return complex(d) if scalar else d


def _w_scale(order, k, n_inside):
    j, jp, h, hp = _w_parts(order, np.asarray(k, dtype=complex), n_inside)
    a = math.sqrt(n_inside)
    return float(abs(k * j * hp) + abs(a * k * jp * h))


def _newton(order, k0, n_inside, tol=1e-12, maxit=100):
    k = complex(k0)
    for _ in range(maxit):
        w = w_det(order, k, n_inside)
        step = w / w_det_dk(order, k, n_inside)
        k -= step
        if abs(step) < 1e-15 * max(abs(k), 1.0):
            break
    else:
        return k, False
    converged = abs(w_det(order, k, n_inside)) <= tol * _w_scale(order, k, n_inside)
    return k, converged


def _grid_minima(values):
    """Indices of strict local minima of ``values`` over the 8-neighbourhood."""
    v = np.abs(values)
    core = v[1:-1, 1:-1]
    mask = np.ones_like(core, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            nb = v[1 + di:v.shape[0] - 1 + di, 1 + dj:v.shape[1] - 1 + dj]
            mask &= core < nb
    ii, jj = np.nonzero(mask)
    return ii + 1, jj + 1


def _in_region(k, region):
    re0, re1, im0, im1 = region
    return re0 < k.real < re1 and im0 < k.imag < im1


def _scan_grid(region, step):
    re0, re1, im0, im1 = region
    # one extra grid line on each side so roots near the edges are seeded
    xs = np.arange(re0 - step, re1 + 1.5 * step, step)
    ys = np.arange(im0 - step, im1 + 1.5 * step, step)
    kk = xs[None, :] + 1j * ys[:, None]
    # keep off the excluded half-line and the origin
    return np.where((np.abs(kk.imag) < 1e-12) & (kk.real <= 1e-12), kk + 1e-6j, kk)


def _grid_tables(kk, n_inside, max_order):
    a = math.sqrt(n_inside)
    return specfun.bessel_j_orders(max_order + 1, a * kk), specfun.hankel1_orders(max_order + 1, kk)


def _grid_w(order, kk, n_inside, tables):
    ja, h = tables
    a = math.sqrt(n_inside)
    if order == 0:
        jp, hp = -ja[1], -h[1]
    else:
        jp = ja[order - 1] - order / (a * kk) * ja[order]
        hp = h[order - 1] - order / kk * h[order]
    w = -kk * ja[order] * hp + a * kk * jp * h[order]
    dw = (1 - n_inside) * kk * ja[order] * h[order]
    return w, dw


def _roots_from_grid(order, kk, w, dw, n_inside, region):
    # divide out the exponential growth so minima reflect zeros, not trends
    ii, jj = _grid_minima(w / (np.abs(kk) * (1 + np.abs(dw))))
    roots = []
    unresolved = []
    for i, j in zip(ii, jj):
        k, ok = _newton(order, kk[i, j], n_inside)
        if not ok:
            unresolved.append(kk[i, j])
            continue
        if not _in_region(k, region):
            continue
        if any(abs(k - r) < 1e-8 * (1 + abs(k)) for r in roots):
            continue
        roots.append(k)
    if unresolved:
        warnings.warn(
            f"W_{order}: Newton stagnated from {len(unresolved)} grid minima, "
            f"e.g. near {complex(unresolved[0]):.4f}", RuntimeWarning)
    return roots


def roots_for_order(order, n_inside, region, step=GRID_STEP):
    """Zeros of ``W_order`` inside ``region = (re_min, re_max, im_min, im_max)``."""
    kk = _scan_grid(region, step)
    w, dw = _grid_w(order, kk, n_inside, _grid_tables(kk, n_inside, order))
    return _roots_from_grid(order, kk, w, dw, n_inside, region)


def disk_exact_poles(n_inside, region=(0.0, 4.0, -4.0, 0.0), l_max=DEFAULT_L_MAX, step=GRID_STEP,
                     check_next_order=True):
    """Exact unit-disk resonances inside ``region``, sorted by modulus.

    Each angular order ``0..l_max`` is scanned on a grid of spacing
    ``step`` for local minima of ``|W_l|`` which seed Newton's method.  With
    ``check_next_order`` the order ``l_max + 1`` is scanned as well and a
    warning is raised if it contributes roots (truncation too small).
    """
    region = tuple(float(v) for v in region)
    if region[2] >= 0:
        # resonances lie strictly below the real axis
        return []
    last = l_max + 1 if check_next_order else l_max
    kk = _scan_grid(region, step)
    tables = _grid_tables(kk, n_inside, last)
    poles = []
    for order in range(l_max + 1):
        w, dw = _grid_w(order, kk, n_inside, tables)
        poles += [DiskPole(k, order) for k in _roots_from_grid(order, kk, w, dw, n_inside, region)]
    if check_next_order:
        w, dw = _grid_w(last, kk, n_inside, tables)
        if _roots_from_grid(last, kk, w, dw, n_inside, region):
            warnings.warn(f"order {last} has roots in the region; increase l_max", RuntimeWarning)
    poles.sort(key=lambda p: (abs(p.k), p.k.real))
    return poles

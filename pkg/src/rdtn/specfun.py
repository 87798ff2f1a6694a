"""Integer-order Bessel and Hankel functions of complex argument.

Everything here is written for the fourth quadrant of the wavenumber plane
where scattering resonances live, but the routines are valid on the whole
principal branch ``-pi < arg z <= pi`` inside the envelope ``|z| <= 200``,
``n <= 200``.

Evaluation strategy
-------------------
* ``J_n`` : ascending series for ``|z| <= 12``; Miller backward recurrence
  otherwise, normalised with the generating-function identity
  ``exp(+-iz) = J_0 + 2 sum (+-i)^k J_k`` (sign chosen so that the
  normalising sum does not cancel).
* ``Y_0, Y_1`` : logarithmic ascending series for ``|z| <= 12``, Neumann
  series in the Miller-computed ``J_k`` beyond.
* ``H^(1)_0, H^(1)_1 = J + iY`` near the real axis; for ``Im z > 0.5`` Steed's
  continued fraction plus the Wronskian, since ``J + iY`` cancels there.
* Higher Hankel orders by forward three-term recurrence on the Hankel
  function that is dominant in ``n`` (``H^(1)`` above the real axis,
  ``H^(2)`` below it, with ``H^(1) = 2J - H^(2)``).  ``Y_n = -i(H^(1)_n - J_n)``.
* DtN coefficients use ``r_m = H_{m-1}/H_m`` from the stable Hankel values
  up to ``m ~ |z|`` and the ratio recurrence ``r_{m+1} = 1 / (2m/z - r_m)``
  beyond, so individual Hankel values never overflow.

All functions accept a scalar or an array for the argument ``z`` and are
pure; there is no caching.
"""
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NearHankelZeroError

MAX_ABS_ARG = 200.0
MAX_ORDER = 200
SERIES_RADIUS = 12.0
HANKEL_ZERO_GUARD = 1e-12
EULER_GAMMA = 0.57721566490153286061

_RESCALE = 1e200


def _as_complex(z):
    z = np.asarray(z, dtype=complex)
    return z


def _check_order(n):
    if int(n) != n or n < 0:
        raise DomainError(f"order must be a nonnegative integer, got {n!r}")
    if n > MAX_ORDER:
        raise DomainError(f"order {n} outside validated envelope n <= {MAX_ORDER}")
    return int(n)


def _check_arg(z, allow_zero=True):
    az = np.abs(z)
    if not np.all(np.isfinite(az)):
        raise DomainError("non-finite argument")
    if np.any(az > MAX_ABS_ARG):
        raise DomainError(f"|z| = {az.max():.6g} outside validated envelope |z| <= {MAX_ABS_ARG}")
    if not allow_zero and np.any(az == 0):
        raise DomainError("argument must be nonzero")


def _unwrap(value, scalar):
    if scalar:
        return complex(value)
    return value


# ---------------------------------------------------------------------------
# first kind
# ---------------------------------------------------------------------------

def _j_series(n, z):
    half = z / 2
    term = np.ones_like(z)
    for j in range(1, n + 1):
        term = term * half / j
    total = term.copy()
    q = -half * half
    for k in range(1, 400):
        term = term * q / (k * (k + n))
        total = total + term
        if np.all(np.abs(term) <= 1e-17 * np.abs(total)):
            break
    return total


def _miller_start(nmax, zmax):
    top = max(float(nmax), zmax)
    return int(top + 20 + np.sqrt(160.0 * top))


def _j_miller(nmax, z):
    """All orders 0..M (M >= nmax) by normalised backward recurrence."""
    m_top = _miller_start(nmax, float(np.abs(z).max()))
    upper = z.imag <= 0
    out = np.zeros((m_top + 1,) + z.shape, dtype=complex)
    f_next = np.zeros_like(z)
    f = np.full(z.shape, 1e-30, dtype=complex)
    norm_sum = np.zeros_like(z)
    unit = (1.0, 1j, -1.0, -1j)
    for k in range(m_top, 0, -1):
        out[k] = f
        w = unit[k % 4]
        eps_k = np.where(upper, w, np.conj(w))
        norm_sum = norm_sum + 2 * eps_k * f
        f_prev = (2 * k / z) * f - f_next
        f_next, f = f, f_prev
        big = np.abs(f) > _RESCALE
        if np.any(big):
            f = np.where(big, f / _RESCALE, f)
            f_next = np.where(big, f_next / _RESCALE, f_next)
            norm_sum = np.where(big, norm_sum / _RESCALE, norm_sum)
            out[k:] = np.where(big, out[k:] / _RESCALE, out[k:])
    out[0] = f
    norm_sum = norm_sum + f
    target = np.where(upper, np.exp(1j * z), np.exp(-1j * z))
    return out * (target / norm_sum)


def bessel_j_orders(nmax, z):
    """``J_0(z) .. J_nmax(z)`` stacked along a new leading axis."""
    nmax = _check_order(nmax)
    z = _as_complex(z)
    _check_arg(z)
    zf = z.reshape(-1)
    out = np.empty((nmax + 1, zf.size), dtype=complex)
    small = np.abs(zf) <= SERIES_RADIUS
    if np.any(small):
        zs = zf[small]
        for n in range(nmax + 1):
            out[n, small] = _j_series(n, zs)
    if np.any(~small):
        out[:, ~small] = _j_miller(nmax, zf[~small])[: nmax + 1]
    return out.reshape((nmax + 1,) + z.shape)


def bessel_j(n, z):
    """Bessel function of the first kind ``J_n(z)`` for integer ``n >= 0``."""
    n = _check_order(n)
    scalar = np.ndim(z) == 0
    z = _as_complex(z)
    _check_arg(z)
    zf = z.reshape(-1)
    out = np.empty(zf.size, dtype=complex)
    small = np.abs(zf) <= SERIES_RADIUS
    if np.any(small):
        out[small] = _j_series(n, zf[small])
    if np.any(~small):
        out[~small] = _j_miller(n, zf[~small])[n]
    return _unwrap(out.reshape(z.shape), scalar)


# ---------------------------------------------------------------------------
# second kind
# ---------------------------------------------------------------------------

def _y01_series(z):
    half = z / 2
    q = -half * half
    log_term = np.log(half) + EULER_GAMMA
    j0 = _j_series(0, z)
    j1 = _j_series(1, z)
    # Y0 tail: -(2/pi) sum H_k q^k / (k!)^2
    t0 = np.ones_like(z)
    s0 = np.zeros_like(z)
    # Y1 tail: -(z/2pi) sum (H_k + H_{k+1}) q^k / (k!(k+1)!)
    t1 = np.ones_like(z)
    s1 = np.ones_like(z)  # k = 0 term: H_0 + H_1 = 1
    harm = 0.0
    for k in range(1, 400):
        harm += 1.0 / k
        t0 = t0 * q / (k * k)
        t1 = t1 * q / (k * (k + 1))
        d0 = harm * t0
        d1 = (harm + harm + 1.0 / (k + 1)) * t1
        s0 = s0 + d0
        s1 = s1 + d1
        if (np.all(np.abs(d0) <= 1e-17 * np.abs(s0 + log_term * j0))
                and np.all(np.abs(d1) <= 1e-17 * np.abs(s1))):
            break
    y0 = (2 / np.pi) * (log_term * j0 - s0)
    y1 = (2 / np.pi) * log_term * j1 - 2 / (np.pi * z) - (z / (2 * np.pi)) * s1
    return y0, y1


def _y01_neumann(z):
    jall = _j_miller(1, z)
    m_top = jall.shape[0] - 1
    log_term = np.log(z / 2) + EULER_GAMMA
    s0 = np.zeros_like(z)
    for k in range(1, m_top // 2 + 1):
        s0 = s0 + (1.0 if k % 2 else -1.0) * jall[2 * k] / k
    y0 = (2 / np.pi) * (log_term * jall[0] + 2 * s0)
    s1 = np.zeros_like(z)
    for m in range(1, (m_top - 1) // 2 + 1):
        s1 = s1 + (-1.0 if m % 2 else 1.0) * (2 * m + 1) / (m * (m + 1)) * jall[2 * m + 1]
    y1 = (2 / np.pi) * ((log_term - 1) * jall[1] - jall[0] / z - s1)
    return jall[0], jall[1], y0, y1


def _low_orders(z):
    """(J0, J1, Y0, Y1) for a flat nonzero array."""
    j0 = np.empty_like(z)
    j1 = np.empty_like(z)
    y0 = np.empty_like(z)
    y1 = np.empty_like(z)
    small = np.abs(z) <= SERIES_RADIUS
    if np.any(small):
        zs = z[small]
        j0[small] = _j_series(0, zs)
        j1[small] = _j_series(1, zs)
        y0[small], y1[small] = _y01_series(zs)
    if np.any(~small):
        j0[~small], j1[~small], y0[~small], y1[~small] = _y01_neumann(z[~small])
    return j0, j1, y0, y1


def _forward(nmax, f0, f1, z):
    out = np.empty((nmax + 1,) + z.shape, dtype=complex)
    out[0] = f0
    if nmax >= 1:
        out[1] = f1
    for n in range(1, nmax):
        out[n + 1] = (2 * n / z) * out[n] - out[n - 1]
    return out


# ---------------------------------------------------------------------------
# Hankel functions
# ---------------------------------------------------------------------------

def _steed_cf2(nu, z):
    """``H_nu'(z)/H_nu(z)`` for ``Im z > 0`` by Steed's continued fraction."""
    tiny = 1e-300
    f = np.full(z.shape, tiny, dtype=complex)
    c = f.copy()
    d = np.zeros_like(z)
    done = np.zeros(z.shape, dtype=bool)
    for k in range(1, 20000):
        a = (k - 0.5) ** 2 - nu * nu
        b = 2 * (z + 1j * k)
        d = b + a * d
        d = np.where(d == 0, tiny, d)
        c = b + a / c
        c = np.where(c == 0, tiny, c)
        d = 1 / d
        delta = c * d
        f = np.where(done, f, f * delta)
        done |= np.abs(delta - 1) < 1e-16
        if np.all(done):
            break
    return -1 / (2 * z) + 1j + (1j / z) * f


def _h01_upper(z, j0, j1):
    """``H^(1)_0, H^(1)_1`` for ``Im z >= 0``.

    Near the real axis ``J + iY`` is used directly.  Further up the Hankel
    function is exponentially small and ``J + iY`` cancels, so the
    logarithmic derivative comes from Steed's fraction and the magnitude
    from the Wronskian ``J H' - J' H = 2i/(pi z)``.
    """
    h0 = np.empty_like(z)
    h1 = np.empty_like(z)
    far = z.imag > 0.5
    near = ~far
    if np.any(near):
        _, _, y0, y1 = _low_orders(z[near])
        h0[near] = j0[near] + 1j * y0
        h1[near] = j1[near] + 1j * y1
    if np.any(far):
        zf = z[far]
        q = _steed_cf2(0.0, zf)
        h = 2j / (np.pi * zf * (j0[far] * q + j1[far]))
        h0[far] = h
        h1[far] = -q * h
    return h0, h1


def _hankel_pair(nmax, z):
    """``(H^(1)_n, J_n)`` for ``n = 0..nmax`` on a flat nonzero array.

    The forward recurrence is run on whichever Hankel function is dominant
    in ``n``: ``H^(1)`` in the upper half plane, ``H^(2)`` in the lower one,
    where ``H^(1) = 2J - H^(2)`` and ``H^(2)(z) = conj(H^(1)(conj z))``.
    """
    jn = bessel_j_orders(max(nmax, 1), z)
    out = np.empty((nmax + 1,) + z.shape, dtype=complex)
    upper = z.imag >= 0
    with np.errstate(over="ignore", invalid="ignore"):
        if np.any(upper):
            zu = z[upper]
            h0, h1 = _h01_upper(zu, jn[0, upper], jn[1, upper])
            out[:, upper] = _forward(nmax, h0, h1, zu)
        if np.any(~upper):
            zl = z[~upper]
            zc = np.conj(zl)
            g0, g1 = _h01_upper(zc, np.conj(jn[0, ~upper]), np.conj(jn[1, ~upper]))
            h2 = _forward(nmax, np.conj(g0), np.conj(g1), zl)
            out[:, ~upper] = 2 * jn[: nmax + 1, ~upper] - h2
    return out, jn[: nmax + 1]


def hankel1_orders(nmax, z):
    """``H^(1)_0(z) .. H^(1)_nmax(z)`` stacked along a new leading axis."""
    nmax = _check_order(nmax)
    z = _as_complex(z)
    _check_arg(z, allow_zero=False)
    h, _ = _hankel_pair(nmax, z.reshape(-1))
    return h.reshape((nmax + 1,) + z.shape)


def bessel_y_orders(nmax, z):
    """``Y_0(z) .. Y_nmax(z)``, recovered as ``-i (H^(1)_n - J_n)``."""
    nmax = _check_order(nmax)
    z = _as_complex(z)
    _check_arg(z, allow_zero=False)
    h, j = _hankel_pair(nmax, z.reshape(-1))
    with np.errstate(invalid="ignore"):
        y = -1j * (h - j)
    return y.reshape((nmax + 1,) + z.shape)


def bessel_y(n, z):
    """Bessel function of the second kind ``Y_n(z)`` (principal branch)."""
    n = _check_order(n)
    scalar = np.ndim(z) == 0
    out = bessel_y_orders(n, z)[n]
    if not np.all(np.isfinite(out)):
        raise DomainError(f"Y_{n} overflows at the requested argument")
    return _unwrap(out, scalar)


def _guard_hankel(n, window, z):
    """Raise if |H_n| is negligible next to |H_{n-1}|, |H_{n+1}|."""
    h_n = np.abs(window[1])
    neighbours = np.maximum(np.abs(window[0]), np.abs(window[2]))
    bad = h_n < HANKEL_ZERO_GUARD * neighbours
    if np.any(bad):
        zb = np.asarray(z).reshape(-1)[np.asarray(bad).reshape(-1)][0]
        raise NearHankelZeroError(
            f"H^(1)_{n} is numerically zero near z = {complex(zb):.6g}", order=n, argument=complex(zb))


def hankel1(n, z):
    """Hankel function of the first kind ``H^(1)_n(z)``.

    Raises
    ------
    NearHankelZeroError
        if ``|H_n(z)| < 1e-12 * max(|H_{n-1}(z)|, |H_{n+1}(z)|)``.
    DomainError
        outside the envelope, at ``z = 0`` or on overflow.
    """
    n = _check_order(n)
    scalar = np.ndim(z) == 0
    z = _as_complex(z)
    h = hankel1_orders(n + 1, z)
    if not np.all(np.isfinite(h[: n + 2])):
        raise DomainError(f"H^(1)_{n} overflows at the requested argument")
    h_minus = -h[1] if n == 0 else h[n - 1]
    _guard_hankel(n, (h_minus, h[n], h[n + 1]), z)
    return _unwrap(h[n], scalar)


def bessel_jp(n, z):
    """Derivative ``J_n'(z)``."""
    n = _check_order(n)
    scalar = np.ndim(z) == 0
    z = _as_complex(z)
    j = bessel_j_orders(max(n, 1), z)
    if n == 0:
        return _unwrap(-j[1], scalar)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = j[n - 1] - (n / z) * j[n]
    # J_n'(0) = 1/2 for n = 1, 0 otherwise
    d = np.where(z == 0, 0.5 if n == 1 else 0.0, d)
    return _unwrap(d, scalar)


def hankel1p(n, z):
    """Derivative ``H^(1)_n'(z)``."""
    n = _check_order(n)
    scalar = np.ndim(z) == 0
    z = _as_complex(z)
    h = hankel1_orders(max(n, 1), z)
    if not np.all(np.isfinite(h)):
        raise DomainError("Hankel function overflows at the requested argument")
    if n == 0:
        return _unwrap(-h[1], scalar)
    return _unwrap(h[n - 1] - (n / z) * h[n], scalar)


# ---------------------------------------------------------------------------
# DtN coefficients
# ---------------------------------------------------------------------------

def _check_wavenumber(k, R):
    if not R > 0:
        raise DomainError(f"radius must be positive, got {R!r}")
    k = complex(k)
    if k.imag == 0 and k.real <= 0:
        raise DomainError(f"wavenumber {k} lies on the excluded half-line (-inf, 0]")
    return k


def hankel_ratios(nmax, z):
    """``r_m = H_{m-1}(z) / H_m(z)`` for ``m = 1 .. nmax`` (scalar ``z``).

    Index ``m`` of the returned array holds ``r_m``; index 0 is unused and
    set to ``nan``.  Orders past ``|z| + 10`` use the ratio recurrence,
    which is stable once the Hankel functions grow with ``n``.
    """
    nmax = _check_order(max(nmax, 1))
    z = complex(z)
    _check_arg(np.asarray(z), allow_zero=False)
    direct = min(nmax, max(1, int(abs(z)) + 10))
    h = hankel1_orders(direct, np.asarray([z]))[:, 0]
    r = np.empty(nmax + 1, dtype=complex)
    r[0] = np.nan
    with np.errstate(divide="ignore", invalid="ignore"):
        r[1:direct + 1] = h[:direct] / h[1:direct + 1]
        for m in range(direct, nmax):
            r[m + 1] = 1.0 / (2 * m / z - r[m])
    return r


def dtn_coefficients(nmax, k, R):
    """``z_n(k) = k H_n'(kR) / H_n(kR)`` for ``n = 0 .. nmax``.

    Raises
    ------
    NearHankelZeroError
        if some ``H_n(kR)``, ``n <= nmax``, is numerically zero.
    """
    nmax = _check_order(nmax)
    k = _check_wavenumber(k, R)
    x = k * R
    r = hankel_ratios(nmax + 1, x)
    # |H_n| tiny vs neighbours  <=>  |r_n| huge  or  |r_{n+1}| tiny  (H_{-1} = -H_1)
    for n in range(nmax + 1):
        big_left = n >= 1 and abs(r[n]) > 1 / HANKEL_ZERO_GUARD
        small_right = abs(r[n + 1]) < HANKEL_ZERO_GUARD
        if big_left or small_right or not np.isfinite(r[n + 1]):
            raise NearHankelZeroError(
                f"H^(1)_{n}(kR) is numerically zero at k = {k:.6g}, R = {R:g}", order=n, argument=x)
    out = np.empty(nmax + 1, dtype=complex)
    out[0] = -k / r[1]
    n = np.arange(1, nmax + 1)
    out[1:] = k * r[1:nmax + 1] - n / R
    return out


def dtn_coefficient(n, k, R):
    """Single DtN coefficient ``z_n(k)``; see :func:`dtn_coefficients`."""
    n = _check_order(n)
    return complex(dtn_coefficients(n, k, R)[n])


def dtn_coefficients_dk(nmax, k, R):
    """``d z_n / dk`` for ``n = 0 .. nmax``.

    With ``q = H_n'(x)/H_n(x)``, ``x = kR``, Bessel's equation gives
    ``q' = -q/x - (1 - n^2/x^2) - q^2`` and ``z_n = k q``.
    """
    k = _check_wavenumber(k, R)
    x = k * R
    q = dtn_coefficients(nmax, k, R) / k
    n = np.arange(nmax + 1)
    dq = -q / x - (1 - n**2 / x**2) - q * q
    return q + k * R * dq


@dataclass(frozen=True)
class HankelRatioRequest:
    """Order, wavenumber and truncation radius for one DtN coefficient."""

    order: int
    wavenumber: complex
    radius: float

    def __post_init__(self):
        _check_order(self.order)
        _check_wavenumber(self.wavenumber, self.radius)

    def coefficient(self):
        return dtn_coefficient(self.order, self.wavenumber, self.radius)

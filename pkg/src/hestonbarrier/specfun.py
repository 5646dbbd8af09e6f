"""Special functions: modified Bessel I, Gamma, and Kummer's M.

Bessel I and Gamma are thin wrappers over scipy (AMOS and Cephes).  Kummer's
function has three entry points:

* ``kummer_m_approx`` - the closed form M(b+3/2; b+1/2; x) = (1 + 2x/(1+2b)) e^x;
* ``kummer_m_series`` - scalar reference, power series in multiprecision;
* ``kummer_m`` - vectorised double-precision evaluator (series or large-|z|
  asymptotics) used by the kernel assembly.
"""

from __future__ import annotations

import math

import mpmath as mp
import numpy as np
from scipy import special as sc

from .errors import NumericalOverflow, SeriesDivergence

OVERFLOW_RE = 700.0
SERIES_MAX_ABS = 50.0


def bessel_i(nu: float, z):
    """I_nu(z) for real order nu > -1 and complex z."""
    if nu <= -1.0:
        raise ValueError("order must exceed -1")
    z = np.asarray(z, dtype=complex)
    if np.any(z.real > OVERFLOW_RE):
        raise NumericalOverflow("Re(z) > 700: use bessel_i_scaled")
    out = sc.iv(nu, z)
    return out[()] if out.ndim == 0 else out


def bessel_i_scaled(nu: float, z):
    """exp(-|Re z|) I_nu(z)."""
    if nu <= -1.0:
        raise ValueError("order must exceed -1")
    z = np.asarray(z, dtype=complex)
    out = sc.ive(nu, z)
    return out[()] if out.ndim == 0 else out


def log_bessel_i_reduced(nu: float, w):
    """log of (w/2)^(-nu) I_nu(w), an even entire function of w.

    Power series for |w| <= 30, otherwise the scaled AMOS value with the
    power and exponential restored in log space.  Being even in w, no branch
    of w itself is ever chosen.
    """
    w = np.asarray(w, dtype=complex)
    out = np.empty_like(w)
    small = np.abs(w) <= 30.0
    if np.any(small):
        q = 0.25 * w[small] ** 2
        term = np.full(q.shape, 1.0 / math.gamma(nu + 1.0), dtype=complex)
        total = term.copy()
        for k in range(1, 200):
            term = term * q / (k * (k + nu))
            total += term
            if np.all(np.abs(term) <= 1e-17 * np.abs(total)):
                break
        out[small] = np.log(total)
    big = ~small
    if np.any(big):
        wb = w[big]
        ww = np.where(wb.real < 0, -wb, wb)
        out[big] = np.log(sc.ive(nu, ww)) + ww.real - nu * np.log(0.5 * ww)
    return out[()] if out.ndim == 0 else out


def bessel_i_reduced(nu: float, w):
    """(w/2)^(-nu) I_nu(w)."""
    out = np.exp(log_bessel_i_reduced(nu, w))
    return out[()] if np.ndim(out) == 0 else out


def gamma_fn(x):
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("gamma_fn is defined here for x > 0 only")
    out = sc.gamma(x)
    return float(out) if out.ndim == 0 else out


def kummer_m_approx(b: float, x):
    """M(b + 3/2; b + 1/2; x) = (1 + 2x / (1 + 2b)) exp(x), exact."""
    if b <= -0.5:
        raise ValueError("need b > -1/2")
    x = np.asarray(x, dtype=complex)
    out = (1.0 + 2.0 * x / (1.0 + 2.0 * b)) * np.exp(x)
    return out[()] if out.ndim == 0 else out


def _series_mp(a, b, z, dps):
    with mp.workdps(dps):
        z = mp.mpc(z)
        a, b = mp.mpf(a), mp.mpf(b)
        term = mp.mpc(1)
        total = mp.mpc(1)
        n = 0
        tiny = mp.mpf(10) ** (-dps + 2)
        while True:
            term *= (a + n) * z / ((b + n) * (n + 1))
            total += term
            n += 1
            if abs(term) <= tiny * abs(total) and n > abs(z):
                break
            if n > 20000:
                raise SeriesDivergence("Kummer series failed to converge")
        return total


def kummer_m_series(a: float, b: float, x) -> complex:
    """Reference M(a; b; x) from its power series, |x| <= 50.

    Uses Kummer's transformation M(a; b; x) = e^x M(b - a; b; -x) when
    Re(x) < 0, and raises the working precision by the number of digits the
    alternating series is expected to cancel.
    """
    if b <= 0 and float(b).is_integer():
        raise ValueError("b must not be a nonpositive integer")
    x = complex(x)
    if abs(x) > SERIES_MAX_ABS:
        raise SeriesDivergence(f"|x| = {abs(x):.3g} outside the series range")
    if x == 0:
        return 1.0 + 0j
    transform = x.real < 0
    aa, zz = (b - a, -x) if transform else (a, x)
    lost = (abs(zz) - zz.real) / math.log(10) + math.log10(1 + abs(zz))
    dps = int(30 + lost)
    val = _series_mp(aa, b, zz, dps)
    if transform:
        with mp.workdps(dps):
            val = mp.exp(mp.mpc(x)) * val
    return complex(val)


# ---------------------------------------------------------------------------
# vectorised evaluator
# ---------------------------------------------------------------------------

_ASYMPTOTIC_ABS = 22.0
_SERIES_TERMS = 400
_ASYM_TERMS = 60


def _series_np(a, b, z):
    term = np.ones_like(z)
    total = np.ones_like(z)
    a = np.broadcast_to(a, z.shape)
    for n in range(_SERIES_TERMS):
        term = term * (a + n) * z / ((b + n) * (n + 1))
        total = total + term
        if n > 4 and np.all(np.abs(term) <= 1e-17 * np.abs(total)):
            break
    return total


def _asym_sum(p, q, w):
    """sum_s (p)_s (q)_s / s! w^-s, truncated at the smallest term."""
    term = np.ones_like(w)
    total = np.ones_like(w)
    best = np.abs(term)
    live = np.ones(w.shape, dtype=bool)
    p = np.broadcast_to(p, w.shape)
    q = np.broadcast_to(q, w.shape)
    for s in range(_ASYM_TERMS):
        nxt = term * (p + s) * (q + s) / ((s + 1) * w)
        mag = np.abs(nxt)
        live &= mag < best
        total = np.where(live, total + nxt, total)
        best = np.where(live, mag, best)
        term = nxt
        if not np.any(live & (mag > 1e-17 * np.abs(total))):
            break
    return total


def log_kummer_m(a, b: float, z):
    """log M(a; b; z) elementwise (any continuous-enough branch of the log).

    ``a`` may be an array broadcastable against ``z``; ``b > 0``.  Small |z|
    uses the power series (on the Kummer-transformed side with Re >= 0 when
    that avoids cancellation); large |z| uses the two-term asymptotic
    expansion in the sector -pi/2 < arg z < 3pi/2 (mirrored for Im z < 0).
    """
    z = np.asarray(z, dtype=complex)
    a = np.broadcast_to(np.asarray(a, dtype=float), z.shape)
    out = np.empty(z.shape, dtype=complex)
    absz = np.abs(z)
    # the series loses about (|z| - |Re z|) / ln 10 digits to cancellation
    big = (absz > _ASYMPTOTIC_ABS) & ((absz - np.abs(z.real) > 15.0) | (absz > 60.0))

    sm = ~big
    if np.any(sm):
        zs, as_ = z[sm], a[sm]
        neg = zs.real < 0
        direct = _series_np(as_, b, zs)
        trans = _series_np(b - as_, b, -zs)
        out[sm] = np.where(neg, zs + np.log(trans + 0j), np.log(direct + 0j))

    if np.any(big):
        zb, ab = z[big], a[big]
        # sector mirroring: use conj symmetry for Im z < 0
        mirror = zb.imag < 0
        zz = np.where(mirror, np.conj(zb), zb)
        # DLMF 13.7.2 with the upper sign (valid for -pi/2 < ph z < 3pi/2)
        lgb = sc.loggamma(b)
        t1 = (
            lgb - sc.loggamma((b - ab) + 0j) + 1j * np.pi * ab - ab * np.log(zz)
            + np.log(_asym_sum(ab, ab - b + 1.0, -zz) + 0j)
        )
        t2 = (
            lgb - sc.loggamma(ab + 0j) + zz + (ab - b) * np.log(zz)
            + np.log(_asym_sum(b - ab, 1.0 - ab, zz) + 0j)
        )
        # 1/Gamma of a nonpositive integer vanishes: drop that term
        t1 = np.where(_is_nonpos_int(b - ab), -np.inf + 0j, t1)
        t2 = np.where(_is_nonpos_int(ab), -np.inf + 0j, t2)
        hi = np.where(t1.real >= t2.real, t1, t2)
        lo = np.where(t1.real >= t2.real, t2, t1)
        with np.errstate(invalid="ignore"):
            res = hi + np.log1p(np.exp(lo - hi))
        res = np.where(np.isfinite(lo.real), res, hi)
        out[big] = np.where(mirror, np.conj(res), res)
    return out


def _is_nonpos_int(x):
    return (x <= 0) & (np.abs(x - np.round(x)) < 1e-14)


def kummer_m(a, b: float, z):
    """M(a; b; z) elementwise in double precision (see ``log_kummer_m``)."""
    out = np.exp(log_kummer_m(a, b, z))
    return out[()] if out.ndim == 0 else out

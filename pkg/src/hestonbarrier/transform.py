"""Image-space coefficient functions on the inversion rays sqrt(p) = -/+ i xi.

For each xi the transformed price is exponentially affine in v,
``u(t, v) = U(t, z) exp(alpha(t) v + beta(t))`` with ``z = g(t) sqrt(v)``,
where alpha solves a Riccati equation backward from ``alpha(T) = 0``.  With
piecewise-constant coefficients every quantity below has a closed form on
each interval, so the cache is exact up to rounding for any time grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DegenerateCorrelation, DegenerateKappaBar, NumericalOverflow
from .model import HestonModel

POLE_TOL = 1e-12
_MAX_BISECT = 30


class Branch(Enum):
    MINUS_I_XI = -1
    PLUS_I_XI = 1


@dataclass(frozen=True)
class SqrtP:
    """sqrt(p) = -i xi (MINUS_I_XI) or +i xi (PLUS_I_XI); p = -xi**2 on both."""

    branch: Branch
    xi: np.ndarray

    def __post_init__(self) -> None:
        xi = np.atleast_1d(np.asarray(self.xi, dtype=float))
        if np.any(xi < 0):
            raise ValueError("xi must be nonnegative")
        object.__setattr__(self, "xi", xi)

    @classmethod
    def minus(cls, xi) -> "SqrtP":
        return cls(Branch.MINUS_I_XI, xi)

    @classmethod
    def plus(cls, xi) -> "SqrtP":
        return cls(Branch.PLUS_I_XI, xi)

    @property
    def value(self) -> np.ndarray:
        return self.branch.value * 1j * self.xi

    @property
    def p(self) -> np.ndarray:
        return -(self.xi**2) + 0j


def aux_coeffs(model: HestonModel, sqrtp, t: float):
    """(a, c, kappa_bar, theta_bar) at time ``t`` for each sqrt(p).

    a = r (sqrt p - 1) - q sqrt p,  c = (p - sqrt p) / 2,
    kappa_bar = kappa - rho sigma sqrt p,  theta_bar = theta kappa / kappa_bar.
    """
    sp = sqrtp.value if isinstance(sqrtp, SqrtP) else np.asarray(sqrtp, dtype=complex)
    kappa, theta, sigma, rho, r, q = model.coeffs(t)
    a = r * (sp - 1.0) - q * sp
    c = 0.5 * (sp * sp - sp)
    kappa_bar = kappa - rho * sigma * sp
    if np.any(np.abs(kappa_bar) < 1e-14):
        raise DegenerateKappaBar(f"kappa_bar vanishes at t={t}")
    theta_bar = theta * kappa / kappa_bar
    return a, c, kappa_bar, theta_bar


def _half_tanh_over(D, h):
    """tanh(D h / 2) / D, with the D -> 0 limit h / 2."""
    x = 0.5 * D * h
    small = np.abs(x) < 1e-8
    Dsafe = np.where(small, 1.0, D)
    return np.where(small, 0.5 * h * (1.0 - x * x / 3.0), np.tanh(x) / Dsafe)


def _discriminant_root(kappa_bar, sigma, c):
    """D = sqrt(kappa_bar^2 - 2 c sigma^2) with Re(D) >= 0 (principal root).

    D = -i C for C = sqrt(2 c sigma^2 - kappa_bar^2); every formula here is even
    in D, so the choice of root does not matter.
    """
    return np.sqrt(kappa_bar * kappa_bar - 2.0 * c * sigma * sigma + 0j)


def riccati_segment(alpha_end, kappa_bar, sigma, c, dt):
    """alpha at the start of an interval of length ``dt`` given alpha at its end.

    Closed-form solution of alpha' = -c + kappa_bar alpha - sigma^2 alpha^2 / 2
    with constant coefficients, written as a Moebius map of ``alpha_end`` so
    no tangent of a large argument is ever formed.
    """
    alpha_end = np.asarray(alpha_end, dtype=complex)
    if np.any(np.asarray(dt) < 0):
        raise ValueError("dt must be nonnegative")
    if np.all(np.asarray(dt) == 0):
        return alpha_end.copy()
    D = _discriminant_root(kappa_bar, sigma, c)
    ch = np.cosh(0.5 * D * dt)
    if np.any(np.abs(ch) < POLE_TOL):
        return _bisected_step(alpha_end, kappa_bar, sigma, c, dt, 0)
    th = _half_tanh_over(D, dt)
    den = 1.0 + (kappa_bar - alpha_end * sigma * sigma) * th
    if np.any(np.abs(den) < 1e-300) or not np.all(np.isfinite(th)):
        raise NumericalOverflow("Riccati solution blows up inside the interval")
    return (alpha_end + (2.0 * c - kappa_bar * alpha_end) * th) / den


def _bisected_step(alpha_end, kappa_bar, sigma, c, dt, depth):
    if depth > _MAX_BISECT:
        raise NumericalOverflow("tangent pole could not be avoided by bisection")
    half = 0.5 * np.asarray(dt)
    D = _discriminant_root(kappa_bar, sigma, c)
    if np.any(np.abs(np.cosh(0.5 * D * half)) < POLE_TOL):
        mid = _bisected_step(alpha_end, kappa_bar, sigma, c, half, depth + 1)
        return _bisected_step(mid, kappa_bar, sigma, c, half, depth + 1)
    mid = riccati_segment(alpha_end, kappa_bar, sigma, c, half)
    return riccati_segment(mid, kappa_bar, sigma, c, half)


def _interval_terms(alpha_end, kappa_bar, sigma, c, h):
    """Closed-form interval quantities given alpha at the interval's right end.

    Returns (alpha_start, log_u, g2_ratio_integral) where, with backward time
    tau' = t_end - s,

      log_u  = log u(h), u = exp(-kappa_bar tau'/2) [cosh(D tau'/2) + k sinh(D tau'/2)],
               so that int alpha ds = -2 log_u / sigma^2 over the interval;
      g2int  = int g(s)^2 ds / g(t_end)^2 = 2 tanh(D h/2) / (D (1 + k tanh(D h/2))).
    """
    D = _discriminant_root(kappa_bar, sigma, c)
    x = 0.5 * D * h
    tho = _half_tanh_over(D, h)  # tanh(x)/D
    kD = kappa_bar - sigma * sigma * alpha_end  # k * D
    den = 1.0 + kD * tho  # 1 + k tanh(x)
    if np.any(np.abs(den) < 1e-300):
        raise NumericalOverflow("Riccati solution blows up inside the interval")
    alpha_start = (alpha_end + (2.0 * c - kappa_bar * alpha_end) * tho) / den
    # log cosh x for Re x >= 0 without overflow
    log_cosh = x + np.log1p(np.exp(-2.0 * x)) - np.log(2.0)
    log_u = -0.5 * kappa_bar * h + log_cosh + np.log(den)
    g2int = 2.0 * tho / den
    return alpha_start, log_u, g2int


@dataclass(frozen=True)
class TransformCache:
    """alpha, beta, log g, tau on a time grid for a batch of sqrt(p) values.

    Arrays have shape (n_xi, n_times).  ``g = exp(log_g)`` is tracked through
    its logarithm so complex powers of g use a continuous branch.  For large
    xi, g(T) is astronomically large, so tau is stored as
    ``tau_hat = tau / g(T)^2``; the Green's-function kernel is invariant under
    (g, tau) -> (g / g(T), tau / g(T)^2), which is how it is consumed.
    """

    sqrtp: np.ndarray
    times: np.ndarray
    maturity: float
    alpha: np.ndarray
    beta: np.ndarray
    log_g: np.ndarray
    tau_hat: np.ndarray
    tau_inc: np.ndarray | None = None  # per interval: int g^2 sigma^2 / 4 over g(right end)^2

    @property
    def log_g_hat(self) -> np.ndarray:
        """log(g(t) / g(T))."""
        return self.log_g - self.log_g[:, -1:]

    @property
    def tau(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return self.tau_hat * np.exp(2.0 * self.log_g[:, -1:])

    @property
    def xi(self) -> np.ndarray:
        return np.abs(self.sqrtp.imag)

    @property
    def g(self) -> np.ndarray:
        return np.exp(self.log_g)

    def index(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        idx = np.searchsorted(self.times, t)
        idx = np.clip(idx, 0, len(self.times) - 1)
        # tolerate rounding in requested times
        left = np.clip(idx - 1, 0, len(self.times) - 1)
        pick = np.where(np.abs(self.times[left] - t) < np.abs(self.times[idx] - t), left, idx)
        if np.any(np.abs(self.times[pick] - t) > 1e-12 * max(1.0, self.maturity)):
            raise KeyError(f"times {t} not on cache grid")
        return pick

    def at(self, t):
        """(alpha, beta, log g_hat, tau_hat) at time(s) t, each (n_xi, len(t))."""
        i = self.index(t)
        return self.alpha[:, i], self.beta[:, i], self.log_g_hat[:, i], self.tau_hat[:, i]

    def elapsed(self, t: float, s) -> np.ndarray:
        """(tau(t) - tau(s)) / g(s)^2 for t <= s, shape (n_xi, len(s)).

        Summed interval by interval between t and s, so there is no
        cancellation when tau saturates (large xi).
        """
        i_t = int(self.index(t)[0])
        i_s = self.index(s)
        if np.any(i_s < i_t):
            raise ValueError("elapsed needs t <= s")
        j = np.arange(len(self.times) - 1)
        live = (j[:, None] >= i_t) & (j[:, None] < i_s[None, :])  # (n_int, n_s)
        rel = 2.0 * (self.log_g[:, 1:, None] - self.log_g[:, None, i_s])  # (n_xi, n_int, n_s)
        with np.errstate(over="ignore", invalid="ignore"):
            terms = np.where(live[None], self.tau_inc[:, :, None] * np.exp(np.where(live[None], rel, 0.0)), 0.0)
        return terms.sum(axis=1)

    def conj(self) -> "TransformCache":
        return TransformCache(
            np.conj(self.sqrtp), self.times, self.maturity,
            np.conj(self.alpha), np.conj(self.beta), np.conj(self.log_g), np.conj(self.tau_hat),
            None if self.tau_inc is None else np.conj(self.tau_inc),
        )


def _segment_coeffs(model: HestonModel, sp: np.ndarray, t_mid: float):
    # sampled at the interval midpoint: robust to grid points merged with breakpoints
    a, c, kappa_bar, _ = aux_coeffs(model, sp, t_mid)
    kappa, theta, sigma, rho, r, q = model.coeffs(t_mid)
    return a, c, kappa_bar, sigma, kappa * theta


def build_cache(model: HestonModel, sqrtp, time_grid, maturity: float) -> TransformCache:
    """Exact piecewise-analytic evaluation of alpha, beta, g, tau.

    alpha(T) = 0 and beta(T) = tau(T) = 0; g(0) = 1.  The internal grid is the
    union of ``time_grid``, 0, T and the model breakpoints so that the
    coefficients are constant on every interval.
    """
    sp = sqrtp.value if isinstance(sqrtp, SqrtP) else np.atleast_1d(np.asarray(sqrtp, dtype=complex))
    sp = sp.astype(complex)
    req = np.atleast_1d(np.asarray(time_grid, dtype=float))
    if np.any(req < -1e-14) or np.any(req > maturity * (1 + 1e-12)):
        raise ValueError("time grid must lie in [0, T]")
    bps = model.breakpoints()
    grid = np.unique(np.concatenate([[0.0, maturity], np.clip(req, 0.0, maturity), bps[bps < maturity]]))
    # merge points closer than rounding noise
    keep = np.concatenate([[True], np.diff(grid) > 1e-14 * max(1.0, maturity)])
    grid = grid[keep]
    grid[-1] = maturity
    n_t = len(grid)
    n_xi = sp.shape[0]

    alpha = np.zeros((n_xi, n_t), dtype=complex)
    beta = np.zeros((n_xi, n_t), dtype=complex)
    log_u = np.zeros((n_xi, n_t - 1), dtype=complex)
    g2int = np.zeros((n_xi, n_t - 1), dtype=complex)
    kbar = np.zeros((n_xi, n_t - 1), dtype=complex)
    sig = np.zeros(n_t - 1)

    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(n_t - 2, -1, -1):
            h = grid[j + 1] - grid[j]
            a, c, kappa_bar, sigma, kth = _segment_coeffs(model, sp, 0.5 * (grid[j] + grid[j + 1]))
            a_start, lu, gi = _interval_terms(alpha[:, j + 1], kappa_bar, sigma, c, h)
            alpha[:, j] = a_start
            log_u[:, j] = lu
            g2int[:, j] = gi
            kbar[:, j] = kappa_bar
            sig[j] = sigma
            beta[:, j] = beta[:, j + 1] + a * h - 2.0 * kth / sigma**2 * lu

        log_g = np.zeros((n_xi, n_t), dtype=complex)
        for j in range(n_t - 1):
            h = grid[j + 1] - grid[j]
            log_g[:, j + 1] = log_g[:, j] + 0.5 * kbar[:, j] * h + log_u[:, j]

        inc = 0.25 * sig[None, :] ** 2 * g2int
        tau = np.zeros((n_xi, n_t), dtype=complex)
        for j in range(n_t - 2, -1, -1):
            ghat2 = np.exp(2.0 * (log_g[:, j + 1] - log_g[:, -1]))
            tau[:, j] = tau[:, j + 1] + ghat2 * inc[:, j]

    if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(tau))):
        raise NumericalOverflow("non-finite values in transform cache")
    return TransformCache(sp, grid, float(maturity), alpha, beta, log_g, tau, inc)


def riccati_path(model: HestonModel, sqrtp, time_grid, maturity: float | None = None) -> np.ndarray:
    """alpha on ``time_grid`` (shape (n_xi, n_times)) by backward recursion from alpha(T) = 0."""
    grid = np.atleast_1d(np.asarray(time_grid, dtype=float))
    T = float(grid[-1]) if maturity is None else maturity
    cache = build_cache(model, sqrtp, grid, T)
    return cache.at(grid)[0]


def branch_points(model: HestonModel, t: float) -> tuple[float, float]:
    """Real critical points of C(t, p) = sqrt(2 c sigma^2 - kappa_bar^2) in sqrt(p).

    Diagnostic only: C^2 = (1 - rho^2) sigma^2 (sqrt p - p+)(sqrt p - p-).
    """
    kappa, theta, sigma, rho, r, q = model.coeffs(t)
    if abs(abs(rho) - 1.0) < 1e-14:
        raise DegenerateCorrelation("|rho| = 1 leaves a single branch point")
    disc = 4.0 * kappa**2 - 4.0 * kappa * rho * sigma + sigma**2
    root = np.sqrt(disc)
    den = 2.0 * (1.0 - rho**2) * sigma
    num = sigma - 2.0 * kappa * rho
    return float((num + root) / den), float((num - root) / den)

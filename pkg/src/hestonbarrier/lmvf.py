"""Collocation solve of the integral equation for the boundary gradient Phi.

Phi(t, v) = P_x(t, y(t), v) / 2 satisfies

    Phi(t, v) + 1/(2 pi) int_t^T ds int_0^inf dv' Phi(s, v') K(s, v', t, v) = f(t, v),

    f = 1/pi  int_0^U xi Im[P1(t, v, -i xi) e^{-i xi y(t)}] d xi,
    K = int_0^U xi Im[Kf(s, v', t, v, -i xi) e^{-i xi y(t)}] d xi,

with ``Kf`` from ``greens.kernel_frak``.  Phi is expanded on the basis

    Theta_kl(s, nu) = (nu / nu_l)^(2 eps nu_l^2) exp(-eps [nu^2 - nu_l^2 + (s - t_k)^2]),

nu = sqrt(v), for which the v'-integral of Theta * Kf has a closed form in
Gamma and Kummer functions.  What remains is a Simpson rule in s and an
adaptive Gauss-Kronrod rule in xi, shared by all matrix entries of a row.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.sparse.linalg import minres
from scipy.special import loggamma

from .errors import ConfigError, NoConvergence
from .model import BarrierContract, HestonModel, log_barrier
from .oscquad import QuadConfig, default_panels, integrate_gk, simpson_rule
from .specfun import log_kummer_m
from .transform import SqrtP, build_cache

log = logging.getLogger(__name__)

TABLE_EPSILON = {45.0: 3.0, 50.0: 5.0}
DEFAULT_EPSILON = 4.0


def default_epsilon(strike: float) -> float:
    return TABLE_EPSILON.get(float(strike), DEFAULT_EPSILON)


# ---------------------------------------------------------------------------
# grid and basis
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CollocationGrid:
    t_nodes: np.ndarray
    v_nodes: np.ndarray
    epsilon: float

    def __post_init__(self) -> None:
        t = np.asarray(self.t_nodes, dtype=float)
        v = np.asarray(self.v_nodes, dtype=float)
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        if np.any(v <= 0):
            raise ConfigError("variance nodes must be strictly positive")
        object.__setattr__(self, "t_nodes", t)
        object.__setattr__(self, "v_nodes", v)

    @property
    def size(self) -> int:
        return len(self.t_nodes) * len(self.v_nodes)

    def centers(self):
        """(t_k, v_l) pairs, t-major (the row/column order of the system)."""
        tt, vv = np.meshgrid(self.t_nodes, self.v_nodes, indexing="ij")
        return tt.ravel(), vv.ravel()


def collocation_grid(
    t0: float,
    maturity: float,
    v0: float,
    epsilon: float,
    n_t: int = 10,
    n_v: int = 8,
    v_m: float = 0.3,
) -> CollocationGrid:
    """Nodes t0 + k (T - t0) / n_t, k < n_t, and n_v uniform variances in [v0 - v_m, v0 + v_m].

    t = T is left out: its Volterra range is empty and its free term
    diverges with the truncation point.
    """
    if n_t < 1 or n_v < 1:
        raise ConfigError("need at least one node per axis")
    if maturity <= t0:
        raise ConfigError("maturity must exceed t0")
    t = t0 + (maturity - t0) * np.arange(n_t) / n_t
    v = np.linspace(v0 - v_m, v0 + v_m, n_v) if n_v > 1 else np.array([v0])
    if np.any(v <= 0):
        raise ConfigError("v0 - v_m must stay positive")
    return CollocationGrid(t, v, epsilon)


def basis_theta(s, nu, center, eps: float):
    """Theta_kl(s, nu) for center (t_k, nu_l) with nu_l > 0."""
    t_k, nu_l = center
    s = np.asarray(s, dtype=float)
    nu = np.asarray(nu, dtype=float)
    p = 2.0 * eps * nu_l**2
    with np.errstate(divide="ignore"):
        lg = p * (np.log(nu) - math.log(nu_l)) - eps * (nu**2 - nu_l**2 + (s - t_k) ** 2)
    out = np.where(nu > 0, np.exp(lg), 0.0)
    return out[()] if out.ndim == 0 else out


def theta_matrix(grid: CollocationGrid, t_rows, v_rows) -> np.ndarray:
    """Theta_col(t_row, sqrt(v_row)) for all row/column pairs."""
    tk, vl = grid.centers()
    tr = np.asarray(t_rows)[:, None]
    vr = np.asarray(v_rows)[:, None]
    eps = grid.epsilon
    lg = eps * vl[None, :] * (np.log(vr) - np.log(vl)[None, :]) - eps * (vr - vl[None, :] + (tr - tk[None, :]) ** 2)
    return np.exp(lg)


# ---------------------------------------------------------------------------
# closed-form v'-integral
# ---------------------------------------------------------------------------


def log_reduced_j(a2, x, a4, b: float, exact: bool = True):
    """log of  e^{-x} int_0^inf nu^(2 a4 - 1) e^{-a2 nu^2} I~(a3 nu) d nu,  x = a3^2/(4 a2).

    I~ is the reduced Bessel function of order b - 1/2.  The integral equals
    (1/2) a2^-a4 Gamma(a4)/Gamma(b+1/2) M(a4; b+1/2; x); Kummer's transformation
    turns e^{-x} M(a4; b'; x) into M(b' - a4; b'; -x), which stays bounded.
    With ``exact=False`` a4 is replaced by b + 3/2, where M is elementary:
    Gamma ratio * M = (b + 1/2 + x) e^x.
    """
    bp = b + 0.5
    a2 = np.asarray(a2, dtype=complex)
    x = np.asarray(x, dtype=complex)
    if exact:
        a4 = np.asarray(a4, dtype=float)
        shape = np.broadcast(a2, x, a4).shape
        a4 = np.broadcast_to(a4, shape)
        return (
            -math.log(2.0) - a4 * np.log(a2) + loggamma(a4) - loggamma(bp)
            + log_kummer_m(bp - a4, bp, -np.broadcast_to(x, shape))
        )
    return -math.log(2.0) - (b + 1.5) * np.log(a2) + np.log(bp + x)


def inner_J_closed(a0, a1, a2, a3, b: float, exact: bool = True, c1=1.0):
    """a0 int_0^inf nu^a1 exp(-a2 nu^2) I_{b-1/2}(a3 nu) d nu in closed form.

    = a0 2^(-b-1/2) a3^(b-1/2) a2^(-a4) Gamma(a4)/Gamma(b+1/2) M(a4; b+1/2; a3^2/(4 a2)),
    a4 = (2 a1 + 2 b + 1) / 4, valid for Re(a2) > 0.  ``exact=False`` uses the
    elementary M(b+3/2; b+1/2; x) form (a4 -> b + 3/2) times ``c1``.
    """
    a2 = np.asarray(a2, dtype=complex)
    a3 = np.asarray(a3, dtype=complex)
    a4 = (2.0 * np.asarray(a1, dtype=float) + 2.0 * b + 1.0) / 4.0
    x = a3 * a3 / (4.0 * a2)
    lj = log_reduced_j(a2, x, a4, b, exact) + x
    out = a0 * c1 * np.exp(lj + (b - 0.5) * np.log(0.5 * a3))
    return out[()] if np.ndim(out) == 0 else out


def column_image(xi, cache, t, s_nodes, v_rows, v_cols, eps, b, y_t, y_s, exact=True):
    """e^{-i xi y(t)} int_0^inf dv' Theta_l(., sqrt v') Kf(s, v', t, v) without e^{-eps (s-t_k)^2}.

    Shape (n_xi, n_s, n_rows, n_cols).  Nodes with s == t get the delta limit
    2 v Theta_l(t, sqrt v) e^{-y(t) sqrt p}, which is real after the phase.
    """
    sp = -1j * xi
    a_t, b_t, lg_t, _ = (q[:, 0] for q in cache.at([t]))
    a_s, b_s, lg_s, _ = cache.at(s_nodes)
    # scale by g(s): g(s) -> 1, g(t) -> g(t)/g(s), tau(t) - tau(s) -> elapsed
    lg_rel = lg_t[:, None] - lg_s
    d_rel = cache.elapsed(t, s_nodes)

    X = lambda q: q[:, :, None, None]  # noqa: E731  (n_xi, n_s) -> 4-D
    R = lambda q: q[:, None, None, None]  # noqa: E731  (n_xi,) -> 4-D
    v = np.asarray(v_rows, dtype=float)[None, None, :, None]
    vl = np.asarray(v_cols, dtype=float)[None, None, None, :]
    ys = np.asarray(y_s, dtype=float)[None, :, None, None]

    diag = np.abs(np.asarray(s_nodes) - t) < 1e-13 * max(1.0, abs(t) + 1.0)
    d = np.where(diag[None, :, None, None], 1.0, X(d_rel))
    z2 = np.exp(2.0 * X(lg_rel)) * v
    a_s4 = X(a_s)
    den = 2.0 * d * (eps + a_s4) + 1.0  # = 2 d a2
    a2 = den / (2.0 * d)
    x = z2 / (2.0 * d * den)
    e_tot = -z2 * (eps + a_s4) / den
    a4 = b + 1.5 + eps * vl
    lj = log_reduced_j(a2, x, a4, b, exact)
    lpre = (
        (1.5 - b) * math.log(2.0) + eps * vl * (1.0 - np.log(vl)) - (b + 0.5) * np.log(d)
    )
    if not exact:
        # restores the correct s -> t limit lost by dropping eps v_l from a4
        lpre = lpre + eps * vl * np.log(v)
    # -y(s) sqrt p - i xi y(t) = -(y(s) - y(t)) sqrt p: only log(L(s)/L(t)) enters,
    # so the matrix does not depend on the strike
    shift = ys - y_t
    lexp = -shift * R(sp) + R(a_t) * v + R(b_t) - X(b_s)
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.exp(lpre + lj + e_tot + lexp)
    if np.any(diag):
        lim = 2.0 * v * np.exp(eps * vl * (np.log(v) - np.log(vl)) - eps * (v - vl))
        lim = np.broadcast_to(lim * np.exp(-shift * R(sp)), out.shape)
        out = np.where(diag[None, :, None, None], lim, out)
    return out


# ---------------------------------------------------------------------------
# free term
# ---------------------------------------------------------------------------


def p1_image(sp, alpha, beta, v, strikes, y_T):
    """P1 = K [(e^{-y_T s} - 1)/s - (e^{-y_T (s-1)} - 1)/(s - 1)] e^{beta + alpha v}, s = sqrt p.

    Broadcasting: ``sp``, ``alpha``, ``beta`` (n_xi, 1); ``v`` scalar or
    array; ``strikes`` and ``y_T`` (n_K,).
    """
    sp = np.asarray(sp, dtype=complex)
    K = np.asarray(strikes, dtype=float)
    yT = np.asarray(y_T, dtype=float)
    small = np.abs(sp) < 1e-12
    safe = np.where(small, 1.0, sp)
    first = np.where(small, -yT, (np.exp(-yT * sp) - 1.0) / safe)
    second = (np.exp(-yT * (sp - 1.0)) - 1.0) / (sp - 1.0)
    return K * (first - second) * np.exp(beta + alpha * v)


# ---------------------------------------------------------------------------
# system
# ---------------------------------------------------------------------------


@dataclass
class LmvfSystem:
    grid: CollocationGrid
    matrix: np.ndarray
    rhs: np.ndarray  # (n_rows, n_strikes)
    strikes: np.ndarray
    theta: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def asymmetry(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.T)))


@dataclass
class BoundaryGradient:
    grid: CollocationGrid
    coeffs: np.ndarray  # (n_basis,)
    strike: float
    residual: float = float("nan")
    solver: str = ""

    def __call__(self, t, v):
        tk, vl = self.grid.centers()
        t = np.atleast_1d(np.asarray(t, dtype=float))
        v = np.atleast_1d(np.asarray(v, dtype=float))
        eps = self.grid.epsilon
        lg = eps * vl[None, :] * (np.log(v)[:, None] - np.log(vl)[None, :]) - eps * (
            v[:, None] - vl[None, :] + (t[:, None] - tk[None, :]) ** 2
        )
        return np.exp(lg) @ self.coeffs


def _row_times(t, T, n_simpson):
    return simpson_rule(t, T, n_simpson)


def _oscillation_edges(upsilon, freq):
    wl = 2.0 * np.pi / freq if freq > 0 else None
    return default_panels(0.0, upsilon, wl)


def _row_integrals(model, contract, t, v_rows, v_cols, eps, quad, strikes, weight, exact, row_t_nodes=None, freq=0.0):
    """xi-integrals shared by one row time t.

    Returns (Y, F): Y[s, r, l] = int w(xi) Im[column_image] and
    F[r, K] = int w(xi) Im[P1 e^{-i xi y(t)}], where ``weight`` maps xi to w.
    """
    T = contract.maturity
    s_nodes, _ = _row_times(t, T, quad.simpson_nodes) if row_t_nodes is None else row_t_nodes
    y_t = float(log_barrier(contract, t))
    y_s = np.asarray(log_barrier(contract, s_nodes), dtype=float)
    strikes = np.asarray(strikes, dtype=float)
    y_T = np.log(float(contract.barrier(T)) / strikes)
    y_t_K = np.log(float(contract.barrier(t)) / strikes)
    times = np.unique(np.concatenate([[t], s_nodes]))
    n_s, n_r, n_l, n_k = len(s_nodes), len(v_rows), len(v_cols), len(strikes)
    vr = np.asarray(v_rows, dtype=float)

    def integrand(xi):
        cache = build_cache(model, SqrtP.minus(xi), times, T)
        w = weight(xi)
        col = column_image(xi, cache, t, s_nodes, v_rows, v_cols, eps, model.b, y_t, y_s, exact)
        a_t, b_t = cache.at([t])[0], cache.at([t])[1]
        sp = (-1j * xi)[:, None, None]
        p1 = p1_image(sp, a_t[:, :, None], b_t[:, :, None], vr[None, :, None], strikes[None, None, :], y_T)
        p1 = p1 * np.exp(-1j * xi[:, None, None] * y_t_K[None, None, :])
        ker = (w[:, None, None, None] * col.imag).reshape(len(xi), -1)
        free = (w[:, None, None] * p1.imag).reshape(len(xi), -1)
        return np.concatenate([ker, free], axis=1)

    edges = _oscillation_edges(quad.upsilon, freq)
    val, err = integrate_gk(integrand, 0.0, quad.upsilon, quad, edges=edges, strict=False)
    Y = val[: n_s * n_r * n_l].reshape(n_s, n_r, n_l)
    F = val[n_s * n_r * n_l :].reshape(n_r, n_k)
    return Y, F, float(np.max(err))


def assemble(grid: CollocationGrid, model: HestonModel, contract: BarrierContract, quad: QuadConfig,
             strikes=None, exact: bool = True, row_t=None, row_v=None) -> LmvfSystem:
    """Dense collocation matrix (shared by all strikes) and one RHS per strike.

    A[row, col] = Theta_col(row) + W[row, col] / (2 pi),
    W = sum_s w_s e^{-eps (s - t_k)^2} int xi Im[column_image] d xi.

    Rows are the tensor grid ``row_t x row_v`` (the basis centres by
    default); more rows than columns give an oversampled least-squares system.
    """
    strikes = np.atleast_1d(np.asarray([contract.strike] if strikes is None else strikes, dtype=float))
    T = contract.maturity
    eps = grid.epsilon
    row_t = grid.t_nodes if row_t is None else np.asarray(row_t, dtype=float)
    row_v = grid.v_nodes if row_v is None else np.asarray(row_v, dtype=float)
    if np.any(row_t >= T) or np.any(row_v <= 0):
        raise ConfigError("collocation rows need t < T and v > 0")
    n_v = len(row_v)
    rt, rv = np.meshgrid(row_t, row_v, indexing="ij")
    theta = theta_matrix(grid, rt.ravel(), rv.ravel())
    n_rows = rt.size
    W = np.zeros((n_rows, grid.size))
    rhs = np.zeros((n_rows, len(strikes)))
    max_err = 0.0
    for i, t in enumerate(row_t):
        sl = slice(i * n_v, (i + 1) * n_v)
        s_nodes, w_s = simpson_rule(t, T, quad.simpson_nodes)
        Y, F, e = _row_integrals(
            model, contract, t, row_v, grid.v_nodes, eps, quad, strikes, lambda xi: xi, exact,
            row_t_nodes=(s_nodes, w_s),
        )
        max_err = max(max_err, e)
        rhs[sl] = F / np.pi
        # column (k, l): sum over s of w_s e^{-eps (s - t_k)^2} Y[s, r, l]
        tw = w_s[:, None] * np.exp(-eps * (s_nodes[:, None] - grid.t_nodes[None, :]) ** 2)  # (n_s, n_t)
        W[sl] = np.einsum("sk,srl->rkl", tw, Y).reshape(n_v, -1)
    A = theta + W / (2.0 * np.pi)
    system = LmvfSystem(grid, A, rhs, strikes, theta, {"max_quad_err": max_err})
    if A.shape[0] == A.shape[1]:
        system.diagnostics["asymmetry"] = system.asymmetry
    log.info("assembled %dx%d system", A.shape[0], A.shape[1])
    return system


SOLVERS = ("tsvd", "minres", "lu")


def solve(system: LmvfSystem, method: str = "tsvd", tol: float = 1e-8, rcond: float = 1e-10,
          fallback_residual: float = 1e-4):
    """Coefficients for every strike against the shared matrix.

    ``tsvd``: least squares with singular values below ``rcond * s_max``
    discarded.  The Gaussian-type basis makes A numerically rank deficient
    (condition numbers near 1e18), so this is the default.
    ``minres``: MINRES on (A + A^T)/2, falling back to ``tsvd`` when the
    residual of the unsymmetrised system exceeds ``fallback_residual``.
    ``lu``: plain dense solve.
    """
    if method not in SOLVERS:
        raise ConfigError(f"unknown solver {method!r}; choose from {SOLVERS}")
    A = system.matrix
    n = A.shape[0]
    F = system.rhs
    norms = np.maximum(np.linalg.norm(F, axis=0), 1e-300)
    used = [method] * F.shape[1]
    if method == "tsvd":
        C = np.linalg.lstsq(A, F, rcond=rcond)[0]
    elif method == "lu":
        C = linalg.lu_solve(linalg.lu_factor(A), F)
    else:
        sym = 0.5 * (A + A.T)
        C = np.empty_like(F)
        for j in range(F.shape[1]):
            C[:, j], info = minres(sym, F[:, j], rtol=tol, maxiter=10 * n)
            res = np.linalg.norm(A @ C[:, j] - F[:, j]) / norms[j]
            if info != 0 or res > fallback_residual:
                log.info("MINRES residual %.3g (info %d); using truncated SVD", res, info)
                C[:, j] = np.linalg.lstsq(A, F[:, j], rcond=rcond)[0]
                used[j] = "tsvd"
    residuals = np.linalg.norm(A @ C - F, axis=0) / norms
    out = []
    for j, K in enumerate(system.strikes):
        if not np.all(np.isfinite(C[:, j])):
            raise NoConvergence(f"non-finite coefficients for K={K}", [residuals[j]])
        out.append(BoundaryGradient(system.grid, C[:, j].copy(), float(K), float(residuals[j]), used[j]))
    return out


# ---------------------------------------------------------------------------
# positivity surrogate
# ---------------------------------------------------------------------------


def positivity_f(omega, nu_l, eps, w: float = 8.0):
    """F(omega) = w / sqrt(2 pi) + A eps^(-1/2-a) Gamma(1/2+a) M(1/2+a; 1/2; -omega^2/(4 eps)).

    a = eps nu_l^2 and A = e^{eps nu_l^2} nu_l^(-2a) / sqrt(2 pi): the Fourier
    transform in nu of the even extension of Theta plus the point-mass term.
    """
    omega = np.asarray(omega, dtype=float)
    a = eps * nu_l**2
    logA = eps * nu_l**2 - 2.0 * a * math.log(nu_l) - 0.5 * math.log(2.0 * math.pi)
    lm = log_kummer_m(0.5 + a, 0.5, -(omega**2) / (4.0 * eps) + 0j)
    term = np.exp(logA - (0.5 + a) * math.log(eps) + loggamma(0.5 + a) + lm).real
    return w / math.sqrt(2.0 * math.pi) + term
